import itertools

import numpy as np
import pytest
import scipy.sparse as sp

from conftest import assert_feasible, toy_case
from v2gsiting.core import CandidateStation, Instance, InstanceParams, Route
from v2gsiting.formulation import ModelConfig, build_extensive_form
from v2gsiting.scenarios import Scenario
from v2gsiting.solver.bnb import MILPStatus, relative_gap, solve_milp
from v2gsiting.solver.lp import LPProblem
from v2gsiting.solver.simplex import solve_lp
from v2gsiting.toys import lattice


class Plain:
    def __init__(self, lp, integrality):
        self.lp, self.integrality = lp, np.asarray(integrality, dtype=bool)


def test_zero_binaries_same_as_lp():
    inst, ss = toy_case("ring4", n=2)
    model = build_extensive_form(inst, ss, ModelConfig(fixed_siting=(1.0, 0.0, 1.0)))
    plain = Plain(model.lp, np.zeros(model.n_columns))
    res = solve_milp(plain)
    lp = solve_lp(model.lp)
    assert res.status is MILPStatus.OPTIMAL and res.nodes == 1
    assert res.objective == pytest.approx(lp.objective, rel=1e-12)


def two_candidate_instance():
    tr = lattice(1, 3)
    route = Route(0, (0, 1, 2), 5.0, 100.0)
    stations = (CandidateStation(0, 1, 0, 10.0, 1.0, 0.0, 5.0),
                CandidateStation(1, 2, 0, 10.0, 1.0, 0.0, 5.0))
    inst = Instance(buses=(), lines=(), generators=(), transport=tr, routes=(route,),
                    stations=stations, params=InstanceParams(detour_unit_cost=0.0))
    scen = [Scenario(0, [5.0], [], [], [], 1)]
    return inst, scen


def test_two_candidate_toy_matches_enumeration():
    inst, scen = two_candidate_instance()
    no_grid = ModelConfig(include_grid=False)
    model = build_extensive_form(inst, scen, no_grid)
    res = solve_milp(model, gap_target=0.0)
    # enumerate the four siting vectors with LP recourse
    values = {}
    for bits in itertools.product((0.0, 1.0), repeat=2):
        lp = build_extensive_form(inst, scen, ModelConfig(fixed_siting=bits, include_grid=False)).lp
        values[bits] = solve_lp(lp).objective
    assert min(values, key=values.get) in {(1.0, 0.0), (0.0, 1.0)}
    assert res.objective == pytest.approx(min(values.values()))
    assert res.objective == pytest.approx(10 + 5 * 1.0)
    sol = model.unpack(res.x)
    assert sol.opened == 1
    assert_feasible(inst, scen, sol, no_grid)


def knapsack(values, weights, cap):
    n = len(values)
    lp = LPProblem(-np.asarray(values, float), sp.csr_matrix([weights]), np.array(["L"]),
                   np.array([cap], float), np.zeros(n), np.ones(n))
    return Plain(lp, np.ones(n))


def test_knapsack_exact():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n = 8
        v, wt = rng.integers(1, 30, n), rng.integers(1, 20, n)
        cap = int(wt.sum() // 2)
        best = min(-(np.array(b) @ v) for b in itertools.product((0, 1), repeat=n)
                   if np.array(b) @ wt <= cap)
        res = solve_milp(knapsack(v, wt, cap), gap_target=0.0)
        assert res.gap_reached and res.gap == 0.0
        assert res.objective == pytest.approx(best)


def test_gap_contract_and_weak_duality():
    rng = np.random.default_rng(2)
    for _ in range(10):
        n = 14
        v, wt = rng.integers(10, 40, n), rng.integers(5, 25, n)
        res = solve_milp(knapsack(v, wt, int(wt.sum() // 3)), gap_target=0.01)
        assert res.gap_reached
        assert res.gap == pytest.approx(relative_gap(res.objective, res.bound))
        assert res.gap <= 0.01 + 1e-12
        gaps = []
        for _, bound, inc in res.trace:
            assert bound <= inc + 1e-9
            gaps.append(relative_gap(inc, bound))
        assert all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:]))


def test_infeasible_milp():
    # x1 + x2 = 1.5 with binaries
    lp = LPProblem(np.ones(2), sp.csr_matrix([[1.0, 1.0]]), np.array(["E"]), np.array([1.5]),
                   np.zeros(2), np.ones(2))
    assert solve_milp(Plain(lp, [True, True])).status is MILPStatus.INFEASIBLE


def test_node_limit_reports_bound():
    rng = np.random.default_rng(3)
    n = 25
    v, wt = rng.integers(10, 40, n), rng.integers(5, 25, n)
    res = solve_milp(knapsack(v, wt, int(wt.sum() // 3)), gap_target=0.0, node_limit=2,
                     heuristics=False)
    assert res.status in (MILPStatus.LIMIT, MILPStatus.NO_INCUMBENT)
    assert np.isfinite(res.bound)


def test_relative_gap_definition():
    assert relative_gap(100.0, 99.0) == pytest.approx(0.01)
    assert relative_gap(0.5, 0.0) == pytest.approx(0.5)
    assert relative_gap(-200.0, -202.0) == pytest.approx(0.01)


def test_deterministic(toy):
    inst, ss = toy
    model = build_extensive_form(inst, ss, ModelConfig(station_budget=1))
    a, b = solve_milp(model), solve_milp(model)
    assert (a.objective, a.bound, a.nodes, a.lp_iterations) == (b.objective, b.bound, b.nodes,
                                                                b.lp_iterations)
    assert np.array_equal(a.x, b.x)


def test_warm_start_does_not_change_answer(toy):
    inst, ss = toy
    model = build_extensive_form(inst, ss)
    warm = solve_milp(model, gap_target=0.0)
    cold = solve_milp(model, gap_target=0.0, warm_start=False, heuristics=False)
    assert warm.objective == pytest.approx(cold.objective, rel=1e-9)
    assert_feasible(inst, ss, model.unpack(warm.x))
    assert_feasible(inst, ss, model.unpack(cold.x))
