import dataclasses
import math
from fractions import Fraction

import numpy as np
import pytest

from conftest import assert_feasible, toy_case
from oracles import enumerate_sitings
from v2gsiting import experiments
from v2gsiting.core import CandidateStation, Instance, InstanceParams, Route
from v2gsiting.experiments import (CSV_COLUMNS, CaseSpec, ExperimentPlan, SolverLimits,
                                   SweepResult, case_config, compute_metrics,
                                   find_transport_optimal_siting, ge_cases, plan_from_dict,
                                   plan_to_dict, read_sweep_csv, run_penetration_sweep,
                                   solve_recourse, solve_siting, v2g_cases)
from v2gsiting.formulation import (ModelConfig, RecourseValues, SitingSolution,
                                   build_extensive_form)
from v2gsiting.scenarios import Scenario, assign_renewables, sample_scenario_set
from v2gsiting.solver.bnb import MILPStatus
from v2gsiting.toys import lattice, toy_instance


def transport_toy(stations, routes):
    return Instance(buses=(), lines=(), generators=(), transport=lattice(3, 3), routes=routes,
                    stations=stations, params=InstanceParams(detour_unit_cost=1.0))


def fixed_scenarios(inst, demands_list):
    n = len(demands_list)
    scen = tuple(Scenario(k, d, [], [], [], Fraction(1, n)) for k, d in enumerate(demands_list))
    return experiments.ScenarioSet(scen, assign_renewables((), 0.0, 0), 0)


def test_single_zero_detour_station_opened():
    route = Route(0, (0, 1, 2), 10.0, 50.0)
    st = (CandidateStation(0, 1, 0, 5.0, 0.1, 0.0, 100.0),)
    inst = transport_toy(st, (route,))
    x, count = find_transport_optimal_siting(inst, fixed_scenarios(inst, [[10.0], [12.0]]))
    assert list(x) == [1.0] and count == 1


def test_zero_detour_candidate_preferred():
    # both routes cross the lattice centre (node 4); node 0 is a corner
    routes = (Route(0, (3, 4, 5), 10.0, 50.0), Route(1, (1, 4, 7), 10.0, 50.0))
    st = (CandidateStation(0, 0, 0, 5.0, 0.1, 0.0, 100.0),
          CandidateStation(1, 4, 0, 5.0, 0.1, 0.0, 100.0))
    inst = transport_toy(st, routes)
    assert np.all(inst.detour_costs[1] == 0) and np.all(inst.detour_costs[0] > 0)
    ss = fixed_scenarios(inst, [[10.0, 8.0], [6.0, 12.0]])
    x, count = find_transport_optimal_siting(inst, ss, SolverLimits(gap=0.0))
    no_grid = ModelConfig(include_grid=False)
    values = {bits: solve_siting(inst, ss, dataclasses.replace(no_grid, fixed_siting=bits)).objective
              for bits in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]}
    assert min(values, key=values.get) == (0.0, 1.0)
    assert list(x) == [0.0, 1.0] and count == 1


def test_huge_penalty_serves_all_demand():
    inst, ss = toy_case("mesh5", n=4)
    routes = tuple(dataclasses.replace(r, unmet_penalty=1e6) for r in inst.routes)
    inst = dataclasses.replace(inst, routes=routes)
    out = solve_siting(inst, ss)
    assert compute_metrics(out.solution, ss).unmet_battery_fraction == pytest.approx(0.0, abs=1e-9)
    assert_feasible(inst, ss, out.solution)


def ge1_plan(level, n=20):
    return ExperimentPlan(cases=ge_cases()[:1], levels=(level,), n_scenarios=n, seeds=(0,))


def test_ge1_uncongested_no_shed_at_zero_penetration():
    inst = toy_instance("triangle")
    assert sum(g.max_capacity for g in inst.generators) >= sum(b.peak_load for b in inst.buses)
    row = run_penetration_sweep(inst, ge1_plan(0.0)).rows[0]
    assert row.load_shed_frac == 0.0 and row.opened == 0 and row.status == "Optimal"


def test_ge1_sheds_at_full_penetration():
    inst = toy_instance("triangle")
    row = run_penetration_sweep(inst, ge1_plan(1.0)).rows[0]
    assert row.load_shed_frac > 0


def test_budget_relaxation_monotone(toy):
    inst, ss = toy
    I = len(inst.stations)
    full = solve_siting(inst, ss, ModelConfig(station_budget=I))
    less = solve_siting(inst, ss, ModelConfig(station_budget=I - 1))
    # within the gap contract of both solves
    assert full.objective <= less.objective * (1 + 0.01) + 1e-9
    assert full.bound <= less.objective + 1e-9


def recourse_stub(q, delta):
    z = np.zeros(0)
    return RecourseValues(t=z, s=z, q=np.asarray(q, float), y=np.zeros((0, len(q))), alpha=z,
                          theta=np.zeros(len(delta)), delta=np.asarray(delta, float), beta=z)


def test_metrics_examples():
    scen = [Scenario(0, [10.0, 10.0], [40.0, 60.0], [], [], Fraction(1, 2)),
            Scenario(1, [10.0, 10.0], [40.0, 60.0], [], [], Fraction(1, 2))]
    none_unmet = SitingSolution(np.zeros(0), np.zeros(0),
                                [recourse_stub([0, 0], [40, 60]), recourse_stub([0, 0], [40, 60])], 0.0)
    m = compute_metrics(none_unmet, scen)
    assert m.unmet_battery_fraction == 0.0 and m.load_shed_fraction == 1.0
    half = SitingSolution(np.zeros(0), np.zeros(0),
                          [recourse_stub([5, 5], [0, 0]), recourse_stub([0, 0], [0, 0])], 1.0)
    m = compute_metrics(half, scen)
    assert m.unmet_battery_fraction == pytest.approx(0.25)
    assert m.load_shed_fraction == 0.0


def test_metrics_zero_demand():
    scen = [Scenario(0, [0.0], [0.0], [], [], 1)]
    sol = SitingSolution(np.zeros(0), np.zeros(0), [recourse_stub([0.0], [0.0])], 0.0)
    m = compute_metrics(sol, scen)
    assert (m.unmet_battery_fraction, m.load_shed_fraction) == (0.0, 0.0)


def test_ge_shed_not_above_v2g_shed(toy):
    inst, ss = toy
    for budget in (1, 2):
        ge = solve_siting(inst, ss, ModelConfig(ge_mode=True, station_budget=budget),
                          SolverLimits(gap=0.0))
        v2g = solve_siting(inst, ss, ModelConfig(station_budget=budget), SolverLimits(gap=0.0))
        assert (compute_metrics(ge.solution, ss).load_shed_fraction
                <= compute_metrics(v2g.solution, ss).load_shed_fraction + 1e-9)


def test_free_siting_beats_fixed_transport_siting(toy):
    inst, ss = toy
    x, count = find_transport_optimal_siting(inst, ss, SolverLimits(gap=0.0))
    fixed = solve_siting(inst, ss, ModelConfig(fixed_siting=tuple(x)))
    free = solve_siting(inst, ss, ModelConfig(station_budget=count), SolverLimits(gap=0.0))
    assert free.objective <= fixed.objective + 1e-9
    assert_feasible(inst, ss, fixed.solution, ModelConfig(fixed_siting=tuple(x)))


def test_fast_path_matches_extensive_form(toy):
    inst, ss = toy
    cfg = ModelConfig(station_budget=0)
    fast = solve_siting(inst, ss, cfg)
    ef = experiments.solve_milp(build_extensive_form(inst, ss, cfg))
    assert fast.nodes == 0 and fast.status is MILPStatus.OPTIMAL
    assert fast.objective == pytest.approx(ef.objective, rel=1e-9)
    assert_feasible(inst, ss, fast.solution, cfg)


def test_solve_recourse_matches_oracle():
    inst, ss = toy_case("ring4", n=3)
    x = np.array([1.0, 1.0, 0.0])
    w = np.array([20.0, 40.0, 0.0])
    out = solve_recourse(inst, ss, x, w)
    from oracles import recourse_lp_value
    assert out.objective == pytest.approx(recourse_lp_value(inst, list(ss), x, w=w), rel=1e-8)


def test_transport_siting_matches_enumeration():
    inst, ss = toy_case("mesh5", n=3)
    no_grid = dataclasses.replace(inst, buses=(), lines=(), generators=(),
                                  stations=tuple(dataclasses.replace(s, grid_bus=0)
                                                 for s in inst.stations))
    ss_ng = [dataclasses.replace(sc, bus_loads=np.zeros(0), gen_capacities=np.zeros(0),
                                 gen_costs=np.zeros(0)) for sc in ss]
    out = solve_siting(inst, ss, ModelConfig(include_grid=False), SolverLimits(gap=0.0))
    ref, _ = enumerate_sitings(no_grid, ss_ng)
    assert out.objective == pytest.approx(ref, rel=1e-7)


def test_plan_round_trip_and_order():
    plan = ExperimentPlan(cases=v2g_cases(), levels=(0.0, 0.5), seeds=(1, 2), n_scenarios=3)
    assert plan_from_dict(plan_to_dict(plan)) == plan
    cells = plan.cells()
    assert len(cells) == 5 * 2 * 2
    assert [c[2] for c in cells[:10]] == [1] * 10
    with pytest.raises(ValueError):
        plan_from_dict({"cases": [], "bogus": 1})
    with pytest.raises(ValueError):
        ExperimentPlan(cases=ge_cases(), levels=(0.25,))
    with pytest.raises(ValueError):
        CaseSpec("X", fixed_siting=True, budget=3)


def test_case_catalogue():
    names = [c.name for c in ge_cases()]
    assert names == ["GE-1", "GE-2", "GE-3", "GE-4", "GE-5"]
    assert ge_cases()[0].budget == 0
    assert [c.shed_multiplier for c in ge_cases()[1:]] == [2.0, 5.0, 10.0, 20.0]
    assert v2g_cases()[0].fixed_siting
    scaled = v2g_cases(budget_scales=(1.0, 1.5))
    assert scaled[2].budget_scale == 1.5
    inst = toy_instance("mesh5")
    assert case_config(inst, scaled[2], (np.ones(4), 2)).station_budget == 3


def test_sweep_csv_and_repeatability():
    inst = toy_instance("ring4")
    plan = ExperimentPlan(cases=(ge_cases()[0], v2g_cases()[0], CaseSpec("B1", budget=1)),
                          levels=(0.0, 1.0), n_scenarios=4, seeds=(0, 1))
    a = run_penetration_sweep(inst, plan)
    b = run_penetration_sweep(inst, plan)
    strip = lambda res: [dataclasses.replace(r, wall_ms=0) for r in res.rows]
    assert strip(a) == strip(b)
    rows = read_sweep_csv(a.to_csv())
    assert tuple(rows[0]) == CSV_COLUMNS and len(rows) == 12
    assert all(0 <= float(r["load_shed_frac"]) <= 1 and 0 <= float(r["unmet_frac"]) <= 1
               for r in rows)
    assert rows[0]["level"] == "0.0"
    # subset order does not change values
    rev = run_penetration_sweep(inst, plan, list(reversed(plan.cells())))
    assert strip(rev.sorted(plan)) == strip(a)
    means = a.mean_by_level("B1")
    assert set(means) == {0.0, 1.0} and means[0.0].opened_stations <= 1


def test_failed_cell_recorded(monkeypatch):
    inst = toy_instance("triangle")
    plan = ExperimentPlan(cases=(CaseSpec("A"), CaseSpec("B", budget=1)), levels=(0.0,),
                          n_scenarios=2)

    real = experiments.solve_siting

    def flaky(instance, ss, config, limits):
        if config.station_budget is None:
            raise RuntimeError("boom")
        return real(instance, ss, config, limits)

    monkeypatch.setattr(experiments, "solve_siting", flaky)
    rows = run_penetration_sweep(inst, plan).rows
    assert rows[0].error == "RuntimeError: boom" and math.isnan(rows[0].objective)
    assert rows[1].error == "" and rows[1].status == "Optimal"
    text = SweepResult(rows).to_csv()
    assert text.splitlines()[1].split(",")[6] == ""
