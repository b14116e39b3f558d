import dataclasses
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from v2gsiting.core import Generator, InstanceFormatError, Route
from v2gsiting.scenarios import (PENETRATION_LEVELS, SamplingOptions, assign_renewables,
                                 allocate_route_demands, check_scenario, dump_scenario_set,
                                 load_scenario_set, rng_for, round_half_up, sample_scenario,
                                 sample_scenario_set, total_battery_demand)
from v2gsiting.toys import toy_instance


def many_generators(n):
    return [Generator(k, 0, 10.0, 1.0) for k in range(n)]


def test_levels_grid():
    assert len(PENETRATION_LEVELS) == 11
    assert PENETRATION_LEVELS[3] == 0.3


def test_assignment_extremes():
    gens = many_generators(50)
    assert not any(assign_renewables(gens, 0.0, 1).renewable_flags)
    assert all(assign_renewables(gens, 1.0, 1).renewable_flags)


def test_assignment_fraction_concentrates():
    a = assign_renewables(many_generators(10_000), 0.3, 7)
    assert abs(a.n_renewable / 10_000 - 0.3) <= 0.02


def test_assignment_nested_across_levels():
    gens = many_generators(200)
    prev = set()
    for p in PENETRATION_LEVELS:
        cur = {k for k, f in enumerate(assign_renewables(gens, p, 3).renewable_flags) if f}
        assert prev <= cur
        prev = cur


def test_ineligible_generators_never_renewable():
    gens = [Generator(0, 0, 1.0, 1.0, renewable_eligible=False)] + many_generators(3)[1:]
    assert assign_renewables(gens, 1.0, 0).renewable_flags == (False, True, True)


def test_assignment_rejects_off_grid():
    with pytest.raises(ValueError):
        assign_renewables(many_generators(3), 0.25, 0)
    with pytest.raises(ValueError):
        assign_renewables(many_generators(3), 1.5, 0)


def single_bus_instance():
    inst = toy_instance("triangle")
    buses = tuple(dataclasses.replace(b, peak_load=100.0) for b in inst.buses)
    return dataclasses.replace(inst, buses=buses)


def test_conventional_capacity_is_max():
    inst = toy_instance("triangle")
    ss = sample_scenario_set(inst, assign_renewables(inst.generators, 0.0, 0), 50, 0)
    for sc in ss:
        np.testing.assert_array_equal(sc.gen_capacities, [g.max_capacity for g in inst.generators])


def test_bus_load_mean():
    inst = single_bus_instance()
    a = assign_renewables(inst.generators, 0.0, 0)
    loads = np.array([sample_scenario(inst, a, rng_for(5, 1, k)).bus_loads[0]
                      for k in range(10_000)])
    assert abs(loads.mean() - 75.0) <= 1.0


def test_capacity_factor_frequencies():
    inst = toy_instance("triangle")
    a = assign_renewables(inst.generators, 1.0, 0)
    caps = np.array([sample_scenario(inst, a, rng_for(2, 1, k)).gen_capacities[0]
                     for k in range(30_000)])
    gmax = inst.generators[0].max_capacity
    for f in (0.0, 0.5, 1.0):
        assert abs(np.mean(caps == f * gmax) - 1 / 3) <= 0.01


def test_custom_capacity_factor_probs():
    inst = toy_instance("triangle")
    a = assign_renewables(inst.generators, 1.0, 0)
    ss = sample_scenario_set(inst, a, 200, 1, SamplingOptions(capacity_factor_probs=(0, 0, 1)))
    assert all(np.array_equal(sc.gen_capacities, [80.0, 60.0]) for sc in ss)
    with pytest.raises(ValueError):
        SamplingOptions(capacity_factor_probs=(0.5, 0.5, 0.5))


def test_cost_jitter_range():
    inst = toy_instance("ring4")
    a = assign_renewables(inst.generators, 0.5, 0)
    base = np.array([g.unit_cost for g in inst.generators])
    plain = sample_scenario_set(inst, a, 20, 3)
    assert all(np.array_equal(sc.gen_costs, base) for sc in plain)
    jittered = sample_scenario_set(inst, a, 200, 3, SamplingOptions(cost_jitter=True))
    ratio = jittered.stack("gen_costs") / base
    assert ratio.min() >= 0.9 and ratio.max() <= 1.1 and ratio.std() > 0.01


def test_set_determinism_and_serialization():
    inst = toy_instance("mesh5")
    a = assign_renewables(inst.generators, 0.4, 11)
    one = dump_scenario_set(sample_scenario_set(inst, a, 100, 11))
    two = dump_scenario_set(sample_scenario_set(inst, a, 100, 11))
    assert one == two
    back = load_scenario_set(one)
    assert dump_scenario_set(back) == one


def test_single_scenario_has_probability_one():
    inst = toy_instance("triangle")
    ss = sample_scenario_set(inst, assign_renewables(inst.generators, 0.5, 0), 1, 0)
    assert len(ss) == 1 and ss.scenarios[0].probability == 1


def test_probabilities_sum_to_one_exactly():
    inst = toy_instance("triangle")
    ss = sample_scenario_set(inst, assign_renewables(inst.generators, 0.5, 0), 7, 0)
    assert ss.total_probability() == Fraction(1)


def test_demand_support():
    inst = toy_instance("mesh5")
    ss = sample_scenario_set(inst, assign_renewables(inst.generators, 0.5, 0), 400, 8)
    d = ss.stack("route_demands")
    avg = np.array([r.avg_demand for r in inst.routes])
    assert np.all(d >= round_half_up(0.5 * avg)) and np.all(d <= round_half_up(1.5 * avg))
    assert np.array_equal(d, np.round(d))


def test_scenario_order_independence():
    inst = toy_instance("ring4")
    a = assign_renewables(inst.generators, 0.6, 4)
    ss = sample_scenario_set(inst, a, 10, 4)
    sc7 = sample_scenario(inst, a, rng_for(4, 1, 7), 7, Fraction(1, 10))
    np.testing.assert_array_equal(sc7.bus_loads, ss.scenarios[7].bus_loads)
    np.testing.assert_array_equal(sc7.route_demands, ss.scenarios[7].route_demands)


def test_route_demands_independent_of_level():
    inst = toy_instance("ring4")
    lo = sample_scenario_set(inst, assign_renewables(inst.generators, 0.0, 2), 20, 2)
    hi = sample_scenario_set(inst, assign_renewables(inst.generators, 1.0, 2), 20, 2)
    np.testing.assert_array_equal(lo.stack("route_demands"), hi.stack("route_demands"))


def test_streams_uncorrelated():
    inst = single_bus_instance()
    a = assign_renewables(inst.generators, 1.0, 0)
    ss = sample_scenario_set(inst, a, 10_000, 21)
    streams = np.column_stack([ss.stack("bus_loads"), ss.stack("gen_capacities"),
                               ss.stack("route_demands")])
    corr = np.corrcoef(streams, rowvar=False)
    off = corr[~np.eye(len(corr), dtype=bool)]
    assert np.abs(off).max() < 0.05


def test_total_battery_demand_values():
    # population figures as quoted for the two case studies
    assert total_battery_demand(344_850, 0.78, 0.1, 0.1) == 2690
    assert total_battery_demand(5_414_712, 0.78, 0.1, 0.1) == 42_235
    assert total_battery_demand(5_414_712, 0.78, 0.1, 0.1, include_exchange_fraction=False) == 422_348
    assert total_battery_demand(0, 0.78, 0.1, 0.1) == 0


def test_allocate_route_demands():
    routes = [Route(j, (0, 1), 0.0, 1.0) for j in range(10)]
    assert allocate_route_demands(2690, routes) == pytest.approx([269.0] * 10)
    assert allocate_route_demands(55, routes[:1]) == [55]
    weighted = [Route(0, (0, 1), 0, 1, weight=0.0), Route(1, (0, 1), 0, 1, weight=2.0)]
    assert allocate_route_demands(10, weighted) == [0.0, 10.0]
    with pytest.raises(ValueError):
        allocate_route_demands(10, [Route(0, (0, 1), 0, 1, weight=0.0)])


def test_load_rejects_bad_documents():
    inst = toy_instance("triangle")
    text = dump_scenario_set(sample_scenario_set(inst, assign_renewables(inst.generators, 0.5, 0), 2, 0))
    with pytest.raises(InstanceFormatError):
        load_scenario_set(text.replace('"seed"', '"sed"'))
    with pytest.raises(InstanceFormatError):
        load_scenario_set(text[:40])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), level=st.sampled_from(PENETRATION_LEVELS),
       name=st.sampled_from(["triangle", "ring4", "mesh5"]))
def test_sampled_values_in_support(seed, level, name):
    inst = toy_instance(name)
    a = assign_renewables(inst.generators, level, seed)
    for sc in sample_scenario_set(inst, a, 5, seed):
        assert check_scenario(inst, sc, a) == []
