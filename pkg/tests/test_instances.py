import dataclasses
import math

import numpy as np
import pytest

from v2gsiting.core import dump_instance, load_instance, validate_instance
from v2gsiting.instances import (MIAMI_POPULATION, RTS_POPULATION, InstanceKnobs,
                                 generate_miami_like_instance, generate_rts_like_instance)
from v2gsiting.scenarios import total_battery_demand


@pytest.fixture(scope="module")
def rts():
    return generate_rts_like_instance(0)


@pytest.fixture(scope="module")
def miami():
    return generate_miami_like_instance(0)


def test_rts_counts(rts):
    # 25 buses and 38 lines as in the adapted test system
    assert len(rts.buses) == 25
    assert len(rts.lines) == 38
    assert len(rts.transport.nodes) == 88
    assert len(rts.stations) == 28
    assert len(rts.routes) == 10
    assert rts.params.population == RTS_POPULATION == 344_850


def test_rts_totals(rts):
    assert math.fsum(g.max_capacity for g in rts.generators) == pytest.approx(2999.0, abs=1e-9)
    assert math.fsum(b.peak_load for b in rts.buses) == pytest.approx(2880.0, abs=1e-9)
    per_bus = {}
    for g in rts.generators:
        per_bus[g.bus] = per_bus.get(g.bus, 0) + 1
    assert len(per_bus) == 11 and max(per_bus.values()) <= 6


def test_rts_battery_demand(rts):
    assert sum(r.avg_demand for r in rts.routes) == pytest.approx(2690)
    assert all(r.avg_demand == 269 for r in rts.routes)
    assert len({r.weight for r in rts.routes}) == 1


def test_rts_stations_mapped_to_nearest_bus(rts):
    for st in rts.stations:
        p = np.array(rts.transport.nodes[st.transport_node])
        d = [np.hypot(*(np.array(b.coords) - p)) for b in rts.buses]
        assert d[st.grid_bus] == pytest.approx(min(d))


def test_rts_shed_penalty_dominates_generation(rts):
    top = max(g.unit_cost for g in rts.generators)
    assert all(b.shed_penalty >= 10 * top for b in rts.buses)


@pytest.mark.parametrize("seed", range(5))
def test_rts_valid_for_seeds(seed):
    inst = generate_rts_like_instance(seed)
    assert validate_instance(inst) == []
    assert inst.name == f"rts-like-{seed}"


def test_rts_seed_changes_only_transport_side():
    a, b = generate_rts_like_instance(0), generate_rts_like_instance(1)
    assert a.lines == b.lines and a.generators == b.generators
    assert a.stations != b.stations


def test_knobs_are_applied():
    knobs = InstanceKnobs(fixed_cost=5.0, battery_power=0.5, line_capacity_scale=2.0)
    base = generate_rts_like_instance(0)
    inst = generate_rts_like_instance(0, knobs)
    assert all(st.fixed_cost == 5.0 for st in inst.stations)
    assert inst.params.battery_power == 0.5
    assert [l.capacity for l in inst.lines] == [2 * l.capacity for l in base.lines]


def test_miami_shape(miami):
    assert len(miami.buses) == 200 and len(miami.lines) == 275
    assert len(miami.stations) == 316
    assert len(miami.routes) == 100
    cap = math.fsum(g.max_capacity for g in miami.generators)
    load = math.fsum(b.peak_load for b in miami.buses)
    assert cap / load == pytest.approx(8200 / 6400, rel=1e-12)
    assert miami.params.population == MIAMI_POPULATION
    assert validate_instance(miami) == []
    assert len(set(miami.grid_islands.tolist())) == 1


def test_miami_battery_demand(miami):
    expected = total_battery_demand(MIAMI_POPULATION, 0.78, 0.1, 0.1)
    assert sum(r.avg_demand for r in miami.routes) == pytest.approx(expected)


def test_generators_deterministic():
    assert dump_instance(generate_miami_like_instance(3)) == dump_instance(generate_miami_like_instance(3))
    text = dump_instance(generate_rts_like_instance(2))
    assert dump_instance(load_instance(text)) == text
