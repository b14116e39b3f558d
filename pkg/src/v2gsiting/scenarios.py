"""Seeded Monte Carlo scenarios: renewable placement, loads, capacities, PHEV demand.

All randomness comes from numpy's PCG64 bit generator seeded through
``SeedSequence(seed, spawn_key=...)``:

* renewable assignment: ``spawn_key=(0,)``, one uniform per generator in id order;
  a generator is renewable iff eligible and its uniform is below the penetration,
  so assignments at different penetration levels are nested for a fixed seed;
* scenario ``k``: ``spawn_key=(1, k)``; draws, in order, one uniform per
  generator (capacity factor), one per bus (load), one per route (demand) and,
  only when cost jitter is on, one per generator (cost).

Every draw happens whether or not it is used, so changing the penetration
level never shifts the other streams.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence

import numpy as np

from .core import Generator, Instance, InstanceFormatError, Route

PENETRATION_LEVELS = tuple(k / 10 for k in range(11))
CAPACITY_FACTORS = (0.0, 0.5, 1.0)


def _on_level_grid(p: float) -> bool:
    return 0.0 <= p <= 1.0 and abs(p * 10 - round(p * 10)) < 1e-9


def rng_for(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def round_half_up(x):
    return np.floor(np.asarray(x, dtype=float) + 0.5)


@dataclass(frozen=True)
class RenewableAssignment:
    penetration: float
    renewable_flags: tuple[bool, ...]
    seed: int

    def __post_init__(self):
        if not _on_level_grid(self.penetration):
            raise ValueError(f"penetration {self.penetration} is not on the 0.0..1.0 step 0.1 grid")

    @property
    def n_renewable(self) -> int:
        return sum(self.renewable_flags)


@dataclass(frozen=True)
class SamplingOptions:
    capacity_factor_probs: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    cost_jitter: bool = False
    jitter_range: tuple[float, float] = (0.9, 1.1)

    def __post_init__(self):
        p = self.capacity_factor_probs
        if len(p) != 3 or min(p) < 0 or abs(sum(p) - 1) > 1e-9:
            raise ValueError(f"capacity_factor_probs must be a probability 3-vector, got {p}")


@dataclass(frozen=True, eq=False)
class Scenario:
    id: int
    route_demands: np.ndarray
    bus_loads: np.ndarray
    gen_capacities: np.ndarray
    gen_costs: np.ndarray
    probability: Fraction

    def __post_init__(self):
        for name in ("route_demands", "bus_loads", "gen_capacities", "gen_costs"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "probability", Fraction(self.probability))


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    scenarios: tuple[Scenario, ...]
    assignment: RenewableAssignment
    seed: int
    options: SamplingOptions = field(default_factory=SamplingOptions)

    def __len__(self) -> int:
        return len(self.scenarios)

    def __iter__(self):
        return iter(self.scenarios)

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([float(s.probability) for s in self.scenarios])

    def total_probability(self) -> Fraction:
        return sum((s.probability for s in self.scenarios), Fraction(0))

    def stack(self, name: str) -> np.ndarray:
        """Scenario-major 2-D array of one field, e.g. ``stack("bus_loads")``."""
        return np.vstack([getattr(s, name) for s in self.scenarios])


def assign_renewables(generators: Sequence[Generator], penetration: float,
                      rng_seed: int) -> RenewableAssignment:
    """Flag each eligible generator renewable with probability ``penetration``."""
    if not 0.0 <= penetration <= 1.0:
        raise ValueError(f"penetration must lie in [0, 1], got {penetration}")
    u = rng_for(rng_seed, 0).random(len(generators))
    flags = tuple(bool(g.renewable_eligible and u[k] < penetration)
                  for k, g in enumerate(generators))
    return RenewableAssignment(penetration=penetration, renewable_flags=flags, seed=rng_seed)


def sample_scenario(instance: Instance, assignment: RenewableAssignment,
                    rng: np.random.Generator, scenario_id: int = 0,
                    probability: Fraction = Fraction(1),
                    options: SamplingOptions | None = None) -> Scenario:
    options = options or SamplingOptions()
    gens = instance.generators
    if len(assignment.renewable_flags) != len(gens):
        raise ValueError("assignment does not match the instance's generator count")
    gmax = np.array([g.max_capacity for g in gens], dtype=float)
    peak = np.array([b.peak_load for b in instance.buses], dtype=float)
    avg = np.array([r.avg_demand for r in instance.routes], dtype=float)

    u_cap = rng.random(len(gens))
    u_load = rng.random(len(peak))
    u_dem = rng.random(len(avg))

    cum = np.cumsum(options.capacity_factor_probs)
    idx = np.minimum(np.searchsorted(cum, u_cap, side="right"), 2)
    factor = np.asarray(CAPACITY_FACTORS)[idx]
    renewable = np.asarray(assignment.renewable_flags, dtype=bool)
    caps = np.where(renewable, factor * gmax, gmax)

    loads = peak * (0.5 + 0.5 * u_load)
    demands = round_half_up(avg * (0.5 + u_dem))

    costs = np.array([g.unit_cost for g in gens], dtype=float)
    if options.cost_jitter:
        lo, hi = options.jitter_range
        costs = costs * (lo + (hi - lo) * rng.random(len(gens)))
    return Scenario(id=scenario_id, route_demands=demands, bus_loads=loads,
                    gen_capacities=caps, gen_costs=costs, probability=probability)


def sample_scenario_set(instance: Instance, assignment: RenewableAssignment, n: int,
                        seed: int, options: SamplingOptions | None = None) -> ScenarioSet:
    """``n`` independent scenarios, each with probability ``1/n``.

    Scenario ``k`` only depends on ``(seed, k)``, so any subset can be sampled in
    any order (or in parallel) with identical results.
    """
    if n < 1:
        raise ValueError("need at least one scenario")
    options = options or SamplingOptions()
    p = Fraction(1, n)
    scenarios = tuple(sample_scenario(instance, assignment, rng_for(seed, 1, k), k, p, options)
                      for k in range(n))
    return ScenarioSet(scenarios=scenarios, assignment=assignment, seed=seed, options=options)


def total_battery_demand(population: float, vehicle_ratio: float, phev_ratio: float,
                         exchange_fraction: float, include_exchange_fraction: bool = True) -> int:
    """Expected battery-exchange requests per scenario.

    With ``include_exchange_fraction=False`` the exchange share is dropped:
    population x vehicle ratio x PHEV ratio (422,348 for the Miami-sized city).
    """
    for v in (population, vehicle_ratio, phev_ratio, exchange_fraction):
        if v < 0:
            raise ValueError("inputs must be non-negative")
    for v in (vehicle_ratio, phev_ratio, exchange_fraction):
        if v > 1:
            raise ValueError("ratios must not exceed 1")
    total = population * vehicle_ratio * phev_ratio
    if include_exchange_fraction:
        total *= exchange_fraction
    return int(round_half_up(total))


def allocate_route_demands(total: float, routes: Sequence[Route]) -> list[float]:
    if total < 0:
        raise ValueError("total demand must be non-negative")
    weights = np.array([r.weight for r in routes], dtype=float)
    if len(weights) == 0 or weights.sum() <= 0:
        raise ValueError("at least one route needs a positive weight")
    return list(total * weights / weights.sum())


# --------------------------------------------------------------------------
# JSON
# --------------------------------------------------------------------------

def scenario_set_to_dict(ss: ScenarioSet) -> dict[str, Any]:
    a = ss.assignment
    return {
        "seed": ss.seed,
        "assignment": {"penetration": a.penetration, "seed": a.seed,
                       "renewable_flags": list(a.renewable_flags)},
        "options": {"capacity_factor_probs": list(ss.options.capacity_factor_probs),
                    "cost_jitter": ss.options.cost_jitter,
                    "jitter_range": list(ss.options.jitter_range)},
        "scenarios": [{"id": s.id, "probability": float(s.probability),
                       "route_demands": [int(d) for d in s.route_demands],
                       "bus_loads": s.bus_loads.tolist(),
                       "gen_capacities": s.gen_capacities.tolist(),
                       "gen_costs": s.gen_costs.tolist()} for s in ss.scenarios],
    }


def scenario_set_from_dict(doc: dict[str, Any]) -> ScenarioSet:
    try:
        a = doc["assignment"]
        assignment = RenewableAssignment(penetration=float(a["penetration"]),
                                         renewable_flags=tuple(bool(f) for f in a["renewable_flags"]),
                                         seed=int(a["seed"]))
        o = doc.get("options", {})
        options = SamplingOptions(
            capacity_factor_probs=tuple(o.get("capacity_factor_probs", (1 / 3, 1 / 3, 1 / 3))),
            cost_jitter=bool(o.get("cost_jitter", False)),
            jitter_range=tuple(o.get("jitter_range", (0.9, 1.1))))
        scenarios = []
        for k, s in enumerate(doc["scenarios"]):
            prob = Fraction(s["probability"]).limit_denominator(10 ** 9)
            scenarios.append(Scenario(id=int(s["id"]), route_demands=s["route_demands"],
                                      bus_loads=s["bus_loads"], gen_capacities=s["gen_capacities"],
                                      gen_costs=s["gen_costs"], probability=prob))
        seed = int(doc["seed"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InstanceFormatError("/scenarios", f"malformed scenario set: {exc!r}") from exc
    return ScenarioSet(scenarios=tuple(scenarios), assignment=assignment, seed=seed,
                       options=options)


def dump_scenario_set(ss: ScenarioSet) -> str:
    return json.dumps(scenario_set_to_dict(ss), indent=1) + "\n"


def load_scenario_set(text: str) -> ScenarioSet:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"line {exc.lineno} col {exc.colno}", exc.msg) from exc
    return scenario_set_from_dict(doc)


def check_scenario(instance: Instance, scenario: Scenario, assignment: RenewableAssignment,
                   tol: float = 1e-9) -> list[str]:
    """Support checks for one scenario; returns human-readable problems."""
    problems = []
    peak = np.array([b.peak_load for b in instance.buses])
    if np.any(scenario.bus_loads < 0.5 * peak - tol) or np.any(scenario.bus_loads > peak + tol):
        problems.append("bus load outside [0.5, 1.0] x peak")
    gmax = np.array([g.max_capacity for g in instance.generators])
    for k, ren in enumerate(assignment.renewable_flags):
        cap = scenario.gen_capacities[k]
        if ren:
            if not any(math.isclose(cap, f * gmax[k], abs_tol=tol) for f in CAPACITY_FACTORS):
                problems.append(f"renewable generator {k} capacity {cap} not in {{0, .5, 1}} x max")
        elif not math.isclose(cap, gmax[k], abs_tol=tol):
            problems.append(f"conventional generator {k} capacity {cap} != max")
    avg = np.array([r.avg_demand for r in instance.routes])
    lo, hi = round_half_up(0.5 * avg), round_half_up(1.5 * avg)
    d = scenario.route_demands
    if np.any(d < lo) or np.any(d > hi) or np.any(d != np.round(d)):
        problems.append("route demand outside rounded [0.5, 1.5] x average")
    return problems
