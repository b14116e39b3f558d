"""Penetration sweeps over generation-expansion (GE) and V2G cases.

A sweep cell is one ``(case, level, seed)`` triple: renewables are assigned
with ``seed`` at penetration ``level``, ``n_scenarios`` scenarios are sampled
with the same seed, the case's model variant is solved to the plan's gap and
the shed/unmet metrics are computed.

Route demands do not depend on the penetration level (their random draws are
positioned independently of the renewable flags), so the transport-optimal
siting used by fixed-siting cases is computed once per seed.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Iterable, Sequence

import numpy as np

from .core import Instance
from .formulation import (ModelConfig, RecourseValues, SitingSolution,
                          build_extensive_form, build_second_stage_lp, first_stage_cost)
from .scenarios import (PENETRATION_LEVELS, SamplingOptions, ScenarioSet, assign_renewables,
                        sample_scenario_set)
from .solver.bnb import MILPStatus, solve_milp
from .solver.lp import LPStatus
from .solver.simplex import solve_lp

log = logging.getLogger(__name__)

CSV_COLUMNS = ("case", "level", "seed", "load_shed_frac", "unmet_frac", "opened", "objective",
               "gap", "nodes", "wall_ms")


# --------------------------------------------------------------------------
# solving
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SolverLimits:
    gap: float = 0.01
    node_limit: int = 100_000
    iteration_limit: int = 1_000_000


@dataclass(eq=False)
class SolveOutcome:
    """Result of solving one model variant, with the unpacked solution if any."""
    status: MILPStatus
    solution: SitingSolution | None
    objective: float
    bound: float
    gap: float
    nodes: int
    lp_iterations: int

    @property
    def gap_reached(self) -> bool:
        return self.status in (MILPStatus.OPTIMAL, MILPStatus.GAP_REACHED)


def _forced_first_stage(instance: Instance, config: ModelConfig):
    """``(x, w)`` when the configuration leaves no first-stage freedom, else ``None``."""
    I = len(instance.stations)
    if config.station_budget == 0:
        x = np.zeros(I)
    elif config.fixed_siting is not None:
        x = np.asarray(config.fixed_siting, dtype=float)
    else:
        return None
    if config.fixed_stock is not None:
        return x, np.asarray(config.fixed_stock, dtype=float)
    lo = np.array([st.min_batteries for st in instance.stations]) * x
    hi = np.array([st.max_batteries for st in instance.stations]) * x
    if np.array_equal(lo, hi):
        return x, lo
    return None


def solve_recourse(instance: Instance, scenario_set: ScenarioSet | Sequence, x, w,
                   config: ModelConfig | None = None) -> SolveOutcome:
    """First stage held at ``(x, w)``: one recourse LP per scenario.

    Scenario LPs share rows, columns and costs, so each is warm-started from
    the previous scenario's optimal basis.
    """
    config = config or ModelConfig()
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    total = first_stage_cost(instance, x, w)
    recourse: list[RecourseValues] = []
    iterations = 0
    basis = None
    for sc in scenario_set:
        model = build_second_stage_lp(instance, sc, x, w, config)
        sol = solve_lp(model.lp, warm_start=basis)
        iterations += sol.iterations
        if sol.status is not LPStatus.OPTIMAL:
            status = (MILPStatus.INFEASIBLE if sol.status is LPStatus.INFEASIBLE
                      else MILPStatus.UNBOUNDED if sol.status is LPStatus.UNBOUNDED
                      else MILPStatus.NO_INCUMBENT)
            return SolveOutcome(status, None, math.inf, -math.inf, math.inf, 0, iterations)
        basis = sol.basis
        total += float(sc.probability) * sol.objective
        recourse.append(model.unpack(sol.x).recourse[0])
    solution = SitingSolution(x=x.copy(), w=w.copy(), recourse=recourse, objective=total)
    return SolveOutcome(MILPStatus.OPTIMAL, solution, total, total, 0.0, 0, iterations)


def solve_siting(instance: Instance, scenario_set: ScenarioSet, config: ModelConfig | None = None,
                 limits: SolverLimits | None = None) -> SolveOutcome:
    """Solve one model variant; fully fixed first stages skip the extensive form."""
    config = config or ModelConfig()
    limits = limits or SolverLimits()
    forced = _forced_first_stage(instance, config)
    if forced is not None:
        return solve_recourse(instance, scenario_set, *forced, config=config)
    model = build_extensive_form(instance, scenario_set, config)
    res = solve_milp(model, gap_target=limits.gap, node_limit=limits.node_limit,
                     iteration_limit=limits.iteration_limit)
    solution = model.unpack(res.x, res.objective) if res.x is not None else None
    return SolveOutcome(res.status, solution, res.objective, res.bound, res.gap, res.nodes,
                        res.lp_iterations)


def find_transport_optimal_siting(instance: Instance, scenario_set: ScenarioSet,
                                  limits: SolverLimits | None = None) -> tuple[np.ndarray, int]:
    """Siting that best serves battery demand alone (grid dropped from the model)."""
    out = solve_siting(instance, scenario_set, ModelConfig(include_grid=False), limits)
    if out.solution is None:
        raise RuntimeError(f"transport-only model ended with status {out.status.value}")
    x = np.round(out.solution.x)
    return x, int(x.sum())


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Metrics:
    load_shed_fraction: float
    unmet_battery_fraction: float
    opened_stations: int
    objective: float


def compute_metrics(solution: SitingSolution, scenario_set: ScenarioSet | Sequence) -> Metrics:
    """Probability-weighted shed and unmet fractions; 0 when the denominator is 0."""
    scenarios = list(scenario_set)
    if len(scenarios) != len(solution.recourse):
        raise ValueError("solution and scenario set differ in scenario count")
    p = np.array([float(sc.probability) for sc in scenarios])
    shed = p @ np.array([rv.delta.sum() for rv in solution.recourse])
    load = p @ np.array([np.sum(sc.bus_loads) for sc in scenarios])
    unmet = p @ np.array([rv.q.sum() for rv in solution.recourse])
    demand = p @ np.array([np.sum(sc.route_demands) for sc in scenarios])
    shed_frac = float(np.clip(shed / load, 0.0, 1.0)) if load > 0 else 0.0
    unmet_frac = float(np.clip(unmet / demand, 0.0, 1.0)) if demand > 0 else 0.0
    obj = math.nan if solution.objective is None else float(solution.objective)
    return Metrics(shed_frac, unmet_frac, solution.opened, obj)


# --------------------------------------------------------------------------
# plans
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CaseSpec:
    """One curve of a sweep.

    ``kind`` is ``"GE"`` (unmet-battery penalty zeroed) or ``"V2G"``.  The
    station budget is ``budget`` if given, else ``round(budget_scale * n*)``
    where ``n*`` is the transport-optimal station count.  ``fixed_siting``
    pins the transport-optimal siting.  ``shed_multiplier`` scales every
    bus's load-shedding penalty.
    """
    name: str
    kind: str = "V2G"
    budget: int | None = None
    budget_scale: float | None = None
    shed_multiplier: float = 1.0
    fixed_siting: bool = False

    def __post_init__(self):
        if self.kind not in ("GE", "V2G"):
            raise ValueError(f"case kind must be GE or V2G, got {self.kind!r}")
        if self.budget is not None and self.budget < 0:
            raise ValueError("station budget must be non-negative")
        if self.budget_scale is not None and self.budget_scale <= 0:
            raise ValueError("budget scale must be positive")
        if self.shed_multiplier <= 0:
            raise ValueError("shed multiplier must be positive")
        if self.fixed_siting and (self.budget is not None or self.budget_scale is not None):
            raise ValueError("a fixed siting cannot also carry a budget")

    @property
    def needs_transport_siting(self) -> bool:
        return self.fixed_siting or self.budget_scale is not None


def ge_cases(shed_multipliers: Sequence[float] = (2.0, 5.0, 10.0, 20.0)) -> tuple[CaseSpec, ...]:
    """GE-1 (no stations) followed by one case per shed-penalty multiplier."""
    return (CaseSpec("GE-1", "GE", budget=0),) + tuple(
        CaseSpec(f"GE-{k + 2}", "GE", shed_multiplier=m) for k, m in enumerate(shed_multipliers))


def v2g_cases(budgets: Sequence[int] = (6, 8, 10, 12),
              budget_scales: Sequence[float] | None = None) -> tuple[CaseSpec, ...]:
    """V2G-1 (transport-optimal siting) then budget-constrained free sitings."""
    head = (CaseSpec("V2G-1", "V2G", fixed_siting=True),)
    if budget_scales is not None:
        return head + tuple(CaseSpec(f"V2G-{k + 2}", "V2G", budget_scale=s)
                            for k, s in enumerate(budget_scales))
    return head + tuple(CaseSpec(f"V2G-{k + 2}", "V2G", budget=b) for k, b in enumerate(budgets))


@dataclass(frozen=True)
class ExperimentPlan:
    cases: tuple[CaseSpec, ...]
    levels: tuple[float, ...] = PENETRATION_LEVELS
    n_scenarios: int = 100
    seeds: tuple[int, ...] = (0,)
    limits: SolverLimits = field(default_factory=SolverLimits)
    sampling: SamplingOptions = field(default_factory=SamplingOptions)

    def __post_init__(self):
        if not self.cases:
            raise ValueError("plan has no cases")
        names = [c.name for c in self.cases]
        if len(set(names)) != len(names):
            raise ValueError("case names must be unique")
        grid = {round(v, 10) for v in PENETRATION_LEVELS}
        for lv in self.levels:
            if round(lv, 10) not in grid:
                raise ValueError(f"penetration level {lv} is not on the 0.0..1.0 step 0.1 grid")
        if self.n_scenarios < 1:
            raise ValueError("need at least one scenario")
        if not self.seeds:
            raise ValueError("need at least one seed")

    def cells(self) -> list[tuple[CaseSpec, float, int]]:
        return [(c, lv, s) for s in self.seeds for c in self.cases for lv in self.levels]


def plan_to_dict(plan: ExperimentPlan) -> dict[str, Any]:
    doc = asdict(plan)
    doc["sampling"]["capacity_factor_probs"] = list(plan.sampling.capacity_factor_probs)
    doc["sampling"]["jitter_range"] = list(plan.sampling.jitter_range)
    doc["cases"] = [asdict(c) for c in plan.cases]
    doc["levels"] = list(plan.levels)
    doc["seeds"] = list(plan.seeds)
    return doc


def plan_from_dict(doc: dict[str, Any]) -> ExperimentPlan:
    """Inverse of :func:`plan_to_dict`; unknown keys are rejected."""
    if not isinstance(doc, dict):
        raise ValueError("plan must be a JSON object")
    known = {"cases", "levels", "n_scenarios", "seeds", "limits", "sampling"}
    extra = set(doc) - known
    if extra:
        raise ValueError(f"unknown plan keys: {sorted(extra)}")
    if "cases" not in doc:
        raise ValueError("plan needs 'cases'")
    try:
        cases = tuple(CaseSpec(**c) for c in doc["cases"])
        kw: dict[str, Any] = {"cases": cases}
        if "levels" in doc:
            kw["levels"] = tuple(float(v) for v in doc["levels"])
        if "n_scenarios" in doc:
            kw["n_scenarios"] = int(doc["n_scenarios"])
        if "seeds" in doc:
            kw["seeds"] = tuple(int(v) for v in doc["seeds"])
        if "limits" in doc:
            kw["limits"] = SolverLimits(**doc["limits"])
        if "sampling" in doc:
            s = dict(doc["sampling"])
            if "capacity_factor_probs" in s:
                s["capacity_factor_probs"] = tuple(s["capacity_factor_probs"])
            if "jitter_range" in s:
                s["jitter_range"] = tuple(s["jitter_range"])
            kw["sampling"] = SamplingOptions(**s)
    except TypeError as exc:
        raise ValueError(str(exc)) from None
    return ExperimentPlan(**kw)


# --------------------------------------------------------------------------
# sweeps
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    case: str
    level: float
    seed: int
    load_shed_frac: float
    unmet_frac: float
    opened: int
    objective: float
    gap: float
    nodes: int
    wall_ms: int
    status: str = MILPStatus.OPTIMAL.value
    error: str = ""

    @property
    def key(self) -> tuple[str, float, int]:
        return (self.case, round(self.level, 10), self.seed)


@dataclass
class SweepResult:
    rows: list[SweepRow]

    def sorted(self, plan: ExperimentPlan | None = None) -> "SweepResult":
        """Rows in plan order (seed, case, level), or by key without a plan."""
        if plan is None:
            return SweepResult(sorted(self.rows, key=lambda r: (r.seed, r.case, r.level)))
        order = {(c.name, round(lv, 10), s): k for k, (c, lv, s) in enumerate(plan.cells())}
        return SweepResult(sorted(self.rows, key=lambda r: order.get(r.key, len(order))))

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(CSV_COLUMNS)
        for r in self.rows:
            wr.writerow([r.case, f"{r.level:.1f}", r.seed, _num(r.load_shed_frac),
                         _num(r.unmet_frac), r.opened, _num(r.objective), _num(r.gap), r.nodes,
                         r.wall_ms])
        return buf.getvalue()

    def mean_by_level(self, case: str) -> dict[float, Metrics]:
        """Seed-averaged metrics for one case; failed cells are skipped."""
        out: dict[float, list[SweepRow]] = {}
        for r in self.rows:
            if r.case == case and not r.error:
                out.setdefault(round(r.level, 10), []).append(r)
        return {lv: Metrics(float(np.mean([r.load_shed_frac for r in rs])),
                            float(np.mean([r.unmet_frac for r in rs])),
                            int(round(np.mean([r.opened for r in rs]))),
                            float(np.mean([r.objective for r in rs])))
                for lv, rs in sorted(out.items())}


def _num(v: float) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def read_sweep_csv(text: str) -> list[dict[str, str]]:
    rows = list(csv.DictReader(io.StringIO(text)))
    if rows and tuple(rows[0].keys()) != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV columns {tuple(rows[0].keys())}")
    return rows


def _scaled_shed(instance: Instance, factor: float) -> Instance:
    if factor == 1.0:
        return instance
    buses = tuple(replace(b, shed_penalty=b.shed_penalty * factor) for b in instance.buses)
    return replace(instance, buses=buses)


class _SitingCache:
    """Transport-optimal sitings keyed by the route-demand draws they depend on."""

    def __init__(self, instance: Instance, limits: SolverLimits):
        self.instance = instance
        self.limits = limits
        self._store: dict[bytes, tuple[np.ndarray, int]] = {}

    def get(self, scenario_set: ScenarioSet) -> tuple[np.ndarray, int]:
        key = scenario_set.stack("route_demands").tobytes()
        if key not in self._store:
            self._store[key] = find_transport_optimal_siting(self.instance, scenario_set,
                                                             self.limits)
        return self._store[key]


def case_config(instance: Instance, case: CaseSpec, transport_siting=None) -> ModelConfig:
    """Model configuration for a case; ``transport_siting`` is ``(x, count)``."""
    budget = case.budget
    fixed = None
    if case.budget_scale is not None:
        budget = int(round(case.budget_scale * transport_siting[1]))
    if case.fixed_siting:
        fixed = tuple(float(v) for v in transport_siting[0])
    return ModelConfig(ge_mode=case.kind == "GE", station_budget=budget, fixed_siting=fixed)


def run_cell(instance: Instance, case: CaseSpec, level: float, seed: int, plan: ExperimentPlan,
             siting_cache: _SitingCache | None = None) -> SweepRow:
    """Solve one sweep cell; failures are captured in the row, not raised."""
    start = time.perf_counter()
    try:
        assignment = assign_renewables(instance.generators, level, seed)
        ss = sample_scenario_set(instance, assignment, plan.n_scenarios, seed, plan.sampling)
        siting = None
        if case.needs_transport_siting:
            cache = siting_cache or _SitingCache(instance, plan.limits)
            siting = cache.get(ss)
        inst = _scaled_shed(instance, case.shed_multiplier)
        out = solve_siting(inst, ss, case_config(inst, case, siting), plan.limits)
        wall = int(round((time.perf_counter() - start) * 1000))
        if out.solution is None:
            return SweepRow(case.name, level, seed, math.nan, math.nan, 0, math.nan, math.inf,
                            out.nodes, wall, out.status.value, "no solution")
        m = compute_metrics(out.solution, ss)
        return SweepRow(case.name, level, seed, m.load_shed_fraction, m.unmet_battery_fraction,
                        m.opened_stations, out.objective, out.gap, out.nodes, wall,
                        out.status.value)
    except Exception as exc:  # noqa: BLE001 - a failed cell must not stop the sweep
        log.exception("cell %s level=%s seed=%s failed", case.name, level, seed)
        wall = int(round((time.perf_counter() - start) * 1000))
        return SweepRow(case.name, level, seed, math.nan, math.nan, 0, math.nan, math.inf, 0,
                        wall, "Error", f"{type(exc).__name__}: {exc}")


def run_penetration_sweep(instance: Instance, plan: ExperimentPlan,
                          cells: Iterable[tuple[CaseSpec, float, int]] | None = None
                          ) -> SweepResult:
    """Run every cell of ``plan`` (or the given subset) sequentially, in plan order."""
    cache = _SitingCache(instance, plan.limits)
    rows = [run_cell(instance, case, lv, seed, plan, cache)
            for case, lv, seed in (plan.cells() if cells is None else cells)]
    return SweepResult(rows)


__all__ = [
    "CSV_COLUMNS", "CaseSpec", "ExperimentPlan", "Metrics", "SolveOutcome", "SolverLimits",
    "SweepResult", "SweepRow", "case_config", "compute_metrics", "find_transport_optimal_siting",
    "ge_cases", "plan_from_dict", "plan_to_dict", "read_sweep_csv", "run_cell",
    "run_penetration_sweep", "solve_recourse", "solve_siting", "v2g_cases",
]
