"""Extensive-form MILP for siting battery-exchange stations.

First stage: open flag ``x_i`` and battery stock ``w_i`` per candidate station.
Second stage, per scenario: batteries kept for PHEVs ``t_i`` and discharged to
the grid ``s_i``, unmet demand ``q_j`` per route, assignments ``y_ij``, and a DC
power flow (line flows ``alpha``, bus angles ``theta``, load shed ``delta``,
generator output ``beta``).

Generator output is modelled per generator, not per bus, so units sharing a
bus keep their own cost and capacity.  Line and generator limits, the load
shed cap and the angle reference are column bounds rather than rows.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from .core import Instance
from .scenarios import Scenario, ScenarioSet
from .solver.lp import LPProblem

FIRST_STAGE_KINDS = ("x", "w")
SECOND_STAGE_KINDS = ("t", "s", "q", "y", "alpha", "theta", "delta", "beta")
GRID_KINDS = ("alpha", "theta", "delta", "beta")


@dataclass(frozen=True)
class ModelConfig:
    ge_mode: bool = False
    station_budget: int | None = None
    fixed_siting: tuple[float, ...] | None = None
    reference_bus: int | None = None
    integer_stock: bool = False
    # extras used by the experiment harness and the decomposition checks
    fixed_stock: tuple[float, ...] | None = None
    include_grid: bool = True


class VarKey(NamedTuple):
    kind: str
    ids: tuple[int, ...]
    scenario: int | None


class VarIndex:
    """Bijection between ``(kind, ids, scenario)`` and column numbers.

    First-stage columns (``x`` then ``w``) come first, followed by one
    fixed-size block per scenario in the order of ``SECOND_STAGE_KINDS``.
    """

    def __init__(self, n_stations: int, n_routes: int, pairs: Sequence[tuple[int, int]],
                 n_lines: int, n_buses: int, n_gens: int, n_scenarios: int,
                 first_stage: bool = True, include_grid: bool = True):
        self.n_stations = n_stations
        self.n_routes = n_routes
        self.pairs = [tuple(p) for p in pairs]
        self.pair_pos = {p: k for k, p in enumerate(self.pairs)}
        self.n_scenarios = n_scenarios
        self.first_stage = first_stage
        self.include_grid = include_grid
        self.sizes = {"x": n_stations, "w": n_stations, "t": n_stations, "s": n_stations,
                      "q": n_routes, "y": len(self.pairs), "alpha": n_lines, "theta": n_buses,
                      "delta": n_buses, "beta": n_gens}
        self.first_kinds = FIRST_STAGE_KINDS if first_stage else ()
        self.scen_kinds = tuple(k for k in SECOND_STAGE_KINDS
                                if include_grid or k not in GRID_KINDS)
        self.first_offset = {}
        pos = 0
        for k in self.first_kinds:
            self.first_offset[k] = pos
            pos += self.sizes[k]
        self.n_first = pos
        self.scen_offset = {}
        pos = 0
        for k in self.scen_kinds:
            self.scen_offset[k] = pos
            pos += self.sizes[k]
        self.block_size = pos
        self.n_columns = self.n_first + n_scenarios * self.block_size

    def _local(self, kind: str, ids: tuple[int, ...]) -> int:
        if kind == "y":
            return self.pair_pos[tuple(ids)]
        (k,) = ids
        if not 0 <= k < self.sizes[kind]:
            raise IndexError(f"{kind}{ids} out of range")
        return k

    def column(self, kind: str, *ids: int, scenario: int | None = None) -> int:
        local = self._local(kind, ids)
        if kind in self.first_kinds:
            return self.first_offset[kind] + local
        if scenario is None or not 0 <= scenario < self.n_scenarios:
            raise IndexError(f"{kind} needs a scenario in range, got {scenario}")
        return self.n_first + scenario * self.block_size + self.scen_offset[kind] + local

    def block(self, kind: str, scenario: int | None = None) -> np.ndarray:
        """Columns of one variable family (one scenario for second-stage kinds)."""
        size = self.sizes[kind]
        if kind in self.first_kinds:
            start = self.first_offset[kind]
        else:
            start = self.n_first + scenario * self.block_size + self.scen_offset[kind]
        return np.arange(start, start + size)

    def key(self, col: int) -> VarKey:
        if not 0 <= col < self.n_columns:
            raise IndexError(col)
        if col < self.n_first:
            for kind in reversed(self.first_kinds):
                if col >= self.first_offset[kind]:
                    return VarKey(kind, (col - self.first_offset[kind],), None)
        scen, local = divmod(col - self.n_first, self.block_size)
        for kind in reversed(self.scen_kinds):
            off = self.scen_offset[kind]
            if local >= off:
                k = local - off
                ids = self.pairs[k] if kind == "y" else (k,)
                return VarKey(kind, tuple(ids), scen)
        raise AssertionError("unreachable")

    def label(self, col: int) -> str:
        kind, ids, scen = self.key(col)
        text = f"{kind}[{','.join(map(str, ids))}]"
        return text if scen is None else f"{text}@{scen}"


@dataclass(eq=False)
class RecourseValues:
    t: np.ndarray
    s: np.ndarray
    q: np.ndarray
    y: np.ndarray  # stations x routes, zero where unreachable
    alpha: np.ndarray
    theta: np.ndarray
    delta: np.ndarray
    beta: np.ndarray


@dataclass(eq=False)
class SitingSolution:
    x: np.ndarray
    w: np.ndarray
    recourse: list[RecourseValues] = field(default_factory=list)
    objective: float | None = None

    @property
    def opened(self) -> int:
        return int(np.round(self.x).sum())


@dataclass(eq=False)
class MILPModel:
    lp: LPProblem
    integrality: np.ndarray
    registry: VarIndex
    row_labels: list[tuple[str, tuple]]
    config: ModelConfig = field(default_factory=ModelConfig)
    name: str = "V2GSITE"

    @property
    def n_columns(self) -> int:
        return self.lp.n_cols

    @property
    def n_rows(self) -> int:
        return self.lp.n_rows

    def objective(self, v: np.ndarray) -> float:
        return float(self.lp.c @ v)

    def row_residuals(self, v: np.ndarray) -> dict[tuple[str, tuple], float]:
        viol = self.lp.row_violations(v)
        return {lab: float(a) for lab, a in zip(self.row_labels, viol)}

    def unpack(self, v: np.ndarray, objective: float | None = None) -> SitingSolution:
        """Split a column vector into first-stage values and per-scenario recourse."""
        reg = self.registry
        v = np.asarray(v, dtype=float)
        I, J = reg.n_stations, reg.n_routes
        if reg.first_stage:
            x, w = v[reg.block("x")], v[reg.block("w")]
        else:
            x = w = np.zeros(I)
        pi = np.array([p[0] for p in reg.pairs], dtype=int)
        pj = np.array([p[1] for p in reg.pairs], dtype=int)
        recourse = []
        for k in range(reg.n_scenarios):
            y = np.zeros((I, J))
            y[pi, pj] = v[reg.block("y", k)]
            grid = {kind: (v[reg.block(kind, k)] if reg.include_grid else np.zeros(reg.sizes[kind]))
                    for kind in GRID_KINDS}
            recourse.append(RecourseValues(t=v[reg.block("t", k)], s=v[reg.block("s", k)],
                                           q=v[reg.block("q", k)], y=y, **grid))
        # "+ 0.0" turns -0.0 into 0.0
        return SitingSolution(x=x + 0.0, w=w + 0.0, recourse=recourse,
                              objective=self.objective(v) if objective is None else objective)

    def pack(self, solution: SitingSolution) -> np.ndarray:
        reg = self.registry
        v = np.zeros(self.n_columns)
        if reg.first_stage:
            v[reg.block("x")] = solution.x
            v[reg.block("w")] = solution.w
        pi = np.array([p[0] for p in reg.pairs], dtype=int)
        pj = np.array([p[1] for p in reg.pairs], dtype=int)
        for k, rv in enumerate(solution.recourse):
            for kind in reg.scen_kinds:
                val = rv.y[pi, pj] if kind == "y" else getattr(rv, kind)
                v[reg.block(kind, k)] = val
        return v


# --------------------------------------------------------------------------
# assembly
# --------------------------------------------------------------------------

def reference_buses(instance: Instance, reference_bus: int | None = None) -> list[int]:
    """One angle-reference bus per grid island.

    ``reference_bus`` wins for its own island; other islands use their lowest
    id bus that hosts a generator, or their lowest id bus.
    """
    islands = instance.grid_islands
    has_gen = np.zeros(len(instance.buses), dtype=bool)
    for g in instance.generators:
        has_gen[g.bus] = True
    refs = {}
    for u in range(len(instance.buses)):
        key = (0 if has_gen[u] else 1, u)
        isl = islands[u]
        if isl not in refs or key < refs[isl]:
            refs[isl] = key
    if reference_bus is not None:
        if not 0 <= reference_bus < len(instance.buses):
            raise ValueError(f"reference bus {reference_bus} does not exist")
        refs[islands[reference_bus]] = (-1, reference_bus)
    return sorted(u for _, u in refs.values())


def reachable_pairs(instance: Instance) -> list[tuple[int, int]]:
    c = instance.detour_costs
    return [(i, j) for i in range(c.shape[0]) for j in range(c.shape[1]) if not np.isnan(c[i, j])]


class _Assembler:
    def __init__(self, n_cols: int):
        self.c = np.zeros(n_cols)
        self.lb = np.zeros(n_cols)
        self.ub = np.full(n_cols, np.inf)
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []
        self.senses: list[str] = []
        self.rhs: list[float] = []
        self.labels: list[tuple[str, tuple]] = []

    def add_row(self, cols, vals, sense: str, rhs: float, label: tuple[str, tuple]) -> None:
        r = len(self.senses)
        cols = np.asarray(cols, dtype=int)
        self.rows.append(np.full(len(cols), r))
        self.cols.append(cols)
        self.vals.append(np.asarray(vals, dtype=float))
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        self.labels.append(label)

    def finish(self) -> LPProblem:
        n = len(self.c)
        m = len(self.senses)
        if m:
            A = sp.coo_matrix((np.concatenate(self.vals),
                               (np.concatenate(self.rows), np.concatenate(self.cols))),
                              shape=(m, n)).tocsr()
            A.sum_duplicates()
        else:
            A = sp.csr_matrix((0, n))
        return LPProblem(c=self.c, A=A, senses=np.array(self.senses, dtype="<U1"),
                         rhs=np.array(self.rhs), lb=self.lb, ub=self.ub)


class _GridData:
    """Per-instance incidence data shared by every scenario block."""

    def __init__(self, instance: Instance, config: ModelConfig):
        self.instance = instance
        self.pairs = reachable_pairs(instance)
        self.detour = instance.detour_costs
        self.refs = reference_buses(instance, config.reference_bus)
        n = len(instance.buses)
        self.out_lines = [[] for _ in range(n)]
        self.in_lines = [[] for _ in range(n)]
        for k, ln in enumerate(instance.lines):
            self.out_lines[ln.from_bus].append(k)
            self.in_lines[ln.to_bus].append(k)
        self.gens_at = [[] for _ in range(n)]
        for g in instance.generators:
            self.gens_at[g.bus].append(g.id)
        self.stations_at = [[] for _ in range(n)]
        if config.include_grid:
            for st in instance.stations:
                self.stations_at[st.grid_bus].append(st.id)
        self.pairs_of_station = [[] for _ in instance.stations]
        self.pairs_of_route = [[] for _ in instance.routes]
        for k, (i, j) in enumerate(self.pairs):
            self.pairs_of_station[i].append(k)
            self.pairs_of_route[j].append(k)


def _add_scenario_block(asm: _Assembler, reg: VarIndex, data: _GridData, sc: Scenario, k: int,
                        weight: float, config: ModelConfig, w_cols=None, w_const=None) -> None:
    """Columns, bounds, costs and rows for one scenario.

    Station stock enters the stock split rows either as columns (``w_cols``, extensive form)
    or as constants (``w_const``, single-scenario recourse LP).
    """
    inst = data.instance
    a = inst.params.battery_power
    t, s, q, y = (reg.block(kind, k) for kind in ("t", "s", "q", "y"))

    for p, (i, j) in enumerate(data.pairs):
        asm.c[y[p]] = weight * data.detour[i, j]
    for j, r in enumerate(inst.routes):
        asm.c[q[j]] = 0.0 if config.ge_mode else weight * r.unmet_penalty

    for i in range(len(inst.stations)):
        if w_cols is not None:
            asm.add_row([s[i], t[i], w_cols[i]], [1.0, 1.0, -1.0], "L", 0.0, ("stock_split", (i, k)))
        else:
            asm.add_row([s[i], t[i]], [1.0, 1.0], "L", w_const[i], ("stock_split", (i, k)))
    for j in range(len(inst.routes)):
        ps = data.pairs_of_route[j]
        asm.add_row(np.concatenate([y[ps], [q[j]]]), np.ones(len(ps) + 1), "E",
                    sc.route_demands[j], ("route_demand", (j, k)))
    for i in range(len(inst.stations)):
        ps = data.pairs_of_station[i]
        asm.add_row(np.concatenate([y[ps], [t[i]]]), np.concatenate([np.ones(len(ps)), [-1.0]]),
                    "L", 0.0, ("station_service", (i, k)))

    if not reg.include_grid:
        return
    al, th, de, be = (reg.block(kind, k) for kind in GRID_KINDS)
    for li, ln in enumerate(inst.lines):
        asm.lb[al[li]] = -ln.capacity
        asm.ub[al[li]] = ln.capacity
    asm.lb[th] = -np.inf
    asm.lb[th[data.refs]] = 0.0
    asm.ub[th[data.refs]] = 0.0
    asm.ub[de] = sc.bus_loads
    asm.c[de] = weight * np.array([b.shed_penalty for b in inst.buses])
    asm.ub[be] = sc.gen_capacities
    asm.c[be] = weight * sc.gen_costs

    for u in range(len(inst.buses)):
        cols = ([al[x] for x in data.out_lines[u]] + [al[x] for x in data.in_lines[u]]
                + [de[u]] + [be[g] for g in data.gens_at[u]] + [s[i] for i in data.stations_at[u]])
        vals = ([1.0] * len(data.out_lines[u]) + [-1.0] * len(data.in_lines[u]) + [-1.0]
                + [-1.0] * len(data.gens_at[u]) + [-a] * len(data.stations_at[u]))
        asm.add_row(cols, vals, "E", -sc.bus_loads[u], ("power_balance", (u, k)))
    for li, ln in enumerate(inst.lines):
        inv = 1.0 / ln.reactance
        asm.add_row([al[li], th[ln.from_bus], th[ln.to_bus]], [1.0, -inv, inv], "E", 0.0,
                    ("dc_flow", (li, k)))


def _check_siting(values, n: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != (n,):
        raise ValueError(f"{name} has {arr.size} entries for {n} stations")
    if np.any((arr != 0) & (arr != 1)):
        raise ValueError(f"{name} must be 0/1 valued")
    return arr


def build_extensive_form(instance: Instance, scenario_set: ScenarioSet | Sequence[Scenario],
                         config: ModelConfig | None = None) -> MILPModel:
    """Deterministic equivalent over all scenarios, weighted by their probabilities."""
    config = config or ModelConfig()
    scenarios = list(scenario_set)
    if not scenarios:
        raise ValueError("the scenario set is empty")
    I = len(instance.stations)
    data = _GridData(instance, config)
    reg = VarIndex(I, len(instance.routes), data.pairs, len(instance.lines), len(instance.buses),
                   len(instance.generators), len(scenarios), include_grid=config.include_grid)
    asm = _Assembler(reg.n_columns)
    x, w = reg.block("x"), reg.block("w")
    asm.ub[x] = 1.0
    asm.c[x] = [st.fixed_cost for st in instance.stations]
    asm.c[w] = [st.per_battery_cost for st in instance.stations]
    if config.fixed_siting is not None:
        fixed = _check_siting(config.fixed_siting, I, "fixed_siting")
        asm.lb[x] = fixed
        asm.ub[x] = fixed
    if config.fixed_stock is not None:
        stock = np.asarray(config.fixed_stock, dtype=float)
        if stock.shape != (I,):
            raise ValueError("fixed_stock length does not match the station count")
        asm.lb[w] = stock
        asm.ub[w] = stock
    if config.integer_stock and config.fixed_stock is None:
        # implied by stock_max; branching needs a finite box
        asm.ub[w] = [st.max_batteries for st in instance.stations]
    for i, st in enumerate(instance.stations):
        asm.add_row([w[i], x[i]], [1.0, -st.min_batteries], "G", 0.0, ("stock_min", (i,)))
        asm.add_row([w[i], x[i]], [1.0, -st.max_batteries], "L", 0.0, ("stock_max", (i,)))
    if config.station_budget is not None:
        asm.add_row(x, np.ones(I), "L", config.station_budget, ("budget", ()))

    for k, sc in enumerate(scenarios):
        _add_scenario_block(asm, reg, data, sc, k, float(sc.probability), config, w_cols=w)

    integrality = np.zeros(reg.n_columns, dtype=bool)
    integrality[x] = True
    if config.integer_stock:
        integrality[w] = True
    return MILPModel(lp=asm.finish(), integrality=integrality, registry=reg,
                     row_labels=asm.labels, config=config)


def build_second_stage_lp(instance: Instance, scenario: Scenario, x, w,
                          config: ModelConfig | None = None) -> MILPModel:
    """Recourse LP of one scenario with the first stage held at ``(x, w)``.

    Costs are not probability-weighted: the optimum is the recourse cost of
    this scenario alone.
    """
    config = config or ModelConfig()
    I = len(instance.stations)
    x = _check_siting(x, I, "x")
    w = np.asarray(w, dtype=float)
    for i, st in enumerate(instance.stations):
        if not st.min_batteries * x[i] - 1e-9 <= w[i] <= st.max_batteries * x[i] + 1e-9:
            raise ValueError(f"stock w[{i}]={w[i]} violates the station's bounds for x={x[i]:g}")
    data = _GridData(instance, config)
    reg = VarIndex(I, len(instance.routes), data.pairs, len(instance.lines), len(instance.buses),
                   len(instance.generators), 1, first_stage=False,
                   include_grid=config.include_grid)
    asm = _Assembler(reg.n_columns)
    _add_scenario_block(asm, reg, data, scenario, 0, 1.0, config, w_const=w)
    return MILPModel(lp=asm.finish(), integrality=np.zeros(reg.n_columns, dtype=bool),
                     registry=reg, row_labels=asm.labels, config=config, name="RECOURSE")


def first_stage_cost(instance: Instance, x, w) -> float:
    return float(sum(st.fixed_cost * x[i] + st.per_battery_cost * w[i]
                     for i, st in enumerate(instance.stations)))


# --------------------------------------------------------------------------
# feasibility re-check against raw data
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstraintViolation:
    constraint: str
    index: tuple
    amount: float

    def __str__(self) -> str:
        return f"{self.constraint}{self.index}: violated by {self.amount:.3g}"


def check_solution_feasibility(instance: Instance, scenario_set: ScenarioSet | Sequence[Scenario],
                               solution: SitingSolution, tol: float = 1e-6,
                               config: ModelConfig | None = None) -> list[ConstraintViolation]:
    """Re-evaluate every model constraint on ``solution`` from the raw data.

    Does not look at any assembled matrix.  Constraint names follow the row
    labels of :func:`build_extensive_form`; bound checks are reported as
    ``bound:<kind>`` and integrality as ``integrality:x``.
    """
    config = config or ModelConfig()
    scenarios = list(scenario_set)
    out: list[ConstraintViolation] = []

    def report(name, index, amount):
        if amount > tol:
            out.append(ConstraintViolation(name, index, float(amount)))

    x = np.asarray(solution.x, dtype=float)
    w = np.asarray(solution.w, dtype=float)
    a = instance.params.battery_power
    for i, st in enumerate(instance.stations):
        report("stock_min", (i,), st.min_batteries * x[i] - w[i])
        report("stock_max", (i,), w[i] - st.max_batteries * x[i])
        report("bound:x", (i,), max(-x[i], x[i] - 1.0))
        report("integrality:x", (i,), abs(x[i] - round(x[i])))
        report("bound:w", (i,), -w[i])
        if config.fixed_siting is not None:
            report("fixed_siting", (i,), abs(x[i] - config.fixed_siting[i]))
    if config.station_budget is not None:
        report("budget", (), x.sum() - config.station_budget)

    detour = instance.detour_costs
    unreachable = np.isnan(detour)
    refs = reference_buses(instance, config.reference_bus) if config.include_grid else []
    if len(solution.recourse) != len(scenarios):
        raise ValueError("solution does not carry one recourse block per scenario")
    for k, (sc, rv) in enumerate(zip(scenarios, solution.recourse)):
        for name, arr in (("t", rv.t), ("s", rv.s), ("q", rv.q)):
            for idx, v in enumerate(arr):
                report(f"bound:{name}", (idx, k), -v)
        I, J = rv.y.shape if rv.y.size else (len(instance.stations), len(instance.routes))
        for i in range(I):
            for j in range(J):
                report("bound:y", (i, j, k), -rv.y[i, j])
                if unreachable[i, j]:
                    report("unreachable:y", (i, j, k), abs(rv.y[i, j]))
        for i in range(len(instance.stations)):
            report("stock_split", (i, k), rv.s[i] + rv.t[i] - w[i])
            report("station_service", (i, k), rv.y[i, :].sum() - rv.t[i])
        for j in range(len(instance.routes)):
            report("route_demand", (j, k), abs(rv.y[:, j].sum() + rv.q[j] - sc.route_demands[j]))

        if not config.include_grid:
            continue
        net_out = np.zeros(len(instance.buses))
        for li, ln in enumerate(instance.lines):
            f = rv.alpha[li]
            net_out[ln.from_bus] += f
            net_out[ln.to_bus] -= f
            report("dc_flow", (li, k), abs(f - (rv.theta[ln.from_bus] - rv.theta[ln.to_bus]) / ln.reactance))
            report("bound:alpha", (li, k), abs(f) - ln.capacity)
        supply = -np.asarray(sc.bus_loads) + rv.delta
        for g in instance.generators:
            supply[g.bus] += rv.beta[g.id]
            report("bound:beta", (g.id, k), max(-rv.beta[g.id], rv.beta[g.id] - sc.gen_capacities[g.id]))
        for st in instance.stations:
            supply[st.grid_bus] += a * rv.s[st.id]
        for u in range(len(instance.buses)):
            report("power_balance", (u, k), abs(net_out[u] - supply[u]))
            report("bound:delta", (u, k), max(-rv.delta[u], rv.delta[u] - sc.bus_loads[u]))
        for u in refs:
            report("reference", (u, k), abs(rv.theta[u]))
    return out
