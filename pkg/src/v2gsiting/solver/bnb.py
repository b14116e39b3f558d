"""Best-bound branch-and-bound over an LP relaxation engine.

Nodes are evaluated lazily: a node enters the queue with its parent's LP
bound and is solved when popped.  Branching picks the most fractional integer
column (lowest column index on ties).  At every node whose relaxation is
fractional, two rounding heuristics (nearest, then up) fix the integer
columns and solve the remaining LP to look for an incumbent.  Children and
heuristic LPs are warm-started from the optimal basis of the node that
created them (``warm_start=False`` re-solves every LP from scratch).

The optimality gap is ``(incumbent - bound) / max(1, |incumbent|)``.
"""
from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

import numpy as np

from .lp import LPProblem, LPSolution, LPStatus
from .simplex import solve_lp

log = logging.getLogger(__name__)

LPSolver = Callable[..., LPSolution]


class MILPStatus(str, Enum):
    OPTIMAL = "Optimal"          # tree exhausted
    GAP_REACHED = "GapReached"   # stopped with gap <= target
    LIMIT = "LimitReached"       # node/iteration limit with an incumbent
    NO_INCUMBENT = "NoIncumbent"  # limit hit before any integer solution
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass(eq=False)
class MILPSolution:
    status: MILPStatus
    x: np.ndarray | None
    objective: float
    bound: float
    gap: float
    nodes: int
    lp_iterations: int
    trace: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def gap_reached(self) -> bool:
        return self.status in (MILPStatus.OPTIMAL, MILPStatus.GAP_REACHED)


def relative_gap(incumbent: float, bound: float) -> float:
    if not np.isfinite(incumbent):
        return np.inf
    return max(0.0, (incumbent - bound) / max(1.0, abs(incumbent)))


@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    depth: int = field(compare=False)
    lb: np.ndarray = field(compare=False)
    ub: np.ndarray = field(compare=False)
    basis: Any = field(compare=False, default=None)


class _Search:
    def __init__(self, lp: LPProblem, integrality: np.ndarray, gap_target: float,
                 node_limit: int, iteration_limit: int, int_tol: float,
                 lp_solver: LPSolver, heuristics: bool, warm_start: bool):
        self.lp = lp
        self.int_cols = np.flatnonzero(integrality)
        self.gap_target = gap_target
        self.node_limit = node_limit
        self.iteration_limit = iteration_limit
        self.int_tol = int_tol
        self.lp_solver = lp_solver
        self.heuristics = heuristics
        self.warm_start = warm_start
        self.incumbent = np.inf
        self.best_x: np.ndarray | None = None
        self.iterations = 0
        self.nodes = 0
        self.trace: list[tuple[int, float, float]] = []
        self._tried: set[bytes] = set()
        self._seq = 0

    def _solve(self, lb: np.ndarray, ub: np.ndarray, basis: Any = None) -> LPSolution:
        budget = max(1, self.iteration_limit - self.iterations)
        kw = {"warm_start": basis} if self.warm_start and basis is not None else {}
        sol = self.lp_solver(self.lp.with_bounds(lb, ub), max_iter=budget, **kw)
        self.iterations += sol.iterations
        return sol

    def _fractional(self, x: np.ndarray) -> np.ndarray:
        v = x[self.int_cols]
        return np.minimum(v - np.floor(v), np.ceil(v) - v)

    def _offer(self, x: np.ndarray, value: float) -> None:
        if value < self.incumbent:
            self.incumbent = value
            self.best_x = x.copy()
            log.debug("incumbent %.6g", value)

    def _round_and_fix(self, sol: LPSolution, lb: np.ndarray, ub: np.ndarray) -> None:
        v = sol.x[self.int_cols]
        for rounded in (np.floor(v + 0.5), np.ceil(v - self.int_tol)):
            rounded = np.clip(rounded, lb[self.int_cols], ub[self.int_cols])
            key = rounded.tobytes()
            if key in self._tried:
                continue
            self._tried.add(key)
            hlb, hub = lb.copy(), ub.copy()
            hlb[self.int_cols] = rounded
            hub[self.int_cols] = rounded
            fixed = self._solve(hlb, hub, sol.basis)
            if fixed.optimal:
                self._offer(fixed.x, fixed.objective)
                return

    def _push(self, bound: float, depth: int, lb: np.ndarray, ub: np.ndarray,
              basis: Any) -> None:
        self._seq += 1
        heapq.heappush(self.heap, _Node(bound, self._seq, depth, lb, ub, basis))

    def _global_bound(self) -> float:
        if not self.heap:
            return self.incumbent
        return min(self.heap[0].bound, self.incumbent)

    def _result(self, status: MILPStatus) -> MILPSolution:
        bound = self._global_bound() if self.best_x is not None else (
            self.heap[0].bound if self.heap else -np.inf)
        gap = relative_gap(self.incumbent, bound)
        return MILPSolution(status=status, x=self.best_x, objective=float(self.incumbent),
                            bound=float(bound), gap=float(gap), nodes=self.nodes,
                            lp_iterations=self.iterations, trace=self.trace)

    def run(self) -> MILPSolution:
        self.heap: list[_Node] = []
        root = self._solve(self.lp.lb.copy(), self.lp.ub.copy())
        self.nodes = 1
        if root.status is LPStatus.INFEASIBLE:
            return MILPSolution(MILPStatus.INFEASIBLE, None, np.inf, np.inf, np.inf, 1, self.iterations)
        if root.status is LPStatus.UNBOUNDED:
            return MILPSolution(MILPStatus.UNBOUNDED, None, -np.inf, -np.inf, np.inf, 1, self.iterations)
        if root.status is LPStatus.ITERATION_LIMIT:
            return MILPSolution(MILPStatus.NO_INCUMBENT, None, np.inf, -np.inf, np.inf, 1, self.iterations)

        pending = (root, 0, self.lp.lb.copy(), self.lp.ub.copy())
        while True:
            if pending is not None:
                sol, depth, lb, ub = pending
                pending = None
                self._process(sol, depth, lb, ub)
            bound = self._global_bound()
            self.trace.append((self.nodes, bound, self.incumbent))
            if not self.heap:
                if self.best_x is None:
                    return MILPSolution(MILPStatus.INFEASIBLE, None, np.inf, np.inf, np.inf,
                                        self.nodes, self.iterations, self.trace)
                return self._result(MILPStatus.OPTIMAL)
            if relative_gap(self.incumbent, bound) <= self.gap_target:
                return self._result(MILPStatus.GAP_REACHED)
            if self.nodes >= self.node_limit or self.iterations >= self.iteration_limit:
                return self._result(MILPStatus.LIMIT if self.best_x is not None
                                    else MILPStatus.NO_INCUMBENT)
            node = heapq.heappop(self.heap)
            if node.bound >= self.incumbent:
                continue
            sol = self._solve(node.lb, node.ub, node.basis)
            self.nodes += 1
            if sol.status is LPStatus.ITERATION_LIMIT:
                # put it back so the reported bound stays valid
                heapq.heappush(self.heap, node)
                continue
            if sol.optimal:
                pending = (sol, node.depth, node.lb, node.ub)

    def _process(self, sol: LPSolution, depth: int, lb: np.ndarray, ub: np.ndarray) -> None:
        if sol.objective >= self.incumbent:
            return
        frac = self._fractional(sol.x)
        if frac.size == 0 or frac.max() <= self.int_tol:
            x = sol.x.copy()
            x[self.int_cols] = np.round(x[self.int_cols])
            self._offer(x, sol.objective)
            return
        if self.heuristics:
            self._round_and_fix(sol, lb, ub)
        # most fractional; exact ties resolved by the lowest column
        score = np.round(frac, 12)
        pick = int(np.argmax(score))
        col = int(self.int_cols[pick])
        v = sol.x[col]
        down_ub = ub.copy()
        down_ub[col] = np.floor(v)
        up_lb = lb.copy()
        up_lb[col] = np.ceil(v)
        self._push(sol.objective, depth + 1, lb, down_ub, sol.basis)
        self._push(sol.objective, depth + 1, up_lb, ub, sol.basis)


def solve_milp(model, gap_target: float = 0.01, node_limit: int = 100_000,
               iteration_limit: int = 1_000_000, int_tol: float = 1e-6,
               lp_solver: LPSolver = solve_lp, heuristics: bool = True,
               warm_start: bool = True) -> MILPSolution:
    """Branch-and-bound until the relative gap is at most ``gap_target``.

    ``model`` is anything with ``lp`` (an :class:`LPProblem`) and
    ``integrality`` (boolean mask of integer columns), such as the extensive
    form.  Integer columns must have finite bounds.  ``lp_solver`` is called
    as ``lp_solver(lp, max_iter=..., [warm_start=basis])``.  Exploration is
    sequential, so results are reproducible for fixed inputs.
    """
    lp, integrality = model.lp, np.asarray(model.integrality, dtype=bool)
    if np.any(~np.isfinite(lp.lb[integrality])) or np.any(~np.isfinite(lp.ub[integrality])):
        raise ValueError("integer columns need finite bounds")
    search = _Search(lp, integrality, gap_target, node_limit, iteration_limit, int_tol,
                     lp_solver, heuristics, warm_start)
    return search.run()
