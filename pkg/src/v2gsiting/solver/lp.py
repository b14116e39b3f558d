from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Any

import numpy as np
import scipy.sparse as sp


class LPStatus(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITERATION_LIMIT = "IterationLimit"


@dataclass(frozen=True, eq=False)
class LPProblem:
    """``min c@x  s.t.  A@x (<=,=,>=) rhs,  lb <= x <= ub``.

    ``senses`` holds one of ``"L"``, ``"E"``, ``"G"`` per row; infinite bounds
    are ``-inf``/``inf``.
    """

    c: np.ndarray
    A: sp.csr_matrix
    senses: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        A = sp.csr_matrix(self.A, dtype=float)
        m, n = A.shape
        senses = np.asarray(self.senses, dtype="<U1").reshape(m)
        rhs = np.asarray(self.rhs, dtype=float).reshape(m)
        lb = np.asarray(self.lb, dtype=float).reshape(n)
        ub = np.asarray(self.ub, dtype=float).reshape(n)
        if c.shape != (n,):
            raise ValueError(f"objective has {c.shape} entries for {n} columns")
        if not set(senses.tolist()) <= {"L", "E", "G"}:
            raise ValueError("row senses must be 'L', 'E' or 'G'")
        if np.any(np.isnan(lb)) or np.any(np.isnan(ub)) or np.any(np.isnan(rhs)):
            raise ValueError("NaN in bounds or right-hand side")
        for name, v in (("c", c), ("A", A), ("senses", senses), ("rhs", rhs), ("lb", lb), ("ub", ub)):
            object.__setattr__(self, name, v)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def n_cols(self) -> int:
        return self.A.shape[1]

    def with_bounds(self, lb: np.ndarray, ub: np.ndarray) -> "LPProblem":
        return replace(self, lb=lb, ub=ub)

    def row_activity(self, x: np.ndarray) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float)

    def row_violations(self, x: np.ndarray) -> np.ndarray:
        """Non-negative amount by which each row is violated at ``x``."""
        act = self.row_activity(x)
        over = np.maximum(act - self.rhs, 0.0)
        under = np.maximum(self.rhs - act, 0.0)
        return np.where(self.senses == "L", over,
                        np.where(self.senses == "G", under, np.abs(act - self.rhs)))

    def max_violation(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        rows = self.row_violations(x)
        bnd = np.maximum(np.maximum(self.lb - x, x - self.ub), 0.0)
        return float(max(rows.max(initial=0.0), bnd.max(initial=0.0)))


@dataclass(eq=False)
class LPSolution:
    status: LPStatus
    x: np.ndarray | None = None
    objective: float = float("nan")
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    iterations: int = 0
    # solver-specific restart information (an optimal basis for the simplex)
    basis: Any = None

    @property
    def optimal(self) -> bool:
        return self.status is LPStatus.OPTIMAL
