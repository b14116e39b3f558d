"""Sparse bounded simplex, branch-and-bound and MPS export."""
from .bnb import MILPSolution, MILPStatus, solve_milp
from .lp import LPProblem, LPSolution, LPStatus
from .simplex import solve_lp

__all__ = ["LPProblem", "LPSolution", "LPStatus", "MILPSolution", "MILPStatus", "solve_lp",
           "solve_milp"]
