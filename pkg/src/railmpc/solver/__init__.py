"""LP/MILP solving: bounded primal simplex plus best-bound branch and bound."""
from .bnb import solve_milp
from .core import (FEASIBLE_TIME_LIMIT, INFEASIBLE, NUMERICAL, OPTIMAL, TIME_LIMIT, UNBOUNDED,
                   FeasibilityReport, SolveResult, SolverConfig, check_feasible, relative_gap)
from .simplex import solve_lp


def solve(program, config=None):
    """Dispatch on integrality marks."""
    return solve_milp(program, config) if program.is_mip else solve_lp(program, config)


__all__ = [
    "solve", "solve_lp", "solve_milp", "check_feasible", "relative_gap", "SolveResult",
    "SolverConfig", "FeasibilityReport", "OPTIMAL", "FEASIBLE_TIME_LIMIT", "TIME_LIMIT",
    "INFEASIBLE", "UNBOUNDED", "NUMERICAL",
]
