from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionMismatchError, InvalidParameterError

OPTIMAL = "optimal"
FEASIBLE_TIME_LIMIT = "feasible-time-limit"
TIME_LIMIT = "time-limit"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL = "numerical-failure"


@dataclass(frozen=True)
class SolverConfig:
    feas_tol: float = 1e-6
    int_tol: float = 1e-5
    gap_tol: float = 1e-6
    time_limit: float = 240.0
    branching: str = "most-fractional"
    node_selection: str = "best-bound"
    opt_tol: float = 1e-9
    pivot_tol: float = 1e-9
    bland_after: int = 50
    max_iter: int | None = None
    warm_start: bool = True

    def __post_init__(self):
        for name in ("feas_tol", "int_tol", "gap_tol", "time_limit", "opt_tol", "pivot_tol"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be > 0")
        if self.branching != "most-fractional" or self.node_selection != "best-bound":
            raise InvalidParameterError("only most-fractional branching with best-bound selection")


@dataclass
class SolveResult:
    status: str
    x: np.ndarray | None
    objective: float
    bound: float
    gap: float
    nodes: int
    wall_time: float
    iterations: int = 0
    bound_trace: list[float] = field(default_factory=list)
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status in (OPTIMAL, FEASIBLE_TIME_LIMIT)


def relative_gap(incumbent: float, bound: float) -> float:
    if not np.isfinite(incumbent):
        return np.inf
    return max(0.0, incumbent - bound) / max(abs(incumbent), 1.0)


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    worst_violation: float
    where: str

    def __bool__(self) -> bool:
        return self.feasible


def check_feasible(program, point, feas_tol: float = 1e-6) -> FeasibilityReport:
    """Row-by-row and bound check of ``point`` against ``program``."""
    x = np.asarray(point, dtype=float)
    if x.shape != (program.n_vars,):
        raise DimensionMismatchError(f"point has shape {x.shape}, program has {program.n_vars} variables")
    worst, where = 0.0, ""
    if program.A_ub.shape[0]:
        r = program.A_ub @ x - program.b_ub
        i = int(np.argmax(r))
        if r[i] > worst:
            worst, where = float(r[i]), program.ub_names[i]
    if program.A_eq.shape[0]:
        r = np.abs(program.A_eq @ x - program.b_eq)
        i = int(np.argmax(r))
        if r[i] > worst:
            worst, where = float(r[i]), program.eq_names[i]
    lo = program.lb - x
    hi = x - program.ub
    for viol in (lo, hi):
        if viol.size:
            i = int(np.argmax(viol))
            if viol[i] > worst:
                worst, where = float(viol[i]), f"bound:{program.variables[i].name}"
    return FeasibilityReport(worst <= feas_tol, worst, where)
