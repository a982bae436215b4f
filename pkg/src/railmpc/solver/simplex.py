"""Bounded-variable simplex on a dense tableau.

The LP is brought to ``A x + s = b`` form (one slack per inequality row) with
``lb <= x <= ub`` kept as native bounds; nonbasic columns sit at one of their
bounds.  Phase I uses artificial columns seeded from the all-at-lower-bound
point.  Pricing is Dantzig's rule until a streak of degenerate pivots, after
which Bland's rule takes over for the rest of the phase.

A dual simplex on the same tableau re-optimizes after bound changes; branch
and bound uses it to warm-start child nodes from the parent's final basis.
"""
from __future__ import annotations

import time

import numpy as np

from ..errors import InvalidParameterError
from .core import (INFEASIBLE, NUMERICAL, OPTIMAL, TIME_LIMIT, UNBOUNDED, SolveResult, SolverConfig,
                   check_feasible)


class Tableau:
    """Simplex state: ``T = B^-1 [A | b]`` plus values, bounds and costs."""

    def __init__(self, T, basis, x, lb, ub, cost, n_struct, at_upper):
        self.T = T
        self.basis = basis
        self.x = x
        self.lb = lb
        self.ub = ub
        self.cost = cost
        self.n_struct = n_struct
        self.at_upper = at_upper
        self.iterations = 0
        self.refresh_reduced_costs()

    @property
    def m(self) -> int:
        return self.T.shape[0]

    @property
    def ncol(self) -> int:
        return self.T.shape[1] - 1

    def copy(self) -> "Tableau":
        t = Tableau.__new__(Tableau)
        t.T = self.T.copy()
        t.basis = self.basis.copy()
        t.x = self.x.copy()
        t.lb = self.lb.copy()
        t.ub = self.ub.copy()
        t.cost = self.cost
        t.n_struct = self.n_struct
        t.at_upper = self.at_upper.copy()
        t.d = self.d.copy()
        t.iterations = 0
        return t

    def refresh_reduced_costs(self):
        A = self.T[:, :-1]
        self.d = self.cost - self.cost[self.basis] @ A

    def recompute_basics(self):
        """Drift-free basic values from the transformed right-hand side."""
        nonbasic = np.ones(self.ncol, dtype=bool)
        nonbasic[self.basis] = False
        xn = np.where(nonbasic, self.x, 0.0)
        self.x[self.basis] = self.T[:, -1] - self.T[:, :-1] @ xn

    def pivot(self, r: int, j: int):
        T = self.T
        prow = T[r] / T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, prow)
        T[r] = prow
        self.d -= self.d[j] * prow[:-1]
        self.d[j] = 0.0
        self.basis[r] = j
        self.iterations += 1


def _standard_form(A_ub, b_ub, A_eq, b_eq, lb, ub):
    m1, n = A_ub.shape
    m2 = A_eq.shape[0]
    m = m1 + m2
    A = np.zeros((m, n + m1))
    A[:m1, :n] = A_ub
    A[:m1, n:] = np.eye(m1)
    A[m1:, :n] = A_eq
    b = np.concatenate([b_ub, b_eq])
    lo = np.concatenate([lb, np.zeros(m1)])
    hi = np.concatenate([ub, np.full(m1, np.inf)])
    return A, b, lo, hi, m1


def build_phase_one(A_ub, b_ub, A_eq, b_eq, lb, ub) -> Tableau:
    if np.any(~np.isfinite(lb)):
        raise InvalidParameterError("every variable needs a finite lower bound")
    A, b, lo, hi, m1 = _standard_form(A_ub, b_ub, A_eq, b_eq, lb, ub)
    m, ncol = A.shape
    n = ncol - m1
    x = lo.copy()
    r = b - A @ x
    use_slack = np.zeros(m, dtype=bool)
    use_slack[:m1] = r[:m1] >= 0
    art_rows = np.flatnonzero(~use_slack)
    sign = np.where(r >= 0, 1.0, -1.0)
    sign[use_slack] = 1.0
    n_art = len(art_rows)
    full = np.zeros((m, ncol + n_art + 1))
    full[:, :ncol] = A
    full[art_rows, ncol + np.arange(n_art)] = sign[art_rows]
    full[:, -1] = b
    full *= sign[:, None]
    basis = np.empty(m, dtype=np.int64)
    basis[use_slack] = n + np.flatnonzero(use_slack)
    basis[art_rows] = ncol + np.arange(n_art)
    xs = np.concatenate([x, np.zeros(n_art)])
    xs[basis] = np.abs(r)
    lo_all = np.concatenate([lo, np.zeros(n_art)])
    hi_all = np.concatenate([hi, np.full(n_art, np.inf)])
    cost = np.zeros(ncol + n_art)
    cost[ncol:] = 1.0
    tab = Tableau(full, basis, xs, lo_all, hi_all, cost, n, np.zeros(ncol + n_art, dtype=bool))
    tab.n_art = n_art
    tab.n_real = ncol
    return tab


def primal(tab: Tableau, cfg: SolverConfig, max_iter: int, deadline: float | None = None) -> str:
    """Primal simplex from a primal-feasible basis. Returns a status string."""
    bland = False
    degenerate = 0
    m = tab.m
    movable = (tab.ub - tab.lb) > 0
    for _ in range(max_iter):
        d = tab.d
        nonbasic = movable.copy()
        nonbasic[tab.basis] = False
        up = tab.at_upper
        score = np.where(nonbasic & ~up & (d < -cfg.opt_tol), -d, 0.0)
        score += np.where(nonbasic & up & (d > cfg.opt_tol), d, 0.0)
        if bland:
            cand = np.flatnonzero(score)
            if cand.size == 0:
                return OPTIMAL
            j = int(cand[0])
        else:
            j = int(np.argmax(score))
            if score[j] <= 0.0:
                return OPTIMAL
        sigma = -1.0 if up[j] else 1.0
        alpha = sigma * tab.T[:, j]
        bidx = tab.basis
        xb = tab.x[bidx]
        ratios = np.full(m, np.inf)
        pos = alpha > cfg.pivot_tol
        neg = alpha < -cfg.pivot_tol
        ratios[pos] = (xb[pos] - tab.lb[bidx][pos]) / alpha[pos]
        ratios[neg] = (tab.ub[bidx][neg] - xb[neg]) / -alpha[neg]
        np.maximum(ratios, 0.0, out=ratios)
        theta = tab.ub[j] - tab.lb[j]
        r = -1
        rmin = ratios.min() if m else np.inf
        if rmin < theta:
            ties = np.flatnonzero(ratios <= rmin + 1e-12)
            if bland:
                r = int(ties[np.argmin(bidx[ties])])
            else:
                r = int(ties[np.argmax(np.abs(alpha[ties]))])
            theta = ratios[r]
        if not np.isfinite(theta):
            return UNBOUNDED
        if theta > 0:
            tab.x[bidx] -= theta * alpha
            tab.x[j] += sigma * theta
        if r < 0:
            tab.at_upper[j] = not up[j]
            tab.x[j] = tab.ub[j] if tab.at_upper[j] else tab.lb[j]
            tab.iterations += 1
        else:
            leave = int(bidx[r])
            if alpha[r] > 0:
                tab.x[leave] = tab.lb[leave]
                tab.at_upper[leave] = False
            else:
                tab.x[leave] = tab.ub[leave]
                tab.at_upper[leave] = True
            tab.at_upper[j] = False
            tab.pivot(r, j)
        if theta <= 1e-12:
            degenerate += 1
            if degenerate >= cfg.bland_after:
                bland = True
        else:
            degenerate = 0
        if deadline is not None and (tab.iterations & 63) == 0 and time.perf_counter() > deadline:
            return TIME_LIMIT
    return NUMERICAL


def dual(tab: Tableau, cfg: SolverConfig, max_iter: int) -> str:
    """Dual simplex from a dual-feasible basis (e.g. after bound tightening)."""
    movable = (tab.ub - tab.lb) > 0
    for _ in range(max_iter):
        bidx = tab.basis
        xb = tab.x[bidx]
        below = tab.lb[bidx] - xb
        above = xb - tab.ub[bidx]
        infeas = np.maximum(below, above)
        r = int(np.argmax(infeas))
        if infeas[r] <= cfg.feas_tol * 1e-2:
            return OPTIMAL
        row = tab.T[r, :-1]
        nonbasic = movable.copy()
        nonbasic[bidx] = False
        up = tab.at_upper
        if below[r] > 0:
            target = tab.lb[bidx[r]]
            elig = nonbasic & ((~up & (row < -cfg.pivot_tol)) | (up & (row > cfg.pivot_tol)))
        else:
            target = tab.ub[bidx[r]]
            elig = nonbasic & ((~up & (row > cfg.pivot_tol)) | (up & (row < -cfg.pivot_tol)))
        cand = np.flatnonzero(elig)
        if cand.size == 0:
            return INFEASIBLE
        ratio = np.abs(tab.d[cand]) / np.abs(row[cand])
        best = ratio.min()
        ties = cand[ratio <= best + 1e-12]
        j = int(ties[np.argmax(np.abs(row[ties]))])
        dx = (tab.x[bidx[r]] - target) / row[j]
        tab.x[bidx] -= tab.T[:, j] * dx
        tab.x[j] += dx
        leave = int(bidx[r])
        tab.x[leave] = target
        tab.at_upper[leave] = bool(below[r] <= 0)
        tab.at_upper[j] = False
        tab.pivot(r, j)
    return NUMERICAL


def _drop_artificials(tab: Tableau, cfg: SolverConfig) -> None:
    ncol = tab.n_real
    for r in range(tab.m):
        if tab.basis[r] >= ncol:
            row = tab.T[r, :ncol].copy()
            row[tab.basis[tab.basis < ncol]] = 0.0
            cand = np.flatnonzero(np.abs(row) > 1e-7)
            if cand.size:
                j = int(cand[np.argmax(np.abs(row[cand]))])
                tab.pivot(r, j)
    keep_rows = tab.basis < ncol
    keep_cols = np.concatenate([np.arange(ncol), [tab.T.shape[1] - 1]])
    tab.T = np.ascontiguousarray(tab.T[np.ix_(keep_rows, keep_cols)])
    tab.basis = tab.basis[keep_rows]
    tab.x = tab.x[:ncol]
    tab.lb = tab.lb[:ncol]
    tab.ub = tab.ub[:ncol]
    tab.at_upper = tab.at_upper[:ncol]


def default_max_iter(m: int, n: int) -> int:
    return 50 * (m + n) + 1000


def solve_tableau(program, cfg: SolverConfig, lb=None, ub=None, deadline=None):
    """Two-phase primal simplex; returns ``(status, tableau | None)``."""
    lb = program.lb if lb is None else lb
    ub = program.ub if ub is None else ub
    if np.any(lb > ub + cfg.feas_tol):
        return INFEASIBLE, None
    tab = build_phase_one(program.A_ub, program.b_ub, program.A_eq, program.b_eq, lb, ub)
    max_iter = cfg.max_iter or default_max_iter(tab.m, tab.ncol)
    status = primal(tab, cfg, max_iter, deadline)
    if status == TIME_LIMIT:
        return TIME_LIMIT, None
    if status != OPTIMAL:
        return NUMERICAL, None
    tab.recompute_basics()
    if tab.n_art and tab.x[tab.n_real:].max(initial=0.0) > cfg.feas_tol:
        return INFEASIBLE, None
    _drop_artificials(tab, cfg)
    n = tab.n_struct
    cost = np.zeros(tab.ncol)
    cost[:n] = program.c
    tab.cost = cost
    tab.refresh_reduced_costs()
    status = primal(tab, cfg, max_iter, deadline)
    tab.recompute_basics()
    return status, tab


def reoptimize(tab: Tableau, cfg: SolverConfig, lb, ub) -> str:
    """Apply new structural bounds to an optimal tableau and re-solve."""
    n = tab.n_struct
    changed = np.flatnonzero((tab.lb[:n] != lb) | (tab.ub[:n] != ub))
    nonbasic = np.ones(tab.ncol, dtype=bool)
    nonbasic[tab.basis] = False
    for j in changed:
        tab.lb[j], tab.ub[j] = lb[j], ub[j]
        if nonbasic[j]:
            target = tab.ub[j] if tab.at_upper[j] else tab.lb[j]
            target = min(max(tab.x[j], tab.lb[j]), tab.ub[j]) if not np.isfinite(target) else target
            delta = target - tab.x[j]
            if delta:
                tab.x[tab.basis] -= tab.T[:, j] * delta
                tab.x[j] = target
    max_iter = cfg.max_iter or default_max_iter(tab.m, tab.ncol)
    status = dual(tab, cfg, max_iter)
    if status != OPTIMAL:
        return status
    tab.recompute_basics()
    status = primal(tab, cfg, max_iter)
    tab.recompute_basics()
    return status


def result_from_tableau(program, tab: Tableau, status: str, cfg: SolverConfig, t0: float,
                        nodes: int = 1) -> SolveResult:
    wall = time.perf_counter() - t0
    if status == OPTIMAL:
        x = tab.x[:tab.n_struct].copy()
        obj = program.objective(x)
        rep = check_feasible(program, x, cfg.feas_tol)
        if not rep.feasible:
            return SolveResult(NUMERICAL, None, np.nan, -np.inf, np.inf, nodes, wall, tab.iterations,
                               message=f"solution violates {rep.where} by {rep.worst_violation:.3g}")
        return SolveResult(OPTIMAL, x, obj, obj, 0.0, nodes, wall, tab.iterations, [obj])
    if status == INFEASIBLE:
        return SolveResult(INFEASIBLE, None, np.inf, np.inf, np.inf, nodes, wall,
                           tab.iterations if tab is not None else 0)
    if status == UNBOUNDED:
        return SolveResult(UNBOUNDED, None, -np.inf, -np.inf, np.inf, nodes, wall, tab.iterations)
    if status == TIME_LIMIT:
        return SolveResult(TIME_LIMIT, None, np.inf, -np.inf, np.inf, nodes, wall, tab.iterations,
                           message="time limit")
    return SolveResult(NUMERICAL, None, np.nan, -np.inf, np.inf, nodes, wall,
                       tab.iterations if tab is not None else 0, message="iteration cap reached")


def solve_lp(program, config: SolverConfig | None = None) -> SolveResult:
    """Solve the continuous relaxation of ``program`` (integrality ignored)."""
    cfg = config or SolverConfig()
    t0 = time.perf_counter()
    status, tab = solve_tableau(program, cfg, deadline=t0 + cfg.time_limit)
    if tab is None:
        wall = time.perf_counter() - t0
        if status == INFEASIBLE:
            return SolveResult(INFEASIBLE, None, np.inf, np.inf, np.inf, 1, wall)
        if status == TIME_LIMIT:
            return SolveResult(TIME_LIMIT, None, np.inf, -np.inf, np.inf, 1, wall, message="time limit in phase one")
        return SolveResult(NUMERICAL, None, np.nan, -np.inf, np.inf, 1, wall, message="phase one failed")
    return result_from_tableau(program, tab, status, cfg, t0)
