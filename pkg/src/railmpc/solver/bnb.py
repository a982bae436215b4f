"""Best-bound branch and bound over LP relaxations."""
from __future__ import annotations

import heapq
import math
import time

import numpy as np

from .core import (FEASIBLE_TIME_LIMIT, INFEASIBLE, NUMERICAL, OPTIMAL, TIME_LIMIT, UNBOUNDED,
                   SolveResult, SolverConfig, relative_gap)
from .simplex import reoptimize, solve_tableau


class _Node:
    __slots__ = ("lb", "ub", "parent_tab", "depth")

    def __init__(self, lb, ub, parent_tab, depth):
        self.lb = lb
        self.ub = ub
        self.parent_tab = parent_tab
        self.depth = depth


def _most_fractional(x, ints, int_tol):
    """Index of the integer variable farthest from integrality, or -1.

    Ties go to the lowest index.
    """
    idx = np.flatnonzero(ints)
    if idx.size == 0:
        return -1
    frac = np.abs(x[idx] - np.round(x[idx]))
    k = int(np.argmax(frac))
    if frac[k] <= int_tol:
        return -1
    return int(idx[k])


def _solve_node(program, cfg, node, deadline):
    if cfg.warm_start and node.parent_tab is not None:
        tab = node.parent_tab.copy()
        status = reoptimize(tab, cfg, node.lb, node.ub)
        if status in (OPTIMAL, INFEASIBLE):
            return status, tab
    return solve_tableau(program, cfg, node.lb, node.ub, deadline)


def solve_milp(program, config: SolverConfig | None = None) -> SolveResult:
    cfg = config or SolverConfig()
    t0 = time.perf_counter()
    deadline = t0 + cfg.time_limit
    ints = program.integrality
    n = program.n_vars

    best_x, best_obj = None, math.inf
    heap: list[tuple[float, int, _Node]] = []
    counter = 0
    nodes = 0
    iterations = 0
    trace: list[float] = []
    timed_out = False

    heapq.heappush(heap, (-math.inf, counter, _Node(program.lb.copy(), program.ub.copy(), None, 0)))
    while heap:
        if time.perf_counter() > deadline:
            timed_out = True
            break
        bound, _, node = heap[0]
        if best_x is not None and relative_gap(best_obj, bound) <= cfg.gap_tol:
            break
        heapq.heappop(heap)
        status, tab = _solve_node(program, cfg, node, deadline)
        node.parent_tab = None
        nodes += 1
        if tab is not None:
            iterations += tab.iterations
        if status == UNBOUNDED and nodes == 1:
            return SolveResult(UNBOUNDED, None, -math.inf, -math.inf, math.inf, nodes,
                               time.perf_counter() - t0, iterations)
        if status == TIME_LIMIT:
            heapq.heappush(heap, (bound, counter, node))
            timed_out = True
            break
        if status == NUMERICAL:
            return SolveResult(NUMERICAL, best_x, best_obj, -math.inf, math.inf, nodes,
                               time.perf_counter() - t0, iterations, trace, "LP relaxation failed")
        if status != OPTIMAL:
            trace.append(_global_bound(heap, best_obj))
            continue
        x = tab.x[:n]
        obj = program.objective(x)
        if obj >= best_obj - cfg.gap_tol * max(abs(best_obj), 1.0):
            trace.append(_global_bound(heap, best_obj))
            continue
        j = _most_fractional(x, ints, cfg.int_tol)
        if j < 0:
            best_x, best_obj = x.copy(), obj
            trace.append(_global_bound(heap, best_obj))
            continue
        v = x[j]
        down_ub = node.ub.copy()
        down_ub[j] = math.floor(v)
        up_lb = node.lb.copy()
        up_lb[j] = math.ceil(v)
        counter += 1
        heapq.heappush(heap, (obj, counter, _Node(node.lb, down_ub, tab, node.depth + 1)))
        counter += 1
        heapq.heappush(heap, (obj, counter, _Node(up_lb, node.ub, tab, node.depth + 1)))
        trace.append(_global_bound(heap, best_obj))

    wall = time.perf_counter() - t0
    bound = _global_bound(heap, best_obj)
    if best_x is None:
        status = TIME_LIMIT if timed_out else INFEASIBLE
        return SolveResult(status, None, math.inf, bound, math.inf, nodes, wall, iterations, trace)
    bound = min(bound, best_obj)
    gap = relative_gap(best_obj, bound)
    status = OPTIMAL if gap <= cfg.gap_tol else FEASIBLE_TIME_LIMIT
    return SolveResult(status, best_x, best_obj, bound, gap, nodes, wall, iterations, trace)


def _global_bound(heap, incumbent):
    return heap[0][0] if heap else incumbent
