"""Finite-horizon programs for the rescheduling controller.

``build_full_mip`` emits the mixed-integer program over compositions and
timings; ``build_fixed_integer_lp`` emits the same program with every
composition replaced by a planned constant.  Both are assembled as dense
``A_ub x <= b_ub``, ``A_eq x = b_eq`` blocks with finite variable bounds.

Per platform ``p`` and horizon cycle ``j`` the builder emits nine variables::

    d, tau, h, n, n_before, n_after, n_depart, n_arrive, n_trans

Arrival times are not variables: ``a = d - tau``.  Per depot and cycle it
emits ``ell`` (integer, outbound composition), ``eta`` (binary, composition
changed) and ``u`` (inventory after the cycle).  Headways are indexed by the
service they precede: ``h(j) = a(j) - d(j-1)``.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .dynamics import PassengerRealization, ServiceRealization
from .errors import DimensionMismatchError, DomainError, InfeasibleModelError
from .network import Depot, LineNetwork, Scenario

PLATFORM_SYMBOLS = ("d", "tau", "h", "n", "n_before", "n_after", "n_depart", "n_arrive", "n_trans")
DEPOT_SYMBOLS = ("ell", "eta", "u")
STRICT_GAP = 1.0  # departure must precede the next nominal slot by this much
INT_SNAP = 1e-5

SYMBOL_TABLE = {
    "d": "variable", "tau": "variable", "h": "variable", "n": "variable",
    "n_before": "variable", "n_after": "variable", "n_depart": "variable",
    "n_arrive": "variable", "n_trans": "variable", "ell": "variable|constant",
    "eta": "variable|constant", "u": "variable",
    "a": "derived: d - tau", "C": "derived: ell * C_max",
    "d_pre": "constant", "rho": "constant", "h_min": "constant",
    "C_max": "constant", "ell_min": "constant", "ell_max": "constant",
    "tau_min": "constant", "tau_max": "constant",
}


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# state and plans

@dataclass(frozen=True)
class SystemState:
    """Dynamic state ``x`` plus the horizon slice of the demand profile.

    ``rho[i, j]`` is the arrival rate at platform ``i`` during the slot that
    ends at service ``kappa0 + j + 1``.  ``in_service[m]`` lists, oldest
    first, the compositions of the ``lag`` trains heading for depot ``m``.
    """

    kappa0: int
    queues: np.ndarray
    last_delays: np.ndarray
    in_service: tuple[tuple[int, ...], ...]
    inventories: tuple[int, ...]
    rho: np.ndarray
    fixed_compositions: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "queues", _frozen(self.queues))
        object.__setattr__(self, "last_delays", _frozen(self.last_delays))
        object.__setattr__(self, "rho", _frozen(np.atleast_2d(self.rho)))
        object.__setattr__(self, "in_service", tuple(tuple(int(v) for v in s) for s in self.in_service))
        object.__setattr__(self, "inventories", tuple(int(v) for v in self.inventories))
        object.__setattr__(self, "fixed_compositions", tuple(int(v) for v in self.fixed_compositions))

    @property
    def horizon(self) -> int:
        return self.rho.shape[1]

    @property
    def x(self) -> np.ndarray:
        parts = [self.queues, self.last_delays,
                 np.array([v for s in self.in_service for v in s], dtype=float),
                 np.array(self.inventories, dtype=float),
                 np.array(self.fixed_compositions, dtype=float)]
        return np.concatenate(parts)

    def check(self, network: LineNetwork, ell_min: int, ell_max: int) -> list[str]:
        errs = []
        P = network.n_platforms
        if self.queues.shape != (P,) or self.last_delays.shape != (P,):
            errs.append("queue/delay vectors do not match platform count")
        if self.rho.shape[0] != P:
            errs.append("rho rows do not match platform count")
        if np.any(self.queues < 0) or np.any(self.rho < 0):
            errs.append("negative queue or rate")
        if len(self.in_service) != len(network.depots) or len(self.inventories) != len(network.depots):
            errs.append("depot bookkeeping does not match depot count")
        for dep, trains, u in zip(network.depots, self.in_service, self.inventories):
            if len(trains) != dep.lag:
                errs.append(f"{dep.id}: expected {dep.lag} in-service trains, got {len(trains)}")
            if any(not (ell_min <= v <= ell_max) for v in trains):
                errs.append(f"{dep.id}: in-service composition out of range")
            if not (0 <= u <= dep.u_max):
                errs.append(f"{dep.id}: inventory {u} outside [0, {dep.u_max}]")
        if len(self.fixed_compositions) != len(fixed_origins(network)):
            errs.append("fixed compositions do not match depot-less routes")
        return errs


def fixed_origins(network: LineNetwork) -> list[str]:
    """Route origins without a depot: their composition never changes."""
    return [o for o in network.origins() if network.depot_at_origin(o) is None]


def initial_state(scenario: Scenario, kappa0: int, horizon: int, *, queues=None,
                  last_delays=None, in_service=None, inventories=None,
                  fixed_compositions=None) -> SystemState:
    net, costs = scenario.network, scenario.costs
    P = net.n_platforms
    rho = np.vstack([scenario.flows.window(pid, kappa0 + 1, horizon) for pid in net.platform_ids])
    if in_service is None:
        in_service = [(costs.ell_min,) * d.lag for d in net.depots]
    if inventories is None:
        inventories = [d.u0 for d in net.depots]
    if fixed_compositions is None:
        fixed_compositions = [costs.ell_min] * len(fixed_origins(net))
    return SystemState(
        kappa0=int(kappa0),
        queues=np.zeros(P) if queues is None else queues,
        last_delays=np.zeros(P) if last_delays is None else last_delays,
        in_service=tuple(tuple(s) for s in in_service),
        inventories=tuple(inventories),
        rho=rho,
        fixed_compositions=tuple(fixed_compositions),
    )


@dataclass(frozen=True)
class DiscretePlan:
    """Outbound composition per depot origin (rows) and horizon cycle (cols)."""

    origins: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.int64)
        v = v.reshape(len(self.origins), -1) if self.origins else v.reshape(0, v.shape[-1] if v.ndim == 2 else 0)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "origins", tuple(self.origins))

    @property
    def horizon(self) -> int:
        return self.values.shape[1]

    def get(self, origin: str, j: int) -> int:
        return int(self.values[self.origins.index(origin), j])

    def shifted(self) -> "DiscretePlan":
        """Drop the applied cycle and repeat the last one."""
        v = np.concatenate([self.values[:, 1:], self.values[:, -1:]], axis=1)
        return DiscretePlan(self.origins, v)

    def key(self) -> tuple:
        return tuple(map(int, self.values.ravel()))

    def __eq__(self, other):
        return isinstance(other, DiscretePlan) and self.origins == other.origins and \
            self.values.shape == other.values.shape and bool(np.all(self.values == other.values))

    def __hash__(self):
        return hash((self.origins, self.key()))

    @classmethod
    def constant(cls, network: LineNetwork, horizon: int, value: int) -> "DiscretePlan":
        origins = tuple(d.origin_platform for d in network.depots)
        return cls(origins, np.full((len(origins), horizon), value))


@dataclass(frozen=True)
class ContinuousPlan:
    """Timings and passenger auxiliaries keyed by ``(platform, cycle)``."""

    kappa0: int
    horizon: int
    services: Mapping[tuple[str, int], ServiceRealization]
    passengers: Mapping[tuple[str, int], PassengerRealization]

    def trajectory(self, cycles: Sequence[int] | None = None
                   ) -> Iterator[tuple[ServiceRealization, PassengerRealization]]:
        cycles = range(self.horizon) if cycles is None else cycles
        for j in cycles:
            for (pid, jj), svc in self.services.items():
                if jj == j:
                    yield svc, self.passengers[(pid, jj)]

    def cycle(self, j: int) -> dict[str, ServiceRealization]:
        return {pid: s for (pid, jj), s in self.services.items() if jj == j}


def depot_schedule(network: LineNetwork, state: SystemState, plan: DiscretePlan):
    """Inbound compositions and inventories implied by a composition plan.

    Returns ``(ell_in, inventory)`` arrays of shape ``(depots, horizon)``;
    ``inventory[m, j]`` is the stock after cycle ``j``.
    """
    D, N = len(network.depots), plan.horizon
    ell_in = np.zeros((D, N), dtype=np.int64)
    inv = np.zeros((D, N), dtype=np.int64)
    fixed = dict(zip(fixed_origins(network), state.fixed_compositions))
    for m, dep in enumerate(network.depots):
        src = network.inbound_origin(dep)
        u = state.inventories[m]
        for j in range(N):
            if j < dep.lag:
                ell_in[m, j] = state.in_service[m][j]
            elif src in fixed:
                ell_in[m, j] = fixed[src]
            else:
                ell_in[m, j] = plan.get(src, j - dep.lag)
            u = u + ell_in[m, j] - plan.get(dep.origin_platform, j)
            inv[m, j] = u
    return ell_in, inv


def inventory_feasible(network: LineNetwork, state: SystemState, plan: DiscretePlan) -> bool:
    _, inv = depot_schedule(network, state, plan)
    caps = np.array([[d.u_max] for d in network.depots])
    return bool(np.all(inv >= 0) and np.all(inv <= caps)) if len(network.depots) else True


# ---------------------------------------------------------------------------
# program container

@dataclass(frozen=True)
class Variable:
    name: str
    lb: float
    ub: float
    integer: bool
    symbol: str
    owner: str
    k: int


@dataclass(frozen=True)
class BuildContext:
    scenario: Scenario
    state: SystemState
    horizon: int
    plan: DiscretePlan | None


@dataclass(frozen=True)
class MixedIntegerProgram:
    variables: tuple[Variable, ...]
    c: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    offset: float = 0.0
    ub_names: tuple[str, ...] = ()
    eq_names: tuple[str, ...] = ()
    name: str = "program"
    context: BuildContext | None = None
    index: Mapping[tuple[str, str, int], int] = field(default_factory=dict)
    symbols: Mapping[str, str] = field(default_factory=lambda: dict(SYMBOL_TABLE))

    def __post_init__(self):
        n = len(self.variables)
        for name in ("c", "A_ub", "b_ub", "A_eq", "b_eq"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "A_ub", self.A_ub.reshape(-1, n))
        object.__setattr__(self, "A_eq", self.A_eq.reshape(-1, n))
        object.__setattr__(self, "lb", _frozen([v.lb for v in self.variables]))
        object.__setattr__(self, "ub", _frozen([v.ub for v in self.variables]))
        ints = np.array([v.integer for v in self.variables], dtype=bool)
        ints.setflags(write=False)
        object.__setattr__(self, "integrality", ints)

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def is_mip(self) -> bool:
        return bool(self.integrality.any())

    def objective(self, x) -> float:
        return float(self.c @ np.asarray(x, dtype=float) + self.offset)

    def var(self, symbol: str, owner: str, k: int) -> int:
        return self.index[(symbol, owner, k)]

    def constraints(self) -> Iterator[tuple[str, list[tuple[int, float]], str, float]]:
        """Rows as ``(name, [(var, coef), ...], sense, rhs)``."""
        for A, b, names, sense in ((self.A_ub, self.b_ub, self.ub_names, "<="),
                                   (self.A_eq, self.b_eq, self.eq_names, "=")):
            for i in range(A.shape[0]):
                nz = np.flatnonzero(A[i])
                yield names[i], [(int(j), float(A[i, j])) for j in nz], sense, float(b[i])

    def relaxed(self) -> "MixedIntegerProgram":
        vs = tuple(Variable(v.name, v.lb, v.ub, False, v.symbol, v.owner, v.k) for v in self.variables)
        return MixedIntegerProgram(vs, self.c, self.A_ub, self.b_ub, self.A_eq, self.b_eq,
                                   self.offset, self.ub_names, self.eq_names, self.name + "-relaxed",
                                   self.context, self.index, self.symbols)

    def with_bounds(self, lb, ub) -> "MixedIntegerProgram":
        vs = tuple(Variable(v.name, float(l), float(u), v.integer, v.symbol, v.owner, v.k)
                   for v, l, u in zip(self.variables, lb, ub))
        return MixedIntegerProgram(vs, self.c, self.A_ub, self.b_ub, self.A_eq, self.b_eq,
                                   self.offset, self.ub_names, self.eq_names, self.name,
                                   self.context, self.index, self.symbols)


class _Builder:
    def __init__(self):
        self.vars: list[Variable] = []
        self.index: dict[tuple[str, str, int], int] = {}
        self.cost: dict[int, float] = {}
        self.offset = 0.0
        self.rows_ub: list[tuple[str, dict[int, float], float]] = []
        self.rows_eq: list[tuple[str, dict[int, float], float]] = []

    def add(self, symbol, owner, k, lb, ub, integer=False) -> int:
        j = len(self.vars)
        name = f"{symbol}({owner},{k})"
        self.vars.append(Variable(name, float(lb), float(ub), integer, symbol, owner, k))
        self.index[(symbol, owner, k)] = j
        return j

    def obj(self, expr, coef: float):
        terms, const = expr
        for j, a in terms.items():
            self.cost[j] = self.cost.get(j, 0.0) + coef * a
        self.offset += coef * const

    def row(self, name, expr, sense, rhs=0.0):
        """Add ``expr (sense) rhs`` where ``expr`` is a linear expression."""
        terms, const = expr
        terms = {j: a for j, a in terms.items() if a != 0.0}
        target = self.rows_ub if sense == "<=" else self.rows_eq
        target.append((name, terms, rhs - const))

    def finish(self, name, context) -> MixedIntegerProgram:
        n = len(self.vars)
        c = np.zeros(n)
        for j, a in self.cost.items():
            c[j] = a

        def dense(rows):
            A = np.zeros((len(rows), n))
            b = np.zeros(len(rows))
            for i, (_, terms, rhs) in enumerate(rows):
                for j, a in terms.items():
                    A[i, j] = a
                b[i] = rhs
            return A, b

        A_ub, b_ub = dense(self.rows_ub)
        A_eq, b_eq = dense(self.rows_eq)
        return MixedIntegerProgram(
            tuple(self.vars), c, A_ub, b_ub, A_eq, b_eq, self.offset,
            tuple(r[0] for r in self.rows_ub), tuple(r[0] for r in self.rows_eq),
            name, context, dict(self.index))


def _v(j: int, a: float = 1.0):
    return ({j: a}, 0.0)


def _c(v: float):
    return ({}, float(v))


def _lin(*parts):
    """Sum of ``(coef, expr)`` pairs."""
    terms: dict[int, float] = {}
    const = 0.0
    for coef, (t, c0) in parts:
        for j, a in t.items():
            terms[j] = terms.get(j, 0.0) + coef * a
        const += coef * c0
    return terms, const


# ---------------------------------------------------------------------------
# builders

def _check_buildable(scenario: Scenario, state: SystemState, horizon: int):
    net, costs = scenario.network, scenario.costs
    if horizon < 1:
        raise DomainError("prediction horizon must be >= 1")
    errs = state.check(net, costs.ell_min, costs.ell_max)
    if errs:
        raise DomainError("invalid state: " + "; ".join(errs))
    if state.horizon < horizon:
        raise DomainError(f"state carries {state.horizon} flow slots, horizon needs {horizon}")
    # earliest departures, propagated along routes and cycles
    k0 = state.kappa0
    earliest: dict[tuple[str, int], float] = {}
    for j in range(horizon):
        for origin in net.origins():
            for pid in net.route(origin):
                p = net.platform(pid)
                i = net.index(pid)
                prev = earliest.get((pid, j - 1), p.d_pre(k0 - 1) + state.last_delays[i])
                e = max(p.d_pre(k0 + j), prev + p.h_min + p.tau_min)
                pred = net.predecessor.get(pid)
                if pred is not None:
                    e = max(e, earliest[(pred, j)] + net.running_time[pred] + p.tau_min)
                if e > p.d_pre(k0 + j + 1) - STRICT_GAP:
                    raise InfeasibleModelError(
                        f"{pid} service {k0 + j}: earliest departure {e:.0f}s misses window "
                        f"ending {p.d_pre(k0 + j + 1) - STRICT_GAP:.0f}s")
                earliest[(pid, j)] = e


def _build(scenario: Scenario, state: SystemState, horizon: int,
           plan: DiscretePlan | None) -> MixedIntegerProgram:
    _check_buildable(scenario, state, horizon)
    net, costs = scenario.network, scenario.costs
    N, k0 = horizon, state.kappa0
    B = _Builder()
    fixed = dict(zip(fixed_origins(net), state.fixed_compositions))
    depot_of = {d.origin_platform: (m, d) for m, d in enumerate(net.depots)}
    dell = costs.ell_max - costs.ell_min

    big_m = float(state.queues.sum() + (state.rho[:, :N].sum(axis=1) * np.array(
        [p.cycle for p in net.platforms])).sum())
    big_m = (1 + len(net.transfer_links)) * big_m + costs.c_max * costs.ell_max * N + 1.0

    if plan is not None:
        if plan.horizon < N or set(plan.origins) != set(depot_of):
            raise DomainError("plan does not cover every depot origin over the horizon")
        if np.any(plan.values < costs.ell_min) or np.any(plan.values > costs.ell_max):
            raise DomainError(f"plan compositions outside [{costs.ell_min}, {costs.ell_max}]")
        ell_in_const, _ = depot_schedule(net, state, DiscretePlan(plan.origins, plan.values[:, :N]))

    # composition expressions ------------------------------------------------
    ell_expr: dict[tuple[str, int], tuple] = {}
    for j in range(N):
        for m, dep in enumerate(net.depots):
            o = dep.origin_platform
            if plan is None:
                jv = B.add("ell", o, j, costs.ell_min, costs.ell_max, integer=True)
                ell_expr[(o, j)] = _v(jv)
                if dell > 0:
                    B.add("eta", dep.id, j, 0, 1, integer=True)
            else:
                ell_expr[(o, j)] = _c(plan.get(o, j))
            B.add("u", dep.id, j, 0, dep.u_max)
        for o, val in fixed.items():
            ell_expr[(o, j)] = _c(val)
        for p in net.platforms:
            pid = p.id
            d_lo, d_hi = p.d_pre(k0 + j), p.d_pre(k0 + j + 1) - STRICT_GAP
            B.add("d", pid, j, d_lo, d_hi)
            B.add("tau", pid, j, p.tau_min, p.tau_max)
            B.add("h", pid, j, p.h_min, 2 * p.cycle)
            q0 = float(state.queues[net.index(pid)])
            if j == 0:
                B.add("n", pid, j, q0, q0)
            else:
                B.add("n", pid, j, 0.0, big_m)
            B.add("n_before", pid, j, 0.0, big_m)
            B.add("n_after", pid, j, 0.0, big_m)
            B.add("n_depart", pid, j, 0.0, big_m)
            if pid in net.predecessor:
                B.add("n_arrive", pid, j, 0.0, big_m)
            else:
                B.add("n_arrive", pid, j, 0.0, 0.0)
            if net.incoming_transfers(pid):
                B.add("n_trans", pid, j, 0.0, big_m)
            else:
                B.add("n_trans", pid, j, 0.0, 0.0)

    V = lambda sym, owner, j: _v(B.index[(sym, owner, j)])  # noqa: E731

    for j in range(N):
        # depots ----------------------------------------------------------------
        for m, dep in enumerate(net.depots):
            o = dep.origin_platform
            src = net.inbound_origin(dep)
            if j < dep.lag:
                ell_in = _c(state.in_service[m][j])
            else:
                ell_in = ell_expr[(src, j - dep.lag)]
            ell_out = ell_expr[(o, j)]
            if plan is None and dell > 0:
                eta = V("eta", dep.id, j)
                B.row(f"eta_up({dep.id},{j})", _lin((1, ell_out), (-1, ell_in), (-dell, eta)), "<=")
                B.row(f"eta_dn({dep.id},{j})", _lin((1, ell_in), (-1, ell_out), (-dell, eta)), "<=")
                B.obj(eta, costs.w2 * costs.e_add)
            elif plan is not None:
                changed = int(plan.get(o, j) != ell_in_const[m, j])
                B.obj(_c(changed), costs.w2 * costs.e_add)
            prev_u = V("u", dep.id, j - 1) if j > 0 else _c(state.inventories[m])
            B.row(f"inventory({dep.id},{j})",
                  _lin((1, V("u", dep.id, j)), (-1, prev_u), (-1, ell_in), (1, ell_out)), "=")

        # platforms -------------------------------------------------------------
        for p in net.platforms:
            pid = p.id
            i = net.index(pid)
            k = k0 + j
            gap = p.d_pre(k + 1) - p.d_pre(k)
            rate = float(state.rho[i, j])
            d, tau, h = V("d", pid, j), V("tau", pid, j), V("h", pid, j)
            n, nb = V("n", pid, j), V("n_before", pid, j)
            na, nd = V("n_after", pid, j), V("n_depart", pid, j)
            narr, ntr = V("n_arrive", pid, j), V("n_trans", pid, j)
            ell = ell_expr[(net.route_origin(pid), j)]

            d_prev = V("d", pid, j - 1) if j > 0 else _c(p.d_pre(k0 - 1) + float(state.last_delays[i]))
            B.row(f"headway({pid},{j})", _lin((1, h), (-1, d), (1, tau), (1, d_prev)), "=")
            pred = net.predecessor.get(pid)
            if pred is not None:
                B.row(f"running({pid},{j})",
                      _lin((1, d), (-1, tau), (-1, V("d", pred, j)), (-1, _c(net.running_time[pred]))), "=")
                B.row(f"arrive({pid},{j})", _lin((1, narr), (-1, V("n_depart", pred, j))), "=")
            if j > 0:
                pgap = p.d_pre(k) - p.d_pre(k - 1)
                prate = float(state.rho[i, j - 1])
                B.row(f"queue({pid},{j})",
                      _lin((1, n), (-1, V("n", pid, j - 1)), (-1, V("n_trans", pid, j - 1)),
                           (1, V("n_depart", pid, j - 1)), (-1, _c(prate * pgap))), "=")
            B.row(f"before({pid},{j})",
                  _lin((1, nb), (-1, n), (-rate, d), (-1, ntr), (-1, _c(rate * -p.d_pre(k)))), "=")
            B.row(f"board({pid},{j})", _lin((1, nd), (-1, nb)), "<=")
            B.row(f"capacity({pid},{j})", _lin((1, nd), (-costs.c_max, ell)), "<=")
            B.row(f"after({pid},{j})", _lin((1, na), (-1, nb), (1, nd)), "=")
            links = net.incoming_transfers(pid)
            if links:
                B.row(f"transfer({pid},{j})",
                      _lin((1, ntr), *[(-t.beta, V("n_arrive", t.source, j)) for t in links]), "=")

            B.obj(n, costs.w1 * costs.w3 * gap)
            B.obj(na, costs.w1 * gap)
            B.obj(ell, costs.w2 * costs.energy(pid))

    ctx = BuildContext(scenario, state, N, plan)
    name = "full-mip" if plan is None else "fixed-lp"
    return B.finish(name, ctx)


def build_full_mip(state: SystemState, scenario: Scenario, horizon: int) -> MixedIntegerProgram:
    return _build(scenario, state, horizon, None)


def build_fixed_integer_lp(state: SystemState, scenario: Scenario, horizon: int,
                           plan: DiscretePlan) -> MixedIntegerProgram:
    return _build(scenario, state, horizon, plan)


# ---------------------------------------------------------------------------
# solution <-> plans

def extract_plans(program: MixedIntegerProgram, x) -> tuple[DiscretePlan, ContinuousPlan]:
    x = np.asarray(x, dtype=float)
    if x.shape != (program.n_vars,):
        raise DimensionMismatchError(f"solution has shape {x.shape}, program has {program.n_vars} variables")
    ctx = program.context
    if ctx is None:
        raise DomainError("program carries no build context")
    net, costs = ctx.scenario.network, ctx.scenario.costs
    state, N = ctx.state, ctx.horizon
    origins = tuple(d.origin_platform for d in net.depots)
    if ctx.plan is None:
        vals = np.zeros((len(origins), N), dtype=np.int64)
        for m, o in enumerate(origins):
            for j in range(N):
                raw = x[program.var("ell", o, j)]
                r = round(raw)
                if abs(raw - r) > INT_SNAP:
                    raise DomainError(f"composition ell({o},{j}) = {raw} is not integral")
                if not (costs.ell_min <= r <= costs.ell_max):
                    raise DomainError(f"composition ell({o},{j}) = {r} out of range")
                vals[m, j] = r
        dplan = DiscretePlan(origins, vals)
    else:
        dplan = DiscretePlan(ctx.plan.origins, ctx.plan.values[:, :N])

    ell_in, _ = depot_schedule(net, state, dplan)
    fixed = dict(zip(fixed_origins(net), state.fixed_compositions))
    services, passengers = {}, {}
    for j in range(N):
        for p in net.platforms:
            pid = p.id
            o = net.route_origin(pid)
            ell = fixed[o] if o in fixed else dplan.get(o, j)
            changed = 0
            if o in origins and pid == o:
                m = origins.index(o)
                changed = int(dplan.values[m, j] != ell_in[m, j])
            g = lambda s: float(x[program.var(s, pid, j)])  # noqa: E731
            d, tau = g("d"), g("tau")
            services[(pid, j)] = ServiceRealization(pid, state.kappa0 + j, d - tau, d, tau, g("h"),
                                                    int(ell), changed)
            passengers[(pid, j)] = PassengerRealization(
                pid, state.kappa0 + j, g("n"), g("n_before"), g("n_after"), g("n_depart"),
                g("n_arrive"), g("n_trans"))
    return dplan, ContinuousPlan(state.kappa0, N, services, passengers)


def vector_from_plans(program: MixedIntegerProgram, dplan: DiscretePlan,
                      cplan: ContinuousPlan) -> np.ndarray:
    """Inverse of :func:`extract_plans`."""
    ctx = program.context
    net = ctx.scenario.network
    x = np.zeros(program.n_vars)
    for (pid, j), s in cplan.services.items():
        pax = cplan.passengers[(pid, j)]
        for sym, val in (("d", s.departure), ("tau", s.dwell), ("h", s.headway), ("n", pax.n),
                         ("n_before", pax.n_before), ("n_after", pax.n_after),
                         ("n_depart", pax.n_depart), ("n_arrive", pax.n_arrive),
                         ("n_trans", pax.n_trans)):
            x[program.var(sym, pid, j)] = val
    ell_in, inv = depot_schedule(net, ctx.state, dplan)
    for m, dep in enumerate(net.depots):
        for j in range(ctx.horizon):
            x[program.var("u", dep.id, j)] = inv[m, j]
            if ctx.plan is None:
                x[program.var("ell", dep.origin_platform, j)] = dplan.values[m, j]
                if ("eta", dep.id, j) in program.index:
                    x[program.var("eta", dep.id, j)] = float(dplan.values[m, j] != ell_in[m, j])
    return x


# ---------------------------------------------------------------------------
# export

def _fmt(v: float) -> str:
    return repr(float(v))


def write_lp(program: MixedIntegerProgram, out=None) -> str:
    """Render ``program`` in the CPLEX LP text format.

    Returns the text; also writes it when ``out`` is a path or file object.
    """
    buf = io.StringIO()
    names = [v.name for v in program.variables]
    buf.write(f"\\ {program.name}\nMinimize\n obj:")
    for j in np.flatnonzero(program.c):
        buf.write(f" + {_fmt(program.c[j])} {names[j]}")
    if program.offset:
        buf.write(f" + {_fmt(program.offset)}")
    buf.write("\nSubject To\n")
    for name, terms, sense, rhs in program.constraints():
        body = " ".join(f"+ {_fmt(a)} {names[j]}" for j, a in terms) or "0 " + names[0]
        buf.write(f" {name}: {body} {sense} {_fmt(rhs)}\n")
    buf.write("Bounds\n")
    for v in program.variables:
        buf.write(f" {_fmt(v.lb)} <= {v.name} <= {_fmt(v.ub)}\n")
    ints = [v.name for v in program.variables if v.integer]
    if ints:
        buf.write("General\n")
        for nm in ints:
            buf.write(f" {nm}\n")
    buf.write("End\n")
    text = buf.getvalue()
    if out is not None:
        if hasattr(out, "write"):
            out.write(text)
        else:
            with open(out, "w") as fh:
                fh.write(text)
    return text
