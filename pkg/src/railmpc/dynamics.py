"""Passenger bookkeeping for one service cycle and the cost indices.

All functions are pure.  Boarding is greedy: a train takes everyone waiting
up to its capacity ``ell * C_max``.  Every arriving passenger alights at the
next platform; a fixed fraction of them transfers to linked platforms.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from .errors import DomainError, ModelViolationError
from .network import CostParameters, LineNetwork

NEG_TOL = 1e-9


@dataclass(frozen=True)
class ServiceRealization:
    platform: str
    k: int
    arrival: float
    departure: float
    dwell: float
    headway: float
    composition: int
    changed: int = 0


@dataclass(frozen=True)
class PassengerRealization:
    platform: str
    k: int
    n: float
    n_before: float
    n_after: float
    n_depart: float
    n_arrive: float
    n_trans: float


def board(n: float, rate: float, elapsed: float, n_trans: float, capacity: float):
    """Greedy boarding at a single platform.

    Returns ``(n_before, n_depart, n_after)`` where ``elapsed`` is the time
    between the nominal and the actual departure.
    """
    n_before = n + rate * elapsed + n_trans
    if n_before < -NEG_TOL:
        raise ModelViolationError(f"negative waiting count {n_before}")
    n_before = max(n_before, 0.0)
    n_depart = min(n_before, capacity)
    return n_before, n_depart, n_before - n_depart


def step_passengers(
    network: LineNetwork,
    costs: CostParameters,
    queues: Mapping[str, float],
    services: Mapping[str, ServiceRealization],
    rates: Mapping[str, float],
) -> tuple[dict[str, PassengerRealization], dict[str, float]]:
    """Advance every platform by one service.

    ``queues[p]`` is ``n_p(k)``, ``rates[p]`` is ``rho_p(k+1)`` and
    ``services[p]`` the realized schedule of service ``k``.  Returns the
    passenger realization per platform and the next queues ``n_p(k+1)``.
    """
    depart: dict[str, float] = {}
    arrive: dict[str, float] = {}
    out: dict[str, PassengerRealization] = {}
    nxt: dict[str, float] = {}

    def arrivals(pid: str) -> float:
        if pid in arrive:
            return arrive[pid]
        pred = network.predecessor.get(pid)
        val = depart[pred] if pred is not None else 0.0
        arrive[pid] = val
        return val

    for pid in network.passenger_order():
        plat = network.platform(pid)
        svc = services[pid]
        k = svc.k
        n = float(queues[pid])
        if n < -NEG_TOL:
            raise ModelViolationError(f"negative queue {n} at {pid}")
        trans = sum(t.beta * arrivals(t.source) for t in network.incoming_transfers(pid))
        elapsed = svc.departure - plat.d_pre(k)
        n_before, n_depart, n_after = board(n, rates[pid], elapsed, trans, svc.composition * costs.c_max)
        depart[pid] = n_depart
        out[pid] = PassengerRealization(pid, k, n, n_before, n_after, n_depart, 0.0, trans)
        gap = plat.d_pre(k + 1) - plat.d_pre(k)
        q = n + rates[pid] * gap + trans - n_depart
        if q < -NEG_TOL:
            raise ModelViolationError(f"negative next queue {q} at {pid}")
        nxt[pid] = max(q, 0.0)

    for pid in network.platform_ids:
        r = out[pid]
        out[pid] = PassengerRealization(pid, r.k, r.n, r.n_before, r.n_after, r.n_depart,
                                        arrivals(pid), r.n_trans)
    return {pid: out[pid] for pid in network.platform_ids}, {pid: nxt[pid] for pid in network.platform_ids}


def passenger_delay_exact(pax: PassengerRealization, departure: float,
                          d_pre_k: float, d_pre_next: float) -> float:
    """Waiting time accrued before and after a departure (nonlinear index)."""
    if not (d_pre_k - 1e-9 <= departure < d_pre_next):
        raise DomainError(f"departure {departure} outside [{d_pre_k}, {d_pre_next})")
    return pax.n * (departure - d_pre_k) + pax.n_after * (d_pre_next - departure)


def passenger_delay_linear(pax: PassengerRealization, d_pre_k: float,
                           d_pre_next: float, w3: float) -> float:
    gap = d_pre_next - d_pre_k
    return w3 * pax.n * gap + pax.n_after * gap


def operational_cost(service: ServiceRealization, costs: CostParameters) -> float:
    return service.composition * costs.energy(service.platform) + service.changed * costs.e_add


def stage_cost(network: LineNetwork, costs: CostParameters, service: ServiceRealization,
               pax: PassengerRealization, mode: str = "exact") -> float:
    plat = network.platform(service.platform)
    lo, hi = plat.d_pre(service.k), plat.d_pre(service.k + 1)
    if mode == "exact":
        jp = passenger_delay_exact(pax, service.departure, lo, hi)
    elif mode == "linear":
        jp = passenger_delay_linear(pax, lo, hi, costs.w3)
    else:
        raise ValueError(f"unknown cost mode {mode!r}")
    return costs.w1 * jp + costs.w2 * operational_cost(service, costs)


def total_cost(
    trajectory: Iterable[tuple[ServiceRealization, PassengerRealization]],
    network: LineNetwork,
    costs: CostParameters,
    mode: str = "exact",
) -> float:
    return sum(stage_cost(network, costs, s, p, mode) for s, p in trajectory)
