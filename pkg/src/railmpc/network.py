"""Physical line layout, timetable skeleton, demand profiles and cost weights.

A scenario is the triple (network, flows, costs).  Everything here is frozen
after construction so scenarios can be shared between concurrent episodes.

Conventions
-----------
* Service ``k`` at platform ``p`` is nominally due at
  ``d_pre_p(k) = offset_p + k * cycle``.  The same ``k`` labels one physical
  train along its whole route; downstream offsets absorb running times.
* ``flows.rates[p][k]`` is the arrival rate (passengers/second) on the slot
  ``[d_pre_p(k-1), d_pre_p(k))``, i.e. the rate written ``rho_p(k)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import InvalidParameterError


@dataclass(frozen=True)
class Platform:
    id: str
    station: str
    line: str
    direction: int
    offset: int
    cycle: int
    h_min: int
    tau_min: int
    tau_max: int
    is_depot_adjacent: bool = False

    def d_pre(self, k: int) -> int:
        return self.offset + k * self.cycle


@dataclass(frozen=True)
class Depot:
    """Storage yard at a terminus.

    ``end_platform`` is where inbound trains terminate, ``origin_platform``
    is where the outbound route starts.  The inbound train of service ``k``
    on the end platform becomes outbound service ``k + lag`` (first in, first
    out), at which point units may be coupled or stored.
    """

    id: str
    end_platform: str
    origin_platform: str
    lag: int
    u0: int
    u_max: int

    @property
    def platforms(self) -> tuple[str, str]:
        return (self.end_platform, self.origin_platform)


@dataclass(frozen=True)
class TransferLink:
    source: str
    target: str
    beta: float


@dataclass(frozen=True)
class LineNetwork:
    platforms: tuple[Platform, ...]
    depots: tuple[Depot, ...] = ()
    predecessor: Mapping[str, str] = field(default_factory=dict)
    transfer_links: tuple[TransferLink, ...] = ()
    running_time: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {p.id: p for p in self.platforms})
        object.__setattr__(self, "_index", {p.id: i for i, p in enumerate(self.platforms)})
        succ = {}
        for p, q in self.predecessor.items():
            succ[q] = p
        object.__setattr__(self, "_successor", succ)

    # lookups -------------------------------------------------------------
    def platform(self, pid: str) -> Platform:
        return self._by_id[pid]

    def index(self, pid: str) -> int:
        return self._index[pid]

    @property
    def platform_ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.platforms)

    @property
    def n_platforms(self) -> int:
        return len(self.platforms)

    def successor(self, pid: str) -> str | None:
        return self._successor.get(pid)

    def origins(self) -> list[str]:
        return [p.id for p in self.platforms if p.id not in self.predecessor]

    def route(self, origin: str) -> list[str]:
        """Platforms served by the route starting at ``origin``, in order."""
        out = [origin]
        seen = {origin}
        nxt = self.successor(origin)
        while nxt is not None and nxt not in seen:
            out.append(nxt)
            seen.add(nxt)
            nxt = self.successor(nxt)
        return out

    def route_origin(self, pid: str) -> str:
        seen = set()
        while pid in self.predecessor and pid not in seen:
            seen.add(pid)
            pid = self.predecessor[pid]
        return pid

    def depot_at_origin(self, origin: str) -> Depot | None:
        for dep in self.depots:
            if dep.origin_platform == origin:
                return dep
        return None

    def inbound_origin(self, depot: Depot) -> str:
        """Origin of the route whose trains terminate at ``depot``."""
        return self.route_origin(depot.end_platform)

    def incoming_transfers(self, pid: str) -> list[TransferLink]:
        return [t for t in self.transfer_links if t.target == pid]

    def passenger_order(self) -> list[str]:
        """Platform order in which one cycle of boarding can be evaluated.

        Boarding at ``p`` needs the transfers into ``p``; a transfer from
        ``q`` needs the boarding at ``q``'s predecessor.  Raises if those
        dependencies are cyclic.
        """
        deps = {pid: set() for pid in self.platform_ids}
        for t in self.transfer_links:
            src_pred = self.predecessor.get(t.source)
            if src_pred is not None:
                deps[t.target].add(src_pred)
        order, state = [], {}

        def visit(pid):
            mark = state.get(pid)
            if mark == 1:
                raise InvalidParameterError(f"cyclic transfer dependency through {pid}")
            if mark == 2:
                return
            state[pid] = 1
            for q in sorted(deps[pid], key=self.index):
                visit(q)
            state[pid] = 2
            order.append(pid)

        for pid in self.platform_ids:
            visit(pid)
        return order


@dataclass(frozen=True)
class FlowProfile:
    """Piecewise-constant arrival rates, one row per platform.

    ``span`` is the number of closed-loop steps the profile supports and
    ``horizon`` the longest prediction horizon it was built for.
    """

    rates: Mapping[str, tuple[float, ...]]
    span: int
    horizon: int

    @property
    def required_length(self) -> int:
        return self.span + self.horizon + 1

    def rate(self, pid: str, k: int) -> float:
        return self.rates[pid][k]

    def window(self, pid: str, start: int, length: int) -> np.ndarray:
        row = self.rates[pid]
        if start < 0 or start + length > len(row):
            raise InvalidParameterError(
                f"flow window [{start}, {start + length}) outside profile of {pid} (len {len(row)})")
        return np.asarray(row[start:start + length], dtype=float)


@dataclass(frozen=True)
class CostParameters:
    w1: float = 1.0
    w2: float = 1.0
    w3: float = 0.5
    e_energy: Mapping[str, float] = field(default_factory=dict)
    e_add: float = 3000.0
    c_max: float = 100.0
    ell_min: int = 1
    ell_max: int = 3

    def energy(self, pid: str) -> float:
        return float(self.e_energy.get(pid, 0.0))

    @property
    def n_compositions(self) -> int:
        return self.ell_max - self.ell_min + 1


@dataclass(frozen=True)
class Scenario:
    network: LineNetwork
    flows: FlowProfile
    costs: CostParameters

    # serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        net = self.network
        return {
            "network": {
                "platforms": [
                    {
                        "id": p.id, "station": p.station, "line": p.line,
                        "direction": p.direction, "offset": p.offset, "cycle": p.cycle,
                        "h_min": p.h_min, "tau_min": p.tau_min, "tau_max": p.tau_max,
                        "is_depot_adjacent": p.is_depot_adjacent,
                    }
                    for p in net.platforms
                ],
                "depots": [
                    {"id": d.id, "end_platform": d.end_platform,
                     "origin_platform": d.origin_platform, "lag": d.lag,
                     "u0": d.u0, "u_max": d.u_max}
                    for d in net.depots
                ],
                "predecessor": {k: net.predecessor[k] for k in net.predecessor},
                "transfer_links": [[t.source, t.target, t.beta] for t in net.transfer_links],
                "running_time": {k: int(net.running_time[k]) for k in net.running_time},
            },
            "flows": {
                "span": self.flows.span,
                "horizon": self.flows.horizon,
                "rates": {k: list(v) for k, v in self.flows.rates.items()},
            },
            "costs": {
                "w1": self.costs.w1, "w2": self.costs.w2, "w3": self.costs.w3,
                "e_energy": dict(self.costs.e_energy), "e_add": self.costs.e_add,
                "c_max": self.costs.c_max, "ell_min": self.costs.ell_min,
                "ell_max": self.costs.ell_max,
            },
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        try:
            n = doc["network"]
            platforms = tuple(Platform(**p) for p in n["platforms"])
            depots = tuple(Depot(**d) for d in n.get("depots", []))
            links = tuple(TransferLink(s, t, float(b)) for s, t, b in n.get("transfer_links", []))
            network = LineNetwork(
                platforms=platforms, depots=depots,
                predecessor=dict(n.get("predecessor", {})),
                transfer_links=links,
                running_time={k: int(v) for k, v in n.get("running_time", {}).items()},
            )
            f = doc["flows"]
            flows = FlowProfile(
                rates={k: tuple(float(x) for x in v) for k, v in f["rates"].items()},
                span=int(f["span"]), horizon=int(f["horizon"]),
            )
            c = dict(doc["costs"])
            c["e_energy"] = {k: float(v) for k, v in c.get("e_energy", {}).items()}
            costs = CostParameters(**c)
        except (KeyError, TypeError) as exc:
            raise InvalidParameterError(f"malformed scenario document: {exc!r}") from exc
        return cls(network, flows, costs)

    @classmethod
    def loads(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.loads(Path(path).read_text())


# ---------------------------------------------------------------------------
# synthetic scenario

TAU_MIN, TAU_NOMINAL, TAU_MAX = 30, 40, 60
H_MIN = 90
TURNAROUND = 60
RUN_RANGE = (60, 120)


def peak_factor(k: int, span: int) -> float:
    """Demand multiplier: doubled during the middle third of the span."""
    return 2.0 if span // 3 <= k < (2 * span) // 3 else 1.0


def build_synthetic_network(
    n_platforms_per_direction: int,
    cycle: int,
    demand_seed: int,
    *,
    span: int = 120,
    horizon: int = 40,
    noise: float = 0.35,
    base_rate: tuple[float, float] = (0.15, 0.45),
    u_max: int = 4,
    total_energy: float = 12000.0,
) -> Scenario:
    """Single bidirectional line with a depot at each terminus.

    Demand is drawn per platform as ``base * peak_factor(k) * noise_k`` with
    log-normal slot noise; the terminating platform of each direction gets
    no demand since nobody boards a train that goes nowhere.
    """
    n = int(n_platforms_per_direction)
    if n < 2:
        raise InvalidParameterError("need at least 2 platforms per direction")
    rng = np.random.default_rng(demand_seed)
    runs = rng.integers(RUN_RANGE[0], RUN_RANGE[1] + 1, size=n - 1)
    if cycle <= TAU_MAX + int(runs.max()) or cycle <= H_MIN + TAU_MAX:
        raise InvalidParameterError(
            f"cycle {cycle}s too short for dwell {TAU_MAX}s + running {int(runs.max())}s "
            f"and headway {H_MIN}s")

    stations = [f"S{i:02d}" for i in range(n)]
    platforms: list[Platform] = []
    predecessor: dict[str, str] = {}
    running: dict[str, int] = {}
    ids = {0: [], 1: []}
    for direction in (0, 1):
        order = list(range(n)) if direction == 0 else list(range(n - 1, -1, -1))
        seg = runs if direction == 0 else runs[::-1]
        offset = 0 if direction == 0 else cycle // 2
        for pos, st in enumerate(order):
            pid = f"L1.{direction}.{stations[st]}"
            terminal = pos in (0, n - 1)
            platforms.append(Platform(
                id=pid, station=stations[st], line="L1", direction=direction,
                offset=int(offset), cycle=int(cycle), h_min=H_MIN,
                tau_min=TAU_MIN, tau_max=TAU_MAX, is_depot_adjacent=terminal,
            ))
            if pos > 0:
                predecessor[pid] = ids[direction][-1]
            if pos < n - 1:
                running[pid] = int(seg[pos])
                offset += int(seg[pos]) + TAU_NOMINAL
            ids[direction].append(pid)

    by_id = {p.id: p for p in platforms}

    def lag(end: str, origin: str) -> int:
        gap = by_id[end].offset + TURNAROUND - by_id[origin].offset
        return max(1, math.ceil(gap / cycle))

    depots = (
        Depot("D.S00", end_platform=ids[1][-1], origin_platform=ids[0][0],
              lag=lag(ids[1][-1], ids[0][0]), u0=u_max // 2, u_max=u_max),
        Depot(f"D.{stations[-1]}", end_platform=ids[0][-1], origin_platform=ids[1][0],
              lag=lag(ids[0][-1], ids[1][0]), u0=u_max // 2, u_max=u_max),
    )
    network = LineNetwork(tuple(platforms), depots, predecessor, (), running)

    length = span + horizon + 1
    peak = np.array([peak_factor(k, span) for k in range(length)])
    rates = {}
    for p in platforms:
        if p.id in (ids[0][-1], ids[1][-1]):
            rates[p.id] = tuple(0.0 for _ in range(length))
            continue
        base = rng.uniform(*base_rate)
        jitter = np.exp(noise * rng.standard_normal(length) - 0.5 * noise ** 2) if noise > 0 else np.ones(length)
        rates[p.id] = tuple(float(round(v, 4)) for v in base * peak * jitter)
    flows = FlowProfile(rates=rates, span=int(span), horizon=int(horizon))

    per_segment = total_energy / (n - 1)
    costs = CostParameters(e_energy={pid: float(per_segment) for pid in running})
    return Scenario(network, flows, costs)


def total_demand(scenario: Scenario) -> float:
    """Passengers arriving over the simulation span, all platforms."""
    total = 0.0
    for p in scenario.network.platforms:
        row = np.asarray(scenario.flows.rates[p.id][1:scenario.flows.span + 1])
        total += float(row.sum()) * p.cycle
    return total


# ---------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class Violation:
    field: str
    platform: str
    message: str

    def __str__(self) -> str:
        return f"{self.field}[{self.platform}]: {self.message}"


def validate(network: LineNetwork, flows: FlowProfile | None = None,
             costs: CostParameters | None = None) -> list[Violation]:
    out: list[Violation] = []
    ids = set(network.platform_ids)
    if len(ids) != network.n_platforms:
        out.append(Violation("platforms", "*", "duplicate platform id"))

    for p in network.platforms:
        if p.h_min <= 0:
            out.append(Violation("h_min", p.id, f"h_min must be > 0, got {p.h_min}"))
        if not (0 < p.tau_min <= p.tau_max < p.cycle):
            out.append(Violation("tau", p.id, f"need 0 < tau_min <= tau_max < cycle, got "
                                              f"[{p.tau_min}, {p.tau_max}] / {p.cycle}"))
        if p.cycle <= 0:
            out.append(Violation("cycle", p.id, "departures must be strictly increasing"))

    for p, q in network.predecessor.items():
        if p not in ids or q not in ids:
            out.append(Violation("predecessor", p, f"unknown platform in link {q} -> {p}"))
            continue
        a, b = network.platform(q), network.platform(p)
        if a.line != b.line or a.direction != b.direction:
            out.append(Violation("predecessor", p, "predecessor on a different line/direction"))
        if a.cycle != b.cycle:
            out.append(Violation("cycle", p, "cycle differs from predecessor"))
        run = network.running_time.get(q, 0)
        slack = b.offset - a.offset - run
        if not (b.tau_min <= slack <= b.tau_max):
            out.append(Violation("offset", p, f"nominal dwell {slack}s outside "
                                              f"[{b.tau_min}, {b.tau_max}]"))
    # acyclic along each line
    for pid in network.platform_ids:
        seen, cur = set(), pid
        while cur in network.predecessor:
            if cur in seen:
                out.append(Violation("predecessor", pid, "cyclic predecessor chain"))
                break
            seen.add(cur)
            cur = network.predecessor[cur]
    preds = list(network.predecessor.values())
    for q in set(preds):
        if preds.count(q) > 1:
            out.append(Violation("predecessor", q, "platform has more than one successor"))

    for pid in network.platform_ids:
        if network.successor(pid) is not None and network.running_time.get(pid, 0) <= 0:
            out.append(Violation("running_time", pid, "running time must be > 0"))

    outgoing: dict[str, float] = {}
    for t in network.transfer_links:
        if t.source not in ids or t.target not in ids:
            out.append(Violation("transfer_links", t.source, f"unknown platform in {t}"))
            continue
        a, b = network.platform(t.source), network.platform(t.target)
        if a.line == b.line or a.station != b.station:
            out.append(Violation("transfer_links", t.source,
                                 "transfer must join distinct lines at one station"))
        if not (0.0 <= t.beta <= 1.0):
            out.append(Violation("transfer_links", t.source, f"beta {t.beta} outside [0,1]"))
        outgoing[t.source] = outgoing.get(t.source, 0.0) + t.beta
    for pid, tot in outgoing.items():
        if tot > 1.0 + 1e-12:
            out.append(Violation("transfer_links", pid, f"outgoing fractions sum to {tot} > 1"))
    try:
        network.passenger_order()
    except InvalidParameterError as exc:
        out.append(Violation("transfer_links", "*", str(exc)))

    for d in network.depots:
        for pid in d.platforms:
            if pid not in ids:
                out.append(Violation("depots", d.id, f"unknown platform {pid}"))
        if d.origin_platform in network.predecessor:
            out.append(Violation("depots", d.origin_platform, "depot origin is not a route origin"))
        if network.successor(d.end_platform) is not None:
            out.append(Violation("depots", d.end_platform, "depot end platform is not a route end"))
        if not (0 <= d.u0 <= d.u_max):
            out.append(Violation("u0", d.id, f"need 0 <= u0 <= u_max, got {d.u0}/{d.u_max}"))
        if d.lag < 1:
            out.append(Violation("lag", d.id, "turnaround lag must be >= 1 cycle"))
    origins = [d.origin_platform for d in network.depots]
    if len(set(origins)) != len(origins):
        out.append(Violation("depots", "*", "two depots feed the same origin"))

    if flows is not None:
        need = flows.required_length
        for p in network.platforms:
            row = flows.rates.get(p.id)
            if row is None:
                out.append(Violation("flows", p.id, "missing flow profile"))
                continue
            if len(row) < need:
                out.append(Violation("flows", p.id, f"length {len(row)} < required {need}"))
            if any((not math.isfinite(r)) or r < 0 for r in row):
                out.append(Violation("flows", p.id, "negative or non-finite rate"))

    if costs is not None:
        if costs.w1 <= 0 or costs.w2 <= 0:
            out.append(Violation("costs", "*", "w1 and w2 must be > 0"))
        if not (0 < costs.w3 <= 1):
            out.append(Violation("costs", "*", "w3 must lie in (0, 1]"))
        if not (1 <= costs.ell_min <= costs.ell_max):
            out.append(Violation("costs", "*", "need 1 <= ell_min <= ell_max"))
        if costs.c_max <= 0:
            out.append(Violation("costs", "*", "C_max must be > 0"))
        if costs.e_add <= 0:
            out.append(Violation("costs", "*", "E_add must be > 0"))
    return out


def validate_scenario(scenario: Scenario) -> list[Violation]:
    return validate(scenario.network, scenario.flows, scenario.costs)


def platforms_by_route(network: LineNetwork) -> Iterable[list[str]]:
    for o in network.origins():
        yield network.route(o)
