"""Closed-loop experiments: data acquisition, ensemble ranking, online inference."""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .classifier import ClassifierModel, Dataset, predict
from .dynamics import stage_cost, step_passengers
from .errors import InfeasibleModelError, InvalidParameterError, RailMPCError
from .mip import (ContinuousPlan, DiscretePlan, SystemState, build_fixed_integer_lp, build_full_mip,
                  depot_schedule, extract_plans, fixed_origins, initial_state, inventory_feasible)
from .network import Scenario
from .reduction import ReductionConfig, reduce_flow, to_learning_state
from .solver import SolverConfig, check_feasible, solve_lp, solve_milp

log = logging.getLogger(__name__)

EXACT = "exact-milp"
LEARN_FULL = "learning-lp-full-state"
LEARN_REDUCED = "learning-lp-reduced-state"
METHODS = (EXACT, LEARN_FULL, LEARN_REDUCED)


# ---------------------------------------------------------------------------
# state handling

def random_state(scenario: Scenario, horizon: int, n_steps: int, rng: np.random.Generator) -> SystemState:
    """Draw a state inside the operating envelope.

    The start cycle is uniform over the cycles that leave room for
    ``n_steps`` closed-loop steps; delays start at zero.
    """
    net, costs, flows = scenario.network, scenario.costs, scenario.flows
    if n_steps > flows.span:
        raise InvalidParameterError(f"{n_steps} steps exceed the profile span {flows.span}")
    kappa0 = int(rng.integers(0, flows.span - n_steps + 1))
    queues = rng.uniform(0.0, 0.5 * costs.c_max * costs.ell_max, size=net.n_platforms)
    in_service = [tuple(int(v) for v in rng.integers(costs.ell_min, costs.ell_max + 1, size=d.lag))
                  for d in net.depots]
    inventories = [int(rng.integers(0, d.u_max + 1)) for d in net.depots]
    fixed = [int(v) for v in rng.integers(costs.ell_min, costs.ell_max + 1, size=len(fixed_origins(net)))]
    return initial_state(scenario, kappa0, horizon, queues=queues, in_service=in_service,
                         inventories=inventories, fixed_compositions=fixed)


def advance_state(scenario: Scenario, state: SystemState, dplan: DiscretePlan, cplan: ContinuousPlan):
    """Apply the first cycle of a plan through the passenger dynamics.

    Returns ``(next_state, services, passengers)`` for the applied cycle.
    """
    net = scenario.network
    services = cplan.cycle(0)
    queues = dict(zip(net.platform_ids, state.queues))
    rates = dict(zip(net.platform_ids, state.rho[:, 0]))
    pax, nxt = step_passengers(net, scenario.costs, queues, services, rates)
    _, inv = depot_schedule(net, state, dplan)
    fixed = dict(zip(fixed_origins(net), state.fixed_compositions))
    in_service = []
    for m, dep in enumerate(net.depots):
        src = net.inbound_origin(dep)
        newest = fixed[src] if src in fixed else dplan.get(src, 0)
        in_service.append(tuple(state.in_service[m][1:]) + (int(newest),))
    delays = [services[p.id].departure - p.d_pre(state.kappa0) for p in net.platforms]
    nxt_state = initial_state(
        scenario, state.kappa0 + 1, state.horizon,
        queues=np.array([nxt[p] for p in net.platform_ids]),
        last_delays=np.array(delays), in_service=in_service,
        inventories=[int(v) for v in inv[:, 0]], fixed_compositions=state.fixed_compositions)
    return nxt_state, services, pax


def applied_cost(scenario: Scenario, services, pax, mode: str) -> float:
    net, costs = scenario.network, scenario.costs
    return float(sum(stage_cost(net, costs, services[p], pax[p], mode) for p in net.platform_ids))


# ---------------------------------------------------------------------------
# data acquisition

def dataset_meta(scenario: Scenario, state: SystemState, reduction: ReductionConfig) -> dict:
    net, costs = scenario.network, scenario.costs
    return {"x_dim": int(state.x.size), "n_platforms": net.n_platforms,
            "n_segments": reduction.n_segments, "seg_len": reduction.seg_len,
            "horizon": state.horizon, "origins": [d.origin_platform for d in net.depots],
            "ell_min": costs.ell_min, "ell_max": costs.ell_max}


def acquire_data(scenario: Scenario, n_episodes: int, n_steps: int, solver: SolverConfig | None,
                 reduction: ReductionConfig, seed: int, horizon: int) -> Dataset:
    """Optimal compositions along MILP-driven trajectories from random states."""
    feats, labels, eps, steps = [], [], [], []
    discarded = 0
    meta = None
    for e in range(n_episodes):
        state = random_state(scenario, horizon, n_steps, np.random.default_rng([seed, e]))
        meta = meta or dataset_meta(scenario, state, reduction)
        rows = []
        try:
            for s in range(n_steps):
                prog = build_full_mip(state, scenario, horizon)
                res = solve_milp(prog, solver)
                if not res.ok:
                    raise InfeasibleModelError(f"MILP status {res.status}")
                dplan, cplan = extract_plans(prog, res.x)
                rows.append((to_learning_state(state, reduction).vector, dplan.values.ravel(), e, s))
                state, _, _ = advance_state(scenario, state, dplan, cplan)
        except RailMPCError as exc:
            discarded += 1
            log.warning("episode %d discarded: %s", e, exc)
            continue
        for f, lab, ep, st in rows:
            feats.append(f)
            labels.append(lab)
            eps.append(ep)
            steps.append(st)
    if meta is None:
        meta = dataset_meta(scenario, initial_state(scenario, 0, horizon), reduction)
    meta["discarded"] = discarded
    dim = meta["x_dim"] + meta["n_platforms"] * reduction.n_segments
    n_heads = len(meta["origins"]) * horizon
    return Dataset(np.array(feats).reshape(-1, dim), np.array(labels, dtype=np.int64).reshape(-1, n_heads),
                   np.array(eps, dtype=np.int64), np.array(steps, dtype=np.int64), meta)


def rereduce(dataset: Dataset, reduction: ReductionConfig) -> Dataset:
    """Re-express per-slot features with a coarser segment reduction."""
    m = dataset.meta
    if m["seg_len"] != 1:
        raise InvalidParameterError("can only re-reduce a per-slot dataset")
    dx, P = m["x_dim"], m["n_platforms"]
    flows = dataset.features[:, dx:].reshape(len(dataset), P, m["n_segments"])
    if flows.shape[2] < reduction.span:
        raise InvalidParameterError(f"dataset holds {flows.shape[2]} slots, reduction needs {reduction.span}")
    red = reduce_flow(flows[:, :, :reduction.span], reduction).reshape(len(dataset), -1)
    meta = dict(m, n_segments=reduction.n_segments, seg_len=reduction.seg_len)
    return Dataset(np.hstack([dataset.features[:, :dx], red]), dataset.labels, dataset.episode,
                   dataset.step, meta, dataset.train_idx, dataset.val_idx)


def cap_bytes(dataset: Dataset, budget: int) -> Dataset:
    """Keep the leading records that fit in ``budget`` bytes."""
    n = int(budget // dataset.bytes_per_record) if len(dataset) else 0
    return dataset.head(n)


# ---------------------------------------------------------------------------
# online inference

@dataclass(frozen=True)
class Ensemble:
    """Model indices ordered by closed-loop cost, cheapest first."""

    order: tuple[int, ...]
    costs: tuple[float, ...]
    all_costs: tuple[float, ...] = ()

    def __post_init__(self):
        if any(b < a for a, b in zip(self.costs, self.costs[1:])):
            raise InvalidParameterError("ensemble costs must be ascending")

    def to_dict(self) -> dict:
        return {"order": list(self.order), "costs": list(self.costs), "all_costs": list(self.all_costs)}

    @classmethod
    def from_dict(cls, d: dict) -> "Ensemble":
        return cls(tuple(d["order"]), tuple(d["costs"]), tuple(d.get("all_costs", ())))


@dataclass
class InferenceResult:
    dplan: DiscretePlan
    cplan: ContinuousPlan
    program: object
    x: np.ndarray
    objective: float
    branch: str
    tried: int


def _try_plan(scenario, state, horizon, plan, solver):
    # a plan that over- or under-draws a depot can never yield a feasible LP
    if not inventory_feasible(scenario.network, state, plan):
        return None
    try:
        prog = build_fixed_integer_lp(state, scenario, horizon, plan)
    except InfeasibleModelError:
        return None
    res = solve_lp(prog, solver)
    if not res.ok:
        return None
    return prog, res


def online_inference(ensemble: Ensemble, models: list[ClassifierModel], state: SystemState,
                     previous: DiscretePlan | None, scenario: Scenario,
                     solver: SolverConfig | None = None) -> InferenceResult:
    """First feasible prediction wins; then the two heuristics; then the MILP."""
    net, costs = scenario.network, scenario.costs
    N = state.horizon
    tried = 0
    for rank, i in enumerate(ensemble.order):
        model = models[i]
        red = ReductionConfig(model.meta["n_segments"], model.meta["seg_len"])
        plan = predict(model, to_learning_state(state, red), state, net)
        tried += 1
        got = _try_plan(scenario, state, N, plan, solver)
        if got is not None:
            return _result(got, f"network-{rank}", tried)
    candidates = []
    if previous is not None:
        candidates.append(("heuristic-a", previous.shifted()))
    candidates.append(("heuristic-b", DiscretePlan.constant(net, N, costs.ell_min)))
    for branch, plan in candidates:
        tried += 1
        got = _try_plan(scenario, state, N, plan, solver)
        if got is not None:
            return _result(got, branch, tried)
    prog = build_full_mip(state, scenario, N)
    res = solve_milp(prog, solver)
    if not res.ok:
        raise InfeasibleModelError(f"no feasible plan at cycle {state.kappa0} (MILP status {res.status})")
    return _result((prog, res), "milp", tried + 1)


def _result(got, branch, tried) -> InferenceResult:
    prog, res = got
    dplan, cplan = extract_plans(prog, res.x)
    return InferenceResult(dplan, cplan, prog, res.x, res.objective, branch, tried)


# ---------------------------------------------------------------------------
# closed loop

@dataclass
class StepRecord:
    step: int
    kappa0: int
    branch: str
    plan: DiscretePlan
    objective: float
    cost_exact: float
    cost_linear: float
    wall_time: float
    worst_violation: float
    state: SystemState | None = None


@dataclass
class Episode:
    seed: int
    method: str
    initial_state: SystemState
    steps: list[StepRecord] = field(default_factory=list)

    @property
    def total_cost(self) -> float:
        return float(sum(s.cost_exact for s in self.steps))

    @property
    def total_linear_cost(self) -> float:
        return float(sum(s.cost_linear for s in self.steps))

    @property
    def mean_step_time(self) -> float:
        return float(np.mean([s.wall_time for s in self.steps])) if self.steps else 0.0

    @property
    def worst_violation(self) -> float:
        return max((s.worst_violation for s in self.steps), default=0.0)

    def branches(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for s in self.steps:
            out[s.branch] = out.get(s.branch, 0) + 1
        return out


def run_closed_loop(scenario: Scenario, method: str, horizon: int, n_steps: int = 30, seed: int = 0, *,
                    ensemble: Ensemble | None = None, models: list[ClassifierModel] | None = None,
                    solver: SolverConfig | None = None, keep_states: bool = False,
                    state: SystemState | None = None) -> Episode:
    if method not in METHODS:
        raise InvalidParameterError(f"unknown method {method!r}")
    if method != EXACT and (ensemble is None or models is None):
        raise InvalidParameterError(f"{method} needs an ensemble and its models")
    if state is None:
        state = random_state(scenario, horizon, n_steps, np.random.default_rng(seed))
    ep = Episode(seed, method, state)
    prev = None
    for s in range(n_steps):
        t0 = time.perf_counter()
        if method == EXACT:
            prog = build_full_mip(state, scenario, horizon)
            res = solve_milp(prog, solver)
            if not res.ok:
                raise InfeasibleModelError(f"MILP status {res.status} at cycle {state.kappa0}")
            dplan, cplan = extract_plans(prog, res.x)
            x, obj, branch = res.x, res.objective, "milp"
        else:
            inf = online_inference(ensemble, models, state, prev, scenario, solver)
            prog, x, obj, branch = inf.program, inf.x, inf.objective, inf.branch
            dplan, cplan = inf.dplan, inf.cplan
        wall = time.perf_counter() - t0
        viol = check_feasible(prog, x, (solver or SolverConfig()).feas_tol).worst_violation
        nxt, services, pax = advance_state(scenario, state, dplan, cplan)
        ep.steps.append(StepRecord(
            s, state.kappa0, branch, dplan, float(obj),
            applied_cost(scenario, services, pax, "exact"), applied_cost(scenario, services, pax, "linear"),
            wall, viol, state if keep_states else None))
        prev, state = dplan, nxt
    return ep


def evaluation_states(scenario: Scenario, horizon: int, n_steps: int, n_test: int, seed: int) -> list[SystemState]:
    return [random_state(scenario, horizon, n_steps, np.random.default_rng([seed, 10_000 + e]))
            for e in range(n_test)]


def form_ensemble(models: list[ClassifierModel], scenario: Scenario, n_test: int, n_steps: int,
                  keep: int, seed: int, horizon: int, solver: SolverConfig | None = None) -> Ensemble:
    """Rank models by summed closed-loop cost with each one alone."""
    if not models:
        raise InvalidParameterError("need at least one trained model")
    states = evaluation_states(scenario, horizon, n_steps, n_test, seed)
    totals = []
    for i in range(len(models)):
        solo = Ensemble((i,), (0.0,))
        total = 0.0
        for e, st in enumerate(states):
            ep = run_closed_loop(scenario, LEARN_REDUCED, horizon, n_steps, seed, ensemble=solo,
                                 models=models, solver=solver, state=st)
            total += ep.total_cost
        totals.append(total)
    ranked = sorted(range(len(models)), key=lambda i: (totals[i], i))[:keep]
    return Ensemble(tuple(ranked), tuple(totals[i] for i in ranked), tuple(totals))


# ---------------------------------------------------------------------------
# reporting

EPISODE_FIELDS = ("seed", "step", "method", "branch", "cost_exact", "cost_linear", "wall_ms", "worst_violation")


def episode_rows(ep: Episode):
    for s in ep.steps:
        yield {"seed": ep.seed, "step": s.step, "method": ep.method, "branch": s.branch,
               "cost_exact": repr(s.cost_exact), "cost_linear": repr(s.cost_linear),
               "wall_ms": f"{1000 * s.wall_time:.3f}", "worst_violation": repr(s.worst_violation)}


def write_episodes_csv(episodes: list[Episode], out) -> None:
    w = csv.DictWriter(out, fieldnames=EPISODE_FIELDS)
    w.writeheader()
    for ep in episodes:
        w.writerows(episode_rows(ep))


def read_episodes_csv(text: str) -> dict[tuple[str, int], dict]:
    """Per (method, seed): total exact cost and per-step wall times."""
    out: dict[tuple[str, int], dict] = {}
    for row in csv.DictReader(io.StringIO(text)):
        key = (row["method"], int(row["seed"]))
        rec = out.setdefault(key, {"cost": 0.0, "wall": []})
        rec["cost"] += float(row["cost_exact"])
        rec["wall"].append(float(row["wall_ms"]) / 1000.0)
    return out


@dataclass
class MethodRow:
    method: str
    gap_mean: float
    gap_max: float
    gap_std: float
    time_mean: float
    time_max: float
    time_std: float
    episodes: int
    steps: int


@dataclass
class Report:
    benchmark: str
    rows: list[MethodRow]
    gaps: dict[str, list[float]] = field(default_factory=dict)

    def row(self, method: str) -> MethodRow:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)

    def to_json(self) -> str:
        return json.dumps({"benchmark": self.benchmark, "rows": [r.__dict__ for r in self.rows],
                           "gaps": self.gaps}, indent=1)

    def render(self) -> str:
        head = (f"{'Method':<28}{'Optimality gap (%)':^30}{'CPU time (s)':^30}\n"
                f"{'':<28}{'mean':>10}{'max':>10}{'std':>10}{'mean':>10}{'max':>10}{'std':>10}")
        lines = [head, "-" * len(head.splitlines()[1])]
        for r in self.rows:
            lines.append(f"{r.method:<28}{r.gap_mean:>10.2f}{r.gap_max:>10.2f}{r.gap_std:>10.2f}"
                         f"{r.time_mean:>10.4f}{r.time_max:>10.4f}{r.time_std:>10.4f}")
        return "\n".join(lines)


def compare_methods(episodes: dict[str, list[Episode]], benchmark: str = EXACT) -> Report:
    """Percentage gap per paired seed against ``benchmark`` plus per-step time stats."""
    totals = {m: {ep.seed: (ep.total_cost, [s.wall_time for s in ep.steps]) for ep in eps}
              for m, eps in episodes.items()}
    return _report(totals, benchmark)


def compare_from_csv(text: str, benchmark: str = EXACT) -> Report:
    totals: dict[str, dict] = {}
    for (m, seed), rec in read_episodes_csv(text).items():
        totals.setdefault(m, {})[seed] = (rec["cost"], rec["wall"])
    return _report(totals, benchmark)


def _report(totals: dict, benchmark: str) -> Report:
    if benchmark not in totals:
        raise InvalidParameterError(f"benchmark method {benchmark!r} missing")
    bench = totals[benchmark]
    order = [benchmark] + sorted(m for m in totals if m != benchmark)
    rows, gaps = [], {}
    for m in order:
        seeds = sorted(s for s in totals[m] if s in bench)
        g = [100.0 * (totals[m][s][0] - bench[s][0]) / abs(bench[s][0]) for s in seeds]
        if m == benchmark:
            g = [0.0] * len(seeds)
        t = [w for s in totals[m] for w in totals[m][s][1]]
        ga, ta = np.array(g or [np.nan]), np.array(t or [np.nan])
        rows.append(MethodRow(m, float(ga.mean()), float(ga.max()), float(ga.std()),
                              float(ta.mean()), float(ta.max()), float(ta.std()), len(seeds), len(t)))
        gaps[m] = g
    return Report(benchmark, rows, gaps)
