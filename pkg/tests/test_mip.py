import io
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from railmpc.dynamics import stage_cost, step_passengers
from railmpc.errors import DimensionMismatchError, DomainError, InfeasibleModelError
from railmpc.mip import (SYMBOL_TABLE, DiscretePlan, build_fixed_integer_lp, build_full_mip,
                         depot_schedule, extract_plans, initial_state, vector_from_plans, write_lp)
from railmpc.network import FlowProfile, LineNetwork, Scenario, build_synthetic_network
from railmpc.pipeline import random_state
from railmpc.solver import check_feasible, solve_lp, solve_milp

from conftest import single_platform, transfer_scenario


def _solve_full(sc, state, N):
    prog = build_full_mip(state, sc, N)
    res = solve_milp(prog)
    assert res.status == "optimal"
    return prog, res


def test_long_horizon_builds():
    sc = build_synthetic_network(2, 240, 0)
    state = initial_state(sc, 0, 40)
    prog = build_full_mip(state, sc, 40)
    per_cycle = 9 * sc.network.n_platforms + 3 * len(sc.network.depots)
    assert prog.n_vars == 40 * per_cycle
    assert prog.is_mip


def test_single_platform_variable_count():
    sc = single_platform(rate=0.1)
    state = initial_state(sc, 0, 1, fixed_compositions=[1])
    prog = build_full_mip(state, sc, 1)
    # d, tau, h plus six passenger quantities; no depot so nothing integral
    assert prog.n_vars == 3 + 6
    assert not prog.is_mip


def test_zero_demand_picks_minimum_composition(synth):
    zero = FlowProfile({k: tuple(0.0 for _ in v) for k, v in synth.flows.rates.items()},
                       synth.flows.span, synth.flows.horizon)
    sc = Scenario(synth.network, zero, synth.costs)
    state = initial_state(sc, 5, 4)
    prog, res = _solve_full(sc, state, 4)
    dplan, _ = extract_plans(prog, res.x)
    assert np.all(dplan.values == sc.costs.ell_min)


def test_decoupling_identity_on_one_instance(synth):
    state = random_state(synth, 4, 1, np.random.default_rng(4))
    prog, res = _solve_full(synth, state, 4)
    dplan, _ = extract_plans(prog, res.x)
    lp = build_fixed_integer_lp(state, synth, 4, dplan)
    assert not lp.is_mip
    r2 = solve_lp(lp)
    assert r2.objective == pytest.approx(res.objective, rel=1e-9)


def test_minimum_plan_under_spike_is_feasible_but_worse(synth):
    state = initial_state(synth, 50, 4, queues=[600.0, 0.0, 600.0, 0.0], inventories=[4, 4])
    prog, res = _solve_full(synth, state, 4)
    dplan, _ = extract_plans(prog, res.x)
    assert dplan.values.max() > synth.costs.ell_min
    lo = solve_lp(build_fixed_integer_lp(state, synth, 4, DiscretePlan.constant(synth.network, 4, 1)))
    assert lo.status == "optimal"
    assert lo.objective > res.objective + 1.0


def test_empty_horizon_and_bad_plan_rejected(synth):
    state = initial_state(synth, 0, 4)
    with pytest.raises(DomainError):
        build_full_mip(state, synth, 0)
    with pytest.raises(DomainError):
        build_fixed_integer_lp(state, synth, 4, DiscretePlan.constant(synth.network, 4, 7))


def test_window_too_tight_detected_at_build():
    base = single_platform()
    p = replace(base.network.platforms[0], h_min=250, tau_min=60)
    sc = Scenario(LineNetwork((p,)), base.flows, base.costs)
    state = initial_state(sc, 1, 2, last_delays=[290.0], fixed_compositions=[1])
    with pytest.raises(InfeasibleModelError):
        build_full_mip(state, sc, 2)


def test_extract_roundtrip_and_objective(synth):
    state = random_state(synth, 4, 1, np.random.default_rng(9))
    prog, res = _solve_full(synth, state, 4)
    dplan, cplan = extract_plans(prog, res.x)
    x = vector_from_plans(prog, dplan, cplan)
    np.testing.assert_allclose(x, res.x, atol=1e-7)
    assert prog.objective(x) == pytest.approx(res.objective, rel=1e-10)
    with pytest.raises(DimensionMismatchError):
        extract_plans(prog, res.x[:-1])


def test_integer_snapping(synth):
    state = initial_state(synth, 3, 4)
    prog, res = _solve_full(synth, state, 4)
    j = prog.var("ell", synth.network.depots[0].origin_platform, 0)
    x = res.x.copy()
    x[j] += 5e-6
    extract_plans(prog, x)
    x[j] += 1e-3
    with pytest.raises(DomainError):
        extract_plans(prog, x)


def test_objective_recomputed_through_costs(synth):
    """Linear stage costs summed over the plan reproduce the solver objective."""
    state = random_state(synth, 4, 1, np.random.default_rng(21))
    prog, res = _solve_full(synth, state, 4)
    _, cplan = extract_plans(prog, res.x)
    total = sum(stage_cost(synth.network, synth.costs, s, p, "linear") for s, p in cplan.trajectory())
    assert total == pytest.approx(res.objective, rel=1e-8)


def test_metadata_covers_every_variable(synth):
    prog = build_full_mip(initial_state(synth, 0, 3), synth, 3)
    syms = {v.symbol for v in prog.variables}
    assert syms <= set(SYMBOL_TABLE)
    for v in prog.variables:
        assert prog.index[(v.symbol, v.owner, v.k)] == prog.variables.index(v)
    assert {"d", "tau", "h", "n", "n_before", "n_after", "n_depart", "n_arrive", "n_trans", "ell", "eta",
            "u"} <= syms


def test_fixed_lp_change_constants(synth):
    """The fixed LP's constant term equals energy plus E_add per depot change."""
    rng = np.random.default_rng(5)
    net, costs = synth.network, synth.costs
    for _ in range(10):
        state = random_state(synth, 4, 1, rng)
        plan = DiscretePlan(tuple(d.origin_platform for d in net.depots), rng.integers(1, 4, size=(2, 4)))
        try:
            lp = build_fixed_integer_lp(state, synth, 4, plan)
        except InfeasibleModelError:
            continue
        ell_in, _ = depot_schedule(net, state, plan)
        changes = int(np.sum(plan.values != ell_in))
        energy = sum(costs.energy(p.id) * plan.get(net.route_origin(p.id), j)
                     for p in net.platforms for j in range(4))
        assert lp.offset == pytest.approx(costs.w2 * (energy + costs.e_add * changes), rel=1e-12)


def test_big_m_bounds_inactive(synth):
    rng = np.random.default_rng(8)
    for _ in range(5):
        state = random_state(synth, 4, 1, rng)
        prog, res = _solve_full(synth, state, 4)
        for v, val in zip(prog.variables, res.x):
            if v.symbol in ("n", "n_before", "n_after", "n_depart", "n_arrive", "n_trans") and v.ub > v.lb:
                assert val < v.ub - 1.0


def test_write_lp_sections(synth):
    prog = build_full_mip(initial_state(synth, 0, 2), synth, 2)
    buf = io.StringIO()
    write_lp(prog, buf)
    text = buf.getvalue()
    for head in ("Minimize", "Subject To", "Bounds", "General", "End"):
        assert head in text
    assert text.count(":") >= prog.A_ub.shape[0] + prog.A_eq.shape[0]


def _replay(sc, state, cplan):
    """Drive the simulator cycle by cycle with the plan's schedule."""
    net = sc.network
    queues = dict(zip(net.platform_ids, state.queues))
    out = {}
    for j in range(cplan.horizon):
        services = cplan.cycle(j)
        rates = dict(zip(net.platform_ids, state.rho[:, j]))
        pax, queues = step_passengers(net, sc.costs, queues, services, rates)
        for pid, r in pax.items():
            out[(pid, j)] = r
    return out


@given(seed=st.integers(0, 100_000))
def test_simulator_reproduces_mip_auxiliaries(seed, synth):
    state = random_state(synth, 4, 1, np.random.default_rng(seed))
    prog, res = _solve_full(synth, state, 4)
    assert check_feasible(prog, res.x).feasible
    _, cplan = extract_plans(prog, res.x)
    sim = _replay(synth, state, cplan)
    for key, r in cplan.passengers.items():
        s = sim[key]
        np.testing.assert_allclose([s.n, s.n_before, s.n_after, s.n_depart, s.n_arrive, s.n_trans],
                                   [r.n, r.n_before, r.n_after, r.n_depart, r.n_arrive, r.n_trans],
                                   atol=1e-6)


def test_transfer_network_agreement():
    sc = transfer_scenario()
    state = initial_state(sc, 2, 3, queues=[40, 0, 30, 20, 0], fixed_compositions=[1, 1])
    prog = build_full_mip(state, sc, 3)
    res = solve_lp(prog)
    assert res.status == "optimal"
    _, cplan = extract_plans(prog, res.x)
    sim = _replay(sc, state, cplan)
    assert any(r.n_trans > 0 for r in cplan.passengers.values())
    for key, r in cplan.passengers.items():
        assert sim[key].n_trans == pytest.approx(r.n_trans, abs=1e-6)
        assert sim[key].n_after == pytest.approx(r.n_after, abs=1e-6)
