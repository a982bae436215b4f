import io
import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from railmpc import pipeline as pl
from railmpc.classifier import ClassifierModel, HyperParams
from railmpc.classifier import lstm
from railmpc.errors import InfeasibleModelError, InvalidParameterError
from railmpc.mip import DiscretePlan, build_fixed_integer_lp, build_full_mip, initial_state, inventory_feasible
from railmpc.reduction import ReductionConfig
from railmpc.solver import solve_lp, solve_milp


def _constant_model(scenario, horizon, ell, reduction=ReductionConfig(2, 2), mask=False):
    """Untrained network whose output bias forces composition ``ell`` on every head."""
    net = scenario.network
    origins = [d.origin_platform for d in net.depots]
    meta = {"x_dim": 2 * net.n_platforms + sum(d.lag + 1 for d in net.depots), "n_platforms": net.n_platforms,
            "n_segments": reduction.n_segments, "seg_len": reduction.seg_len, "horizon": horizon,
            "origins": origins, "ell_min": 1, "ell_max": 3}
    n_in = net.n_platforms + meta["x_dim"]
    p = lstm.init_params(n_in, 4, len(origins) * horizon * 3, np.random.default_rng(0))
    p["Wo"][:] = 0.0
    p["bo"][:] = 0.0
    p["bo"][ell - 1::3] = 10.0
    return ClassifierModel(p, HyperParams(mask_outputs=mask), meta, np.zeros(n_in), np.ones(n_in))


def _enumerate(scenario, state, horizon):
    """Best objective over every composition plan, each solved as an LP."""
    origins = tuple(d.origin_platform for d in scenario.network.depots)
    best = np.inf
    for combo in itertools.product((1, 2, 3), repeat=len(origins) * horizon):
        plan = DiscretePlan(origins, np.array(combo).reshape(len(origins), horizon))
        try:
            lp = build_fixed_integer_lp(state, scenario, horizon, plan)
        except InfeasibleModelError:
            continue
        r = solve_lp(lp)
        if r.ok:
            best = min(best, r.objective)
    return best


def test_single_record(small4):
    ds = pl.acquire_data(small4, 1, 1, None, ReductionConfig.identity(4), 0, 4)
    assert len(ds) == 1 - ds.meta["discarded"]


def test_labels_match_enumeration(small4):
    ds = pl.acquire_data(small4, 6, 1, None, ReductionConfig.identity(2), 11, 2)
    assert len(ds) == 6
    origins = tuple(d.origin_platform for d in small4.network.depots)
    for e in range(6):
        state = pl.random_state(small4, 2, 1, np.random.default_rng([11, e]))
        np.testing.assert_array_equal(ds.features[e], np.concatenate([state.x, state.rho.ravel()]))
        plan = DiscretePlan(origins, ds.labels[e].reshape(2, 2))
        got = solve_lp(build_fixed_integer_lp(state, small4, 2, plan)).objective
        assert got == pytest.approx(_enumerate(small4, state, 2), rel=1e-6)


def test_acquisition_deterministic(small4):
    a = pl.acquire_data(small4, 3, 2, None, ReductionConfig.identity(4), 5, 4)
    b = pl.acquire_data(small4, 3, 2, None, ReductionConfig.identity(4), 5, 4)
    assert a.checksum() == b.checksum()


def test_rereduce_matches_direct_acquisition(small4):
    slot = pl.acquire_data(small4, 2, 2, None, ReductionConfig.identity(4), 1, 4)
    direct = pl.acquire_data(small4, 2, 2, None, ReductionConfig(2, 2), 1, 4)
    np.testing.assert_allclose(pl.rereduce(slot, ReductionConfig(2, 2)).features, direct.features, atol=1e-15)
    with pytest.raises(InvalidParameterError):
        pl.rereduce(direct, ReductionConfig(1, 2))


def test_cap_bytes(slot_dataset):
    capped = pl.cap_bytes(slot_dataset, 10 * slot_dataset.bytes_per_record + 3)
    assert len(capped) == 10 and capped.nbytes <= 10 * slot_dataset.bytes_per_record + 3


def test_same_seed_same_initial_state(small4):
    model = _constant_model(small4, 4, 1)
    ens = pl.Ensemble((0,), (0.0,))
    a = pl.run_closed_loop(small4, pl.EXACT, 4, 2, seed=7)
    b = pl.run_closed_loop(small4, pl.LEARN_REDUCED, 4, 2, seed=7, ensemble=ens, models=[model])
    np.testing.assert_array_equal(a.initial_state.x, b.initial_state.x)
    assert a.initial_state.kappa0 == b.initial_state.kappa0


def test_closed_loop_deterministic_and_chained(small4):
    a = pl.run_closed_loop(small4, pl.EXACT, 4, 3, seed=2, keep_states=True)
    b = pl.run_closed_loop(small4, pl.EXACT, 4, 3, seed=2)
    assert [s.cost_exact for s in a.steps] == [s.cost_exact for s in b.steps]
    assert [s.kappa0 for s in a.steps] == [a.initial_state.kappa0 + i for i in range(3)]
    for s, nxt in zip(a.steps, a.steps[1:]):
        expect, _, _ = pl.advance_state(small4, s.state, s.plan, _cplan(small4, s))
        np.testing.assert_allclose(nxt.state.x, expect.x, atol=1e-9)
    assert a.worst_violation <= 1e-6


def _cplan(sc, step):
    from railmpc.mip import extract_plans
    lp = build_fixed_integer_lp(step.state, sc, step.state.horizon, step.plan)
    return extract_plans(lp, solve_lp(lp).x)[1]


def test_inference_network_branch_and_resolve_oracle(small4):
    state = initial_state(small4, 5, 4, inventories=[4, 4])
    res = pl.online_inference(pl.Ensemble((0,), (0.0,)), [_constant_model(small4, 4, 1)], state, None, small4)
    assert res.branch == "network-0" and res.tried == 1
    assert np.all(res.dplan.values == 1)
    ref = solve_lp(build_fixed_integer_lp(state, small4, 4, res.dplan))
    assert res.objective == pytest.approx(ref.objective, rel=1e-12)


def test_inference_heuristic_branches(small4):
    # no stock anywhere: an unmasked all-3 prediction cannot be served
    state = initial_state(small4, 5, 4, inventories=[0, 0], in_service=[(1, 1), (1,)])
    greedy = _constant_model(small4, 4, 3)
    ens = pl.Ensemble((0,), (0.0,))
    prev = DiscretePlan.constant(small4.network, 4, 1)
    assert pl.online_inference(ens, [greedy], state, prev, small4).branch == "heuristic-a"
    assert pl.online_inference(ens, [greedy], state, None, small4).branch == "heuristic-b"


def test_inference_reaches_milp_when_minimum_plan_breaks(small4):
    # full depots and long inbound trains: dispatching one unit would detach
    # more units than the depot can hold, so neither heuristic survives
    state = initial_state(small4, 5, 4, inventories=[4, 4], in_service=[(3, 3), (3,)])
    prev = DiscretePlan.constant(small4.network, 4, 1)
    res = pl.online_inference(pl.Ensemble((0,), (0.0,)), [_constant_model(small4, 4, 1)], state, prev, small4)
    assert res.branch == "milp" and res.tried == 4
    ref = solve_milp(build_full_mip(state, small4, 4))
    assert res.objective == pytest.approx(ref.objective, rel=1e-12)


def test_form_ensemble_ties_and_sorting(small4):
    good = _constant_model(small4, 4, 1)
    bad = _constant_model(small4, 4, 3)
    ens = pl.form_ensemble([bad, good, good], small4, 2, 3, 3, 0, 4)
    assert list(ens.costs) == sorted(ens.costs)
    assert ens.all_costs[1] == ens.all_costs[2]
    i = ens.order.index(1)
    assert ens.order[i + 1] == 2
    again = pl.form_ensemble([bad, good, good], small4, 2, 3, 3, 0, 4)
    assert again == ens
    with pytest.raises(InvalidParameterError):
        pl.form_ensemble([], small4, 1, 1, 1, 0, 4)
    with pytest.raises(InvalidParameterError):
        pl.Ensemble((0, 1), (2.0, 1.0))


def test_compare_benchmark_against_itself(small4):
    eps = [pl.run_closed_loop(small4, pl.EXACT, 4, 2, seed=s) for s in range(2)]
    rep = pl.compare_methods({pl.EXACT: eps})
    row = rep.row(pl.EXACT)
    assert (row.gap_mean, row.gap_max, row.gap_std) == (0.0, 0.0, 0.0)
    assert "Optimality gap (%)" in rep.render() and "CPU time (s)" in rep.render()
    with pytest.raises(InvalidParameterError):
        pl.compare_methods({pl.LEARN_FULL: eps})


def test_csv_recomputation(small4):
    exact = [pl.run_closed_loop(small4, pl.EXACT, 4, 3, seed=s) for s in range(3)]
    ens = pl.Ensemble((0,), (0.0,))
    learn = [pl.run_closed_loop(small4, pl.LEARN_REDUCED, 4, 3, seed=s, ensemble=ens,
                                models=[_constant_model(small4, 4, 2)]) for s in range(3)]
    buf = io.StringIO()
    pl.write_episodes_csv(exact + learn, buf)
    # independent recomputation from the raw rows
    import csv
    tot = {}
    for row in csv.DictReader(io.StringIO(buf.getvalue())):
        k = (row["method"], int(row["seed"]))
        tot[k] = tot.get(k, 0.0) + float(row["cost_exact"])
    gaps = [100 * (tot[(pl.LEARN_REDUCED, s)] - tot[(pl.EXACT, s)]) / tot[(pl.EXACT, s)] for s in range(3)]
    rep = pl.compare_from_csv(buf.getvalue())
    assert rep.row(pl.LEARN_REDUCED).gap_mean == pytest.approx(np.mean(gaps), rel=1e-4, abs=1e-6)
    assert rep.row(pl.LEARN_REDUCED).gap_mean == pytest.approx(
        pl.compare_methods({pl.EXACT: exact, pl.LEARN_REDUCED: learn}).row(pl.LEARN_REDUCED).gap_mean, rel=1e-12)


def test_learning_needs_ensemble(small4):
    with pytest.raises(InvalidParameterError):
        pl.run_closed_loop(small4, pl.LEARN_FULL, 4, 1)
    with pytest.raises(InvalidParameterError):
        pl.run_closed_loop(small4, "heuristic", 4, 1)


@given(seed=st.integers(0, 100_000))
def test_inventory_precheck_is_sound(seed, small4):
    """Plans rejected without an LP solve are exactly the ones the LP rejects."""
    rng = np.random.default_rng(seed)
    state = pl.random_state(small4, 4, 1, rng)
    origins = tuple(d.origin_platform for d in small4.network.depots)
    plan = DiscretePlan(origins, rng.integers(1, 4, size=(2, 4)))
    try:
        lp_ok = solve_lp(build_fixed_integer_lp(state, small4, 4, plan)).ok
    except InfeasibleModelError:
        lp_ok = False
    assert lp_ok == inventory_feasible(small4.network, state, plan)
