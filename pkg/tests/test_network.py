import json
from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from railmpc.errors import InvalidParameterError
from railmpc.network import (FlowProfile, LineNetwork, Scenario, build_synthetic_network, peak_factor,
                             total_demand, validate, validate_scenario)


def test_two_per_direction_gives_four_platforms_two_depots():
    sc = build_synthetic_network(2, 240, 0)
    assert sc.network.n_platforms == 4
    assert len(sc.network.depots) == 2


def test_same_seed_is_byte_identical():
    assert build_synthetic_network(3, 240, 5).dumps() == build_synthetic_network(3, 240, 5).dumps()
    assert build_synthetic_network(3, 240, 5).dumps() != build_synthetic_network(3, 240, 6).dumps()


def test_total_demand_matches_direct_summation_of_the_document():
    sc = build_synthetic_network(6, 240, 7)
    doc = json.loads(sc.dumps())
    span = doc["flows"]["span"]
    cycles = {p["id"]: p["cycle"] for p in doc["network"]["platforms"]}
    expected = 0.0
    for pid, row in doc["flows"]["rates"].items():
        for k in range(1, span + 1):
            expected += row[k] * cycles[pid]
    assert total_demand(sc) == pytest.approx(expected, rel=1e-12)


def test_peak_doubles_middle_third():
    span = 120
    assert peak_factor(39, span) == 1.0
    assert peak_factor(40, span) == 2.0
    assert peak_factor(79, span) == 2.0
    assert peak_factor(80, span) == 1.0


def test_short_cycle_rejected():
    with pytest.raises(InvalidParameterError):
        build_synthetic_network(2, 100, 0)
    with pytest.raises(InvalidParameterError):
        build_synthetic_network(1, 240, 0)


def test_valid_synthetic_has_no_violations(synth):
    assert validate_scenario(synth) == []


def test_zero_headway_names_the_platform(synth):
    net = synth.network
    bad = replace(net.platforms[1], h_min=0)
    plats = tuple(bad if p.id == bad.id else p for p in net.platforms)
    out = validate(LineNetwork(plats, net.depots, net.predecessor, net.transfer_links, net.running_time))
    assert len(out) == 1
    assert out[0].platform == bad.id and out[0].field == "h_min"


def test_truncated_flows_give_one_length_violation(synth):
    pid = synth.network.platform_ids[0]
    rates = dict(synth.flows.rates)
    rates[pid] = rates[pid][:10]
    out = validate(synth.network, FlowProfile(rates, synth.flows.span, synth.flows.horizon))
    assert len(out) == 1
    assert out[0].field == "flows" and out[0].platform == pid


def test_depots_sit_at_route_ends(synth):
    net = synth.network
    for d in net.depots:
        assert d.origin_platform in net.origins()
        assert net.successor(d.end_platform) is None
        assert 0 <= d.u0 <= d.u_max


def test_malformed_document_rejected():
    with pytest.raises(InvalidParameterError):
        Scenario.from_dict({"network": {}})


@given(n=st.integers(2, 5), cycle=st.integers(200, 400), seed=st.integers(0, 2**16))
def test_roundtrip_is_byte_identical(n, cycle, seed):
    text = build_synthetic_network(n, cycle, seed, span=20, horizon=5).dumps()
    assert Scenario.loads(text).dumps() == text


@given(n=st.integers(2, 6), cycle=st.integers(190, 600), seed=st.integers(0, 2**16))
def test_synthetic_always_validates(n, cycle, seed):
    assert validate_scenario(build_synthetic_network(n, cycle, seed, span=20, horizon=5)) == []
