import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from railmpc.errors import DimensionMismatchError, InvalidParameterError
from railmpc.mip import initial_state
from railmpc.network import FlowProfile, Scenario
from railmpc.reduction import ReductionConfig, learning_dim, reduce_flow, to_learning_state

floats = st.floats(0, 10, allow_nan=False)


def test_small_example():
    np.testing.assert_array_equal(reduce_flow([1, 2, 3, 4], ReductionConfig(2, 2)), [1.5, 3.5])


def test_constant_slice():
    np.testing.assert_array_equal(reduce_flow(np.full(12, 0.7), ReductionConfig(3, 4)), np.full(3, 0.7))


def test_length_mismatch():
    with pytest.raises(DimensionMismatchError):
        reduce_flow(np.ones(5), ReductionConfig(2, 2))
    with pytest.raises(InvalidParameterError):
        ReductionConfig(0, 3)


@given(arrays(np.float64, 36, elements=floats))
def test_sum_identity_at_reference_configuration(flow):
    cfg = ReductionConfig(4, 9)
    red = reduce_flow(flow, cfg)
    assert red.size * 9 == flow.size
    assert abs(cfg.seg_len * red.sum() - flow.sum()) <= 1e-12 * max(1.0, flow.sum())


@given(st.integers(1, 6), st.integers(1, 6), st.data())
def test_segment_means_exact(ns, h, data):
    flow = data.draw(arrays(np.float64, ns * h, elements=floats))
    red = reduce_flow(flow, ReductionConfig(ns, h))
    for k in range(ns):
        assert abs(red[k] - flow[k * h:(k + 1) * h].mean()) <= 1e-12
    assert abs(red.mean() - flow.mean()) <= 1e-12 * max(1.0, flow.mean())


@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.data())
def test_composition_of_reductions(ns, h1, h2, data):
    flow = data.draw(arrays(np.float64, ns * h1 * h2, elements=floats))
    direct = reduce_flow(flow, ReductionConfig(ns, h1 * h2))
    staged = reduce_flow(reduce_flow(flow, ReductionConfig(ns * h2, h1)), ReductionConfig(ns, h2))
    np.testing.assert_allclose(direct, staged, atol=1e-12)


def test_learning_state_dimension_formula():
    assert learning_dim(20, 4, ReductionConfig(4, 1)) == 36


@pytest.mark.parametrize("ns,h", [(1, 4), (2, 2), (4, 1), (2, 3)])
def test_learning_state_on_scenario(synth, ns, h):
    state = initial_state(synth, 7, 8, queues=[1, 2, 3, 4])
    ls = to_learning_state(state, ReductionConfig(ns, h))
    assert ls.dim == state.x.size + synth.network.n_platforms * ns == ls.vector.size
    np.testing.assert_array_equal(ls.x, state.x)
    np.testing.assert_allclose(ls.rho_reduced[:, 0], state.rho[:, :h].mean(axis=1), atol=1e-15)


def test_insufficient_flow_length(synth):
    state = initial_state(synth, 0, 3)
    with pytest.raises(DimensionMismatchError):
        to_learning_state(state, ReductionConfig(2, 2))


def test_zero_demand(synth):
    zero = FlowProfile({k: tuple(0.0 for _ in v) for k, v in synth.flows.rates.items()},
                       synth.flows.span, synth.flows.horizon)
    state = initial_state(Scenario(synth.network, zero, synth.costs), 3, 4, queues=[5, 0, 1, 2])
    ls = to_learning_state(state, ReductionConfig(2, 2))
    assert not ls.rho_reduced.any()
    np.testing.assert_array_equal(ls.x, state.x)
