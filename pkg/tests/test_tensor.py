import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kgan.tensor import (
    Adam,
    AdamState,
    ContractError,
    adam_step,
    make_rng,
    sample_categorical,
    softmax,
)
from oracles import reference_adam


def test_adam_first_step_scalar():
    p = np.array([1.0])
    adam_step(p, np.array([1.0]), AdamState.like(p), lr=0.001)
    assert p[0] == pytest.approx(0.999, abs=1e-9)


def test_adam_matches_longhand_reference():
    grads = [0.3, -1.2, 0.05, 2.0, 0.0, -0.7]
    p = np.array([0.25])
    state = AdamState.like(p)
    for g in grads:
        adam_step(p, np.array([g]), state, lr=0.01)
    assert p[0] == pytest.approx(reference_adam(0.25, grads, lr=0.01), rel=1e-12)
    assert state.step_count == len(grads)


def test_adam_zero_gradient_leaves_param():
    p = np.array([0.5, -2.0])
    state = AdamState.like(p)
    adam_step(p, np.zeros(2), state, lr=0.1)
    np.testing.assert_array_equal(p, [0.5, -2.0])
    np.testing.assert_array_equal(state.m, 0)
    np.testing.assert_array_equal(state.v, 0)


def test_adam_elementwise_independence():
    joint = np.array([0.1, 0.9])
    s = AdamState.like(joint)
    a, b = np.array([0.1]), np.array([0.9])
    sa, sb = AdamState.like(a), AdamState.like(b)
    for g1, g2 in [(0.5, -0.2), (1.5, 0.3), (-0.1, 0.0)]:
        adam_step(joint, np.array([g1, g2]), s, 0.01)
        adam_step(a, np.array([g1]), sa, 0.01)
        adam_step(b, np.array([g2]), sb, 0.01)
    np.testing.assert_array_equal(joint, [a[0], b[0]])


def test_adam_shape_mismatch():
    p = np.zeros(3)
    with pytest.raises(ContractError):
        adam_step(p, np.zeros(2), AdamState.like(p), 0.1)


def test_adam_rejects_nonpositive_lr():
    p = np.zeros(3)
    with pytest.raises(ContractError):
        adam_step(p, np.zeros(3), AdamState.like(p), 0.0)


def test_adam_bit_identical_runs():
    rng = make_rng(3)
    grads = [rng.standard_normal((4, 3)).astype(np.float32) for _ in range(5)]
    outs = []
    for _ in range(2):
        p = np.ones((4, 3), dtype=np.float32)
        opt = Adam(0.01)
        for g in grads:
            opt.step({"w": p}, {"w": g})
        outs.append(p.tobytes())
    assert outs[0] == outs[1]


def test_adam_maximize_moves_uphill():
    p = {"w": np.array([0.0])}
    Adam(0.1).step(p, {"w": np.array([1.0])}, maximize=True)
    assert p["w"][0] > 0


# ---------------------------------------------------------------- softmax


def test_softmax_uniform():
    np.testing.assert_allclose(softmax(np.zeros(7)), np.full(7, 1 / 7))


def test_softmax_two_logits_closed_form():
    x, c = 0.3, 1.7
    out = softmax(np.array([x, x + c]))
    np.testing.assert_allclose(out, [1 / (1 + np.exp(c)), np.exp(c) / (1 + np.exp(c))], atol=1e-12)


def test_softmax_large_offset():
    logits = np.array([0.1, -2.0, 3.0])
    np.testing.assert_allclose(softmax(logits + 1000.0), softmax(logits), atol=1e-6)


def test_softmax_nan_rejected():
    with pytest.raises(ContractError):
        softmax(np.array([0.0, np.nan]))


finite_logits = arrays(np.float64, st.integers(1, 20),
                       elements=st.floats(-50, 50, allow_nan=False, allow_infinity=False))


@settings(max_examples=100, deadline=None)
@given(finite_logits, st.floats(-1e3, 1e3))
def test_softmax_properties(logits, shift):
    p = softmax(logits)
    assert np.all(p > 0) and np.all(np.isfinite(p))
    assert abs(p.sum() - 1) < 1e-6
    np.testing.assert_allclose(softmax(logits + shift), p, atol=1e-6)


# ---------------------------------------------------------------- sampling


def test_sample_degenerate():
    rng = make_rng(0)
    assert {sample_categorical([0.0, 1.0, 0.0], rng) for _ in range(200)} == {1}


def test_sample_fair_coin_frequency():
    rng = make_rng(11)
    draws = [sample_categorical([0.5, 0.5], rng) for _ in range(100_000)]
    # binomial sd = 0.0016, so [0.49, 0.51] is > 6 sd wide
    assert 0.49 <= draws.count(0) / len(draws) <= 0.51


def test_sample_deterministic_given_seed():
    probs = [0.1, 0.2, 0.3, 0.4]
    r1, r2 = make_rng(5), make_rng(5)
    assert [sample_categorical(probs, r1) for _ in range(50)] == \
           [sample_categorical(probs, r2) for _ in range(50)]


def test_sample_empty_rejected():
    with pytest.raises(ContractError):
        sample_categorical([], make_rng(0))


def test_sample_unnormalized_rejected():
    with pytest.raises(ContractError):
        sample_categorical([0.5, 0.6], make_rng(0))


def test_sample_matches_inverse_cdf():
    probs = np.array([0.2, 0.5, 0.3])
    rng = make_rng(9)
    u = make_rng(9).random(20)
    expected = [int(np.searchsorted(np.cumsum(probs), x, side="right")) for x in u]
    assert [sample_categorical(probs, rng) for _ in range(20)] == expected
