import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import generator_gradient_error, make_model
from kgan.data import HEAD, TAIL, KgDataset
from kgan.generator import (
    _forward,
    _input_ids,
    forward,
    forward_batch,
    init_generator,
    log_prob_gradient,
    policy_gradient_step,
    reward,
    reward_batch,
    sample_negative,
    sample_negatives,
)
from kgan.scorers import DiscriminatorModel
from kgan.tensor import Adam, ContractError, make_rng
from oracles import finite_difference


def _gen(n_e=10, n_r=3, dim=4, hidden=5, seed=0):
    return init_generator(n_e, n_r, dim, hidden, make_rng(seed), dtype=np.float64)


def test_zero_weights_give_uniform():
    gen = _gen()
    for name in ("W1", "b1", "W2", "b2"):
        gen.params[name][...] = 0.0
    np.testing.assert_allclose(forward(gen, (1, 0, 2), HEAD), np.full(10, 0.1), atol=1e-12)
    np.testing.assert_allclose(forward(gen, (1, 0, 2), TAIL), np.full(10, 0.1), atol=1e-12)


def test_head_side_depends_only_on_tail_and_relation():
    gen = _gen()
    a = forward(gen, (0, 1, 5), HEAD)
    b = forward(gen, (7, 1, 5), HEAD)
    np.testing.assert_array_equal(a, b)


def test_tail_side_depends_only_on_head_and_reverse_relation():
    gen = _gen()
    np.testing.assert_array_equal(forward(gen, (4, 2, 0), TAIL), forward(gen, (4, 2, 9), TAIL))
    ent, rel = _input_ids(gen, np.array([[4, 2, 0]]), np.array([False]))
    assert ent.tolist() == [4] and rel.tolist() == [2 + 3]


def test_sides_use_different_inputs():
    gen = _gen()
    assert not np.allclose(forward(gen, (4, 2, 4), TAIL), forward(gen, (4, 2, 4), HEAD))


def test_distribution_strictly_positive_and_normalized():
    gen = init_generator(50, 4, 8, None, make_rng(3))
    probs = forward_batch(gen, np.array([[0, 0, 1], [5, 3, 2]]), np.array([True, False]))
    assert (probs > 0).all()
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)


def test_forward_rejects_bad_ids():
    gen = _gen()
    with pytest.raises(ContractError):
        forward(gen, (0, 3, 1), HEAD)
    with pytest.raises(ValueError):
        forward(gen, (0, 1, 1), "middle")


def test_init_shapes():
    gen = init_generator(12, 5, 7, None, make_rng(0))
    shapes = {k: v.shape for k, v in gen.params.items()}
    assert shapes == {"entity": (12, 7), "relation": (10, 7), "W1": (14, 7), "b1": (7,),
                      "W2": (7, 12), "b2": (12,)}
    np.testing.assert_array_equal(gen.params["b1"], 0)
    assert gen.n_relations == 5 and gen.hidden == 7


# ---------------------------------------------------------------- sampling


def test_unif_side_frequency():
    gen = _gen()
    pos = np.tile([[1, 0, 2]], (10_000, 1))
    batch = sample_negatives(gen, pos, "unif", None, make_rng(4))
    assert 0.47 <= batch.replace_head.mean() <= 0.53


def test_bern_side_frequency_follows_statistics():
    rows = [[0, 0, t] for t in range(1, 10)]
    ds = KgDataset.from_triples(rows, n_entities=10)
    gen = _gen()
    batch = sample_negatives(gen, np.tile([[0, 0, 1]], (10_000, 1)), "bern", ds, make_rng(6))
    # tph = 9, hpt = 1 -> head replaced with probability 0.9
    assert abs(batch.replace_head.mean() - 0.9) < 0.015


def test_negative_differs_only_on_sampled_side():
    gen = _gen()
    pos = make_rng(1).integers(0, [10, 3, 10], size=(200, 3))
    b = sample_negatives(gen, pos, "unif", None, make_rng(2))
    np.testing.assert_array_equal(b.negatives[:, 1], pos[:, 1])
    np.testing.assert_array_equal(b.negatives[b.replace_head, 2], pos[b.replace_head, 2])
    np.testing.assert_array_equal(b.negatives[~b.replace_head, 0], pos[~b.replace_head, 0])
    picked = np.where(b.replace_head, b.negatives[:, 0], b.negatives[:, 2])
    np.testing.assert_array_equal(picked, b.sampled)


def test_log_prob_matches_forward():
    gen = _gen()
    neg = sample_negative(gen, (3, 1, 4), "unif", None, make_rng(8))
    probs = forward(gen, (3, 1, 4), neg.side)
    assert neg.log_prob == pytest.approx(np.log(probs[neg.sampled_entity]), abs=1e-12)


def test_exclude_gold_never_returns_positive():
    gen = _gen()
    pos = np.tile([[3, 1, 4]], (2000, 1))
    b = sample_negatives(gen, pos, "unif", None, make_rng(9), exclude_gold=True)
    gold = np.where(b.replace_head, 3, 4)
    assert not (b.sampled == gold).any()


def test_gold_can_be_sampled_by_default():
    gen = _gen(n_e=2)
    pos = np.tile([[0, 0, 1]], (500, 1))
    b = sample_negatives(gen, pos, "unif", None, make_rng(1))
    assert (b.negatives == pos).all(axis=1).any()


def test_sampling_deterministic():
    gen = _gen()
    pos = make_rng(1).integers(0, [10, 3, 10], size=(50, 3))
    a = sample_negatives(gen, pos, "unif", None, make_rng(5))
    b = sample_negatives(gen, pos, "unif", None, make_rng(5))
    np.testing.assert_array_equal(a.negatives, b.negatives)


# ---------------------------------------------------------------- reward


def _transe_1d(values, rel=0.0):
    return DiscriminatorModel("transe", "l1", {
        "entity": np.array(values, dtype=np.float64)[:, None],
        "relation": np.array([[rel]], dtype=np.float64),
    })


def test_reward_example():
    # f_pos = 0.2, f_neg = 0.9, gamma = 1.5
    disc = _transe_1d([0.0, 0.2, 0.9])
    assert reward(disc, (0, 0, 1), (0, 0, 2), 1.5) == pytest.approx(np.tanh(0.8), abs=1e-12)
    assert np.tanh(0.8) == pytest.approx(0.664037, abs=1e-6)


def test_reward_equal_scores():
    disc = _transe_1d([0.0, 0.3, -0.3])
    assert reward(disc, (0, 0, 1), (0, 0, 2), 1.0) == pytest.approx(np.tanh(1.0))


def test_reward_rejects_nonpositive_margin():
    disc = _transe_1d([0.0, 0.3])
    with pytest.raises(ContractError):
        reward(disc, (0, 0, 1), (0, 0, 0), 0.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 1000))
def test_reward_bounded_and_monotone(seed):
    disc = make_model("transe", n_entities=6, n_relations=2, dim=3, seed=seed)
    rng = make_rng(seed)
    pos = rng.integers(0, [6, 2, 6], size=(20, 3))
    neg = rng.integers(0, [6, 2, 6], size=(20, 3))
    r = reward_batch(disc, pos, neg, 1.0)
    assert (np.abs(r) < 1).all()
    assert (reward_batch(disc, pos, neg, 2.0) >= r).all()


# ---------------------------------------------------------------- gradients


def test_log_prob_gradient_matches_finite_differences():
    gen = _gen(n_e=7, n_r=2, dim=3, hidden=6, seed=11)
    pos = np.array([[1, 0, 4], [2, 1, 5], [6, 1, 0]])
    replace_head = np.array([True, False, True])
    sampled = np.array([3, 5, 0])
    coef = np.array([0.7, -0.4, 1.1])
    ent, rel = _input_ids(gen, pos, replace_head)
    # finite differences are only valid away from ReLU kinks
    assert np.abs(_forward(gen, ent, rel)["pre"]).min() > 1e-2

    def objective():
        logp = _forward(gen, ent, rel)["logp"]
        return float((coef * logp[np.arange(3), sampled]).sum())

    analytic = log_prob_gradient(gen, pos, replace_head, sampled, coef)
    rng = make_rng(0)
    checked = 0
    for slot, arr in gen.params.items():
        for _ in range(4):
            if slot == "entity":
                idx = (int(rng.choice(ent)), int(rng.integers(arr.shape[1])))
            elif slot == "relation":
                idx = (int(rng.choice(rel)), int(rng.integers(arr.shape[1])))
            else:
                idx = tuple(int(rng.integers(s)) for s in arr.shape)
            fd = finite_difference(objective, gen.params, slot, idx, step=1e-5)
            an = analytic[slot][idx]
            assert abs(fd - an) / max(abs(fd), abs(an), 1e-4) < 1e-3, (slot, idx)
            checked += 1
    assert checked >= 20


def test_log_prob_gradient_random_points():
    rng = make_rng(21)
    assert max(generator_gradient_error(rng) for _ in range(10)) < 1e-3


def _one_step(gen, batch, rewards, l2=0.0):
    gen = gen.copy()
    policy_gradient_step(gen, batch, np.asarray(rewards, dtype=float), Adam(0.05), l2)
    return gen


@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_policy_step_moves_sampled_probability_with_reward(sign):
    gen = _gen(seed=2)
    pos = np.array([[1, 0, 4]])
    batch = sample_negatives(gen, pos, "unif", None, make_rng(3))
    side = HEAD if batch.replace_head[0] else TAIL
    before = forward(gen, pos[0], side)[batch.sampled[0]]
    after = forward(_one_step(gen, batch, [sign]), pos[0], side)[batch.sampled[0]]
    assert (after - before) * sign > 0


def test_zero_reward_without_l2_changes_nothing():
    gen = _gen(seed=2)
    batch = sample_negatives(gen, np.array([[1, 0, 4], [2, 2, 3]]), "unif", None, make_rng(3))
    after = _one_step(gen, batch, [0.0, 0.0])
    assert after.digest() == gen.digest()


def test_policy_step_rejects_bad_rewards():
    gen = _gen()
    batch = sample_negatives(gen, np.array([[1, 0, 4]]), "unif", None, make_rng(3))
    with pytest.raises(ContractError):
        policy_gradient_step(gen, batch, np.array([np.nan]), Adam(0.1))
    with pytest.raises(ContractError):
        policy_gradient_step(gen, batch, np.array([1.0, 2.0]), Adam(0.1))
