"""Policy network that proposes corrupting entities, trained by REINFORCE.

Given a positive (h, r, t) and a corruption side, the network embeds the
entity-relation pair that stays fixed -- (t, r) when replacing the head,
(h, r^-1) when replacing the tail -- concatenates the two vectors, and maps
them through ``Linear -> ReLU -> Linear -> softmax`` to a distribution over
every entity. Reverse relations live in rows ``n_relations + r`` of the
relation table.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import HEAD, TAIL, KgDataset, Triple, bern_replace_head_probability
from .scorers import DiscriminatorModel, params_digest, score_batch
from .tensor import DTYPE, Adam, ContractError, log_softmax, sample_categorical_rows

STRATEGIES = ("unif", "bern")


@dataclass
class GeneratorModel:
    params: dict[str, np.ndarray]

    @property
    def n_entities(self) -> int:
        return self.params["entity"].shape[0]

    @property
    def n_relations(self) -> int:
        return self.params["relation"].shape[0] // 2

    @property
    def dim(self) -> int:
        return self.params["entity"].shape[1]

    @property
    def hidden(self) -> int:
        return self.params["b1"].shape[0]

    def copy(self) -> "GeneratorModel":
        return GeneratorModel({k: v.copy() for k, v in self.params.items()})

    def digest(self) -> str:
        return params_digest(self.params)


@dataclass(frozen=True)
class GeneratedNegative:
    negative: Triple
    sampled_entity: int
    log_prob: float
    side: str


@dataclass
class NegativeBatch:
    """Vectorized counterpart of :class:`GeneratedNegative` for a batch of positives."""

    positives: np.ndarray
    negatives: np.ndarray
    sampled: np.ndarray
    log_prob: np.ndarray
    replace_head: np.ndarray  # bool per row (z = 1)
    masked: np.ndarray | None = None  # entity excluded from the policy per row, or None
    cache: dict | None = None  # forward activations, reused by the policy-gradient step


def init_generator(n_entities: int, n_relations: int, dim: int, hidden: int | None,
                   rng: np.random.Generator, dtype=DTYPE) -> GeneratorModel:
    hidden = dim if hidden is None else hidden
    bound = 6.0 / np.sqrt(dim)

    def glorot(fan_in, fan_out):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=(fan_in, fan_out)).astype(dtype)

    params = {
        "entity": rng.uniform(-bound, bound, size=(n_entities, dim)).astype(dtype),
        "relation": rng.uniform(-bound, bound, size=(2 * n_relations, dim)).astype(dtype),
        "W1": glorot(2 * dim, hidden),
        "b1": np.zeros(hidden, dtype=dtype),
        "W2": glorot(hidden, n_entities),
        "b2": np.zeros(n_entities, dtype=dtype),
    }
    return GeneratorModel(params)


def side_flag(side: str) -> int:
    """z = 1 replaces the head, z = 0 the tail."""
    if side == HEAD:
        return 1
    if side == TAIL:
        return 0
    raise ValueError(f"side must be {HEAD!r} or {TAIL!r}, got {side!r}")


def _input_ids(gen: GeneratorModel, positives: np.ndarray, replace_head: np.ndarray):
    n_e, n_r = gen.n_entities, gen.n_relations
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
    if positives.size and (
        positives[:, [0, 2]].min() < 0 or positives[:, [0, 2]].max() >= n_e
        or positives[:, 1].min() < 0 or positives[:, 1].max() >= n_r
    ):
        raise ContractError("triple ids out of range for the generator")
    h, r, t = positives.T
    ent = np.where(replace_head, t, h)
    rel = np.where(replace_head, r, r + n_r)
    return ent, rel


def _forward(gen: GeneratorModel, ent: np.ndarray, rel: np.ndarray, masked=None):
    # arithmetic runs in the parameter precision; the |E|-wide output layer
    # dominates the cost and float32 halves its memory traffic
    p = gen.params
    x = np.concatenate([p["entity"][ent], p["relation"][rel]], axis=1)
    pre = x @ p["W1"] + p["b1"]
    hid = np.maximum(pre, 0.0)
    logits = hid @ p["W2"] + p["b2"]
    if masked is not None:
        logits[np.arange(len(ent)), masked] = -np.inf
    return {"x": x, "pre": pre, "hid": hid, "logp": log_softmax(logits, axis=1)}


def forward(gen: GeneratorModel, positive, side: str) -> np.ndarray:
    """Distribution over all entities for corrupting ``side`` of ``positive``."""
    z = np.array([side_flag(side) == 1])
    ent, rel = _input_ids(gen, np.asarray(positive)[None, :], z)
    return np.exp(_forward(gen, ent, rel)["logp"][0])


def forward_batch(gen: GeneratorModel, positives: np.ndarray, replace_head: np.ndarray,
                  masked=None) -> np.ndarray:
    ent, rel = _input_ids(gen, positives, replace_head)
    return np.exp(_forward(gen, ent, rel, masked)["logp"])


def head_probabilities(positives: np.ndarray, strategy: str, dataset: KgDataset | None):
    """Per-row probability of corrupting the head under ``strategy``."""
    if strategy == "unif":
        return np.full(len(positives), 0.5)
    if strategy == "bern":
        if dataset is None:
            raise ValueError("bern strategy needs dataset statistics")
        table = np.array([bern_replace_head_probability(dataset, r)
                          for r in range(dataset.n_relations)])
        return table[np.asarray(positives)[:, 1]]
    raise ValueError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")


def sample_sides(positives: np.ndarray, strategy: str, dataset: KgDataset | None,
                 rng: np.random.Generator) -> np.ndarray:
    return rng.random(len(positives)) < head_probabilities(positives, strategy, dataset)


def sample_negatives(gen: GeneratorModel, positives: np.ndarray, strategy: str,
                     dataset: KgDataset | None, rng: np.random.Generator,
                     exclude_gold: bool = False) -> NegativeBatch:
    """Draw one side and one replacement entity per positive."""
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
    replace_head = sample_sides(positives, strategy, dataset, rng)
    ent, rel = _input_ids(gen, positives, replace_head)
    gold = np.where(replace_head, positives[:, 0], positives[:, 2])
    masked = gold if exclude_gold and gen.n_entities > 1 else None
    cache = _forward(gen, ent, rel, masked)
    cache["probs"] = np.exp(cache["logp"])
    sampled = sample_categorical_rows(cache["probs"], rng)
    negatives = positives.copy()
    negatives[replace_head, 0] = sampled[replace_head]
    negatives[~replace_head, 2] = sampled[~replace_head]
    return NegativeBatch(positives, negatives, sampled,
                         cache["logp"][np.arange(len(sampled)), sampled], replace_head, masked,
                         cache)


def sample_negative(gen: GeneratorModel, positive, strategy: str, dataset: KgDataset | None,
                    rng: np.random.Generator, exclude_gold: bool = False) -> GeneratedNegative:
    batch = sample_negatives(gen, np.asarray(positive)[None, :], strategy, dataset, rng,
                             exclude_gold=exclude_gold)
    return GeneratedNegative(
        negative=Triple(*(int(x) for x in batch.negatives[0])),
        sampled_entity=int(batch.sampled[0]),
        log_prob=float(batch.log_prob[0]),
        side=HEAD if batch.replace_head[0] else TAIL,
    )


def reward_batch(disc: DiscriminatorModel, positives, negatives, gamma: float) -> np.ndarray:
    if not gamma > 0:
        raise ContractError(f"margin must be positive, got {gamma}")
    positives = np.asarray(positives).reshape(-1, 3)
    negatives = np.asarray(negatives).reshape(-1, 3)
    f_pos = score_batch(disc, *positives.T)
    f_neg = score_batch(disc, *negatives.T)
    return np.tanh(f_pos - f_neg + gamma)


def reward(disc: DiscriminatorModel, positive, negative, gamma: float) -> float:
    """tanh(f(positive) - f(negative) + gamma)."""
    return float(reward_batch(disc, positive, negative, gamma)[0])


def log_prob_gradient(gen: GeneratorModel, positives: np.ndarray, replace_head: np.ndarray,
                      sampled: np.ndarray, coef, masked=None, cache=None) -> dict[str, np.ndarray]:
    """Dense ``sum_b coef[b] * grad log p(sampled[b] | input_b)`` for every generator slot.

    ``cache`` may carry the activations of a forward pass at the current
    parameters (as stored on a :class:`NegativeBatch`) to skip recomputing them.
    """
    p = gen.params
    ent, rel = _input_ids(gen, positives, replace_head)
    c = cache if cache is not None else _forward(gen, ent, rel, masked)
    n = len(ent)
    coef = np.broadcast_to(np.asarray(coef, dtype=p["W2"].dtype), (n,))

    probs = c["probs"] if "probs" in c else np.exp(c["logp"])
    dlogits = probs * -coef[:, None]
    dlogits[np.arange(n), sampled] += coef

    grads = {
        "W2": c["hid"].T @ dlogits,
        "b2": dlogits.sum(axis=0),
    }
    dpre = (dlogits @ p["W2"].T) * (c["pre"] > 0)
    grads["W1"] = c["x"].T @ dpre
    grads["b1"] = dpre.sum(axis=0)
    dx = dpre @ p["W1"].T
    d = gen.dim
    grads["entity"] = np.zeros(p["entity"].shape)
    grads["relation"] = np.zeros(p["relation"].shape)
    np.add.at(grads["entity"], ent, dx[:, :d])
    np.add.at(grads["relation"], rel, dx[:, d:])
    return grads


def policy_gradient_step(gen: GeneratorModel, batch: NegativeBatch, rewards: np.ndarray,
                         optimizer: Adam, l2_coeff: float = 0.0) -> GeneratorModel:
    """One Adam ascent step on mean(R * log p) - l2_coeff/2 * |theta|^2."""
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.shape != (len(batch.sampled),):
        raise ContractError(f"expected {len(batch.sampled)} rewards, got shape {rewards.shape}")
    if not np.isfinite(rewards).all():
        raise ContractError("rewards must be finite")
    grads = log_prob_gradient(gen, batch.positives, batch.replace_head, batch.sampled,
                              rewards / len(rewards), batch.masked, batch.cache)
    if l2_coeff:
        for name, g in grads.items():
            g -= l2_coeff * gen.params[name]
    optimizer.step(gen.params, grads, maximize=True)
    return gen
