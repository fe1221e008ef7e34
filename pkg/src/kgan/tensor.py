"""Adam, softmax, categorical sampling and seeded generators shared by both networks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DTYPE = np.float32


class ContractError(ValueError):
    """A numerical routine was called with arguments violating its preconditions."""


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator; identical seeds give identical streams on every platform."""
    return np.random.Generator(np.random.Philox(int(seed)))


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """``n`` independent counter-based streams derived from one seed."""
    children = np.random.SeedSequence(int(seed)).spawn(n)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, param: np.ndarray, **kwargs) -> "AdamState":
        return cls(np.zeros_like(param), np.zeros_like(param), **kwargs)


@dataclass
class Adam:
    """Adam over a dict of named parameter arrays, updated in place."""

    lr: float
    states: dict[str, AdamState] = field(default_factory=dict)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             maximize: bool = False) -> None:
        for name in sorted(grads):
            state = self.states.get(name)
            if state is None:
                state = self.states[name] = AdamState.like(params[name])
            g = -grads[name] if maximize else grads[name]
            adam_step(params[name], g, state, self.lr)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState, lr: float):
    """One bias-corrected Adam descent step, applied to ``param`` in place."""
    if param.shape != grad.shape or state.m.shape != param.shape or state.v.shape != param.shape:
        raise ContractError(
            f"shape mismatch: param {param.shape}, grad {grad.shape}, moments {state.m.shape}"
        )
    if not lr > 0:
        raise ContractError(f"learning rate must be positive, got {lr}")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    g = grad.astype(state.m.dtype, copy=False)
    state.m *= b1
    state.m += (1.0 - b1) * g
    state.v *= b2
    state.v += (1.0 - b2) * (g * g)
    m_hat = state.m / (1.0 - b1 ** t)
    v_hat = state.v / (1.0 - b2 ** t)
    param -= (lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(param.dtype, copy=False)
    return param, state


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-shifted softmax along ``axis``."""
    logits = np.asarray(logits)
    if np.isnan(logits).any():
        raise ContractError("softmax received NaN logits")
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    logits = np.asarray(logits)
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    norm = np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    shifted -= norm
    return shifted


def sample_categorical(probs, rng: np.random.Generator) -> int:
    """Inverse-CDF draw of one index from ``probs`` using a single uniform variate."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1 or probs.size == 0:
        raise ContractError("cannot sample from an empty distribution")
    total = probs.sum()
    if abs(total - 1.0) > 1e-4:
        raise ContractError(f"probabilities sum to {total}, not 1")
    return int(sample_categorical_rows(probs[None, :], rng)[0])


def sample_categorical_rows(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One inverse-CDF draw per row of a (n, k) probability matrix."""
    probs = np.asarray(probs, dtype=np.float64)
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0]) * cdf[:, -1]
    # number of cdf entries <= u, i.e. the first index whose cdf exceeds u
    idx = np.array([np.searchsorted(row, x, side="right") for row, x in zip(cdf, u)],
                   dtype=np.int64)
    # guard float round-off at the top and never land on a zero-probability slot
    idx = np.minimum(idx, probs.shape[1] - 1)
    bad = probs[np.arange(len(idx)), idx] <= 0
    if bad.any():
        for i in np.flatnonzero(bad):
            nz = np.flatnonzero(probs[i] > 0)
            idx[i] = nz[np.searchsorted(nz, idx[i]) - 1] if idx[i] > nz[0] else nz[0]
    return idx
