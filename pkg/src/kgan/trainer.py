"""Margin-loss discriminator training and the alternating generator/discriminator loop."""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Protocol

import numpy as np

from .data import KgDataset, Triple
from .generator import (
    STRATEGIES,
    GeneratorModel,
    head_probabilities,
    init_generator,
    policy_gradient_step,
    sample_negatives,
)
from .scorers import (
    KINDS,
    NORMS,
    DiscriminatorModel,
    accumulate_gradient,
    init_model,
    project_constraints,
    score_batch,
)
from .tensor import Adam, spawn_rngs

REGIMES = ("random", "gan-scratch", "gan-pretrain")
_REGIME_ALIASES = {"random-baseline": "random"}


class ConfigError(ValueError):
    """Inconsistent or out-of-range training configuration."""


@dataclass
class TrainConfig:
    model: str = "transe"
    gamma: float = 1.0
    dim: int = 50
    lr: float = 0.001
    batch_size: int = 1024
    norm: str = "l1"
    strategy: str = "unif"
    regime: str = "random"
    epochs: int = 100
    g_passes: int = 1
    d_passes: int = 1
    l2_coeff: float = 1e-5
    seed: int = 0
    gen_dim: int | None = None
    gen_hidden: int | None = None
    gen_lr: float | None = None
    exclude_gold: bool = False
    pretrain_epochs: int = 0
    pretrain_lr: float | None = None

    def __post_init__(self):
        self.regime = _REGIME_ALIASES.get(self.regime, self.regime)

    def validate(self) -> "TrainConfig":
        if self.model not in KINDS:
            raise ConfigError(f"model must be one of {KINDS}, got {self.model!r}")
        if self.norm not in NORMS:
            raise ConfigError(f"norm must be one of {NORMS}, got {self.norm!r}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.regime not in REGIMES:
            raise ConfigError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        checks = [
            ("gamma", self.gamma > 0),
            ("dim", self.dim > 0),
            ("lr", self.lr > 0),
            ("batch_size", self.batch_size >= 1),
            ("epochs", self.epochs >= 0),
            ("g_passes", self.g_passes >= 0),
            ("d_passes", self.d_passes >= 0),
            ("l2_coeff", self.l2_coeff >= 0),
            ("pretrain_epochs", self.pretrain_epochs >= 0),
            ("gen_dim", self.gen_dim is None or self.gen_dim > 0),
            ("gen_hidden", self.gen_hidden is None or self.gen_hidden > 0),
            ("gen_lr", self.gen_lr is None or self.gen_lr > 0),
            ("pretrain_lr", self.pretrain_lr is None or self.pretrain_lr > 0),
        ]
        for name, ok in checks:
            if not ok:
                raise ConfigError(f"invalid {name}: {getattr(self, name)!r}")
        return self

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))


@dataclass
class ReportRow:
    epoch: int
    phase: str
    mean_loss: float
    violation_rate: float
    mean_reward: float


@dataclass
class TrainReport:
    rows: list[ReportRow] = field(default_factory=list)
    wall_clock: float = 0.0

    CSV_HEADER = ("epoch", "phase", "mean_loss", "violation_rate", "mean_reward")

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.CSV_HEADER)
            for row in self.rows:
                writer.writerow([row.epoch, row.phase, repr(float(row.mean_loss)),
                                 repr(float(row.violation_rate)), repr(float(row.mean_reward))])


def margin_loss(f_pos, f_neg, gamma: float):
    """Hinge ``max(0, f_pos - f_neg + gamma)``; works elementwise on arrays."""
    out = np.maximum(0.0, np.asarray(f_pos, dtype=np.float64) - f_neg + gamma)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------- negatives


class NegativeSource(Protocol):
    def __call__(self, positives: np.ndarray, rng: np.random.Generator) -> np.ndarray: ...


def random_negatives(positives: np.ndarray, strategy: str, dataset: KgDataset,
                     rng: np.random.Generator) -> np.ndarray:
    """Replace the head or the tail (never both) of each row with a uniform entity."""
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
    replace_head = rng.random(len(positives)) < head_probabilities(positives, strategy, dataset)
    ents = rng.integers(0, dataset.n_entities, size=len(positives))
    out = positives.copy()
    out[replace_head, 0] = ents[replace_head]
    out[~replace_head, 2] = ents[~replace_head]
    return out


def random_negative(positive, strategy: str, dataset: KgDataset,
                    rng: np.random.Generator) -> Triple:
    neg = random_negatives(np.asarray(positive)[None, :], strategy, dataset, rng)[0]
    return Triple(*(int(x) for x in neg))


class RandomNegatives:
    def __init__(self, dataset: KgDataset, strategy: str):
        self.dataset = dataset
        self.strategy = strategy

    def __call__(self, positives, rng):
        return random_negatives(positives, self.strategy, self.dataset, rng)


class GeneratorNegatives:
    """Negatives drawn from a (frozen) generator."""

    def __init__(self, gen: GeneratorModel, dataset: KgDataset, strategy: str,
                 exclude_gold: bool = False):
        self.gen = gen
        self.dataset = dataset
        self.strategy = strategy
        self.exclude_gold = exclude_gold

    def __call__(self, positives, rng):
        return sample_negatives(self.gen, positives, self.strategy, self.dataset, rng,
                                exclude_gold=self.exclude_gold).negatives


# --------------------------------------------------------------------------- passes


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def train_discriminator_pass(disc: DiscriminatorModel, negative_source: NegativeSource,
                             dataset: KgDataset, cfg: TrainConfig, optimizer: Adam,
                             rng: np.random.Generator, epoch: int = 0,
                             phase: str = "discriminator") -> ReportRow:
    """One shuffled pass over train; Adam step on the mean hinge loss per batch."""
    train = dataset.train
    total_loss = total_reward = 0.0
    violations = 0
    for idx in _batches(len(train), cfg.batch_size, rng):
        pos = train[idx]
        neg = negative_source(pos, rng)
        f_pos = score_batch(disc, *pos.T)
        f_neg = score_batch(disc, *neg.T)
        inner = f_pos - f_neg + cfg.gamma
        loss = np.maximum(0.0, inner)
        active = loss > 0
        total_loss += loss.sum()
        total_reward += np.tanh(inner).sum()
        violations += int(active.sum())
        if not active.any():
            continue
        coef = active / len(idx)
        grads = accumulate_gradient(disc, *pos.T, coef)
        accumulate_gradient(disc, *neg.T, -coef, out=grads)
        optimizer.step(disc.params, grads)
        project_constraints(disc)
    n = len(train)
    return ReportRow(epoch, phase, float(total_loss / n), violations / n, float(total_reward / n))


def train_generator_pass(gen: GeneratorModel, disc: DiscriminatorModel, dataset: KgDataset,
                         cfg: TrainConfig, optimizer: Adam, rng: np.random.Generator,
                         epoch: int = 0) -> ReportRow:
    """One shuffled pass over train updating only the generator by policy gradient."""
    train = dataset.train
    total_loss = total_reward = 0.0
    violations = 0
    for idx in _batches(len(train), cfg.batch_size, rng):
        pos = train[idx]
        batch = sample_negatives(gen, pos, cfg.strategy, dataset, rng,
                                 exclude_gold=cfg.exclude_gold)
        f_pos = score_batch(disc, *pos.T)
        f_neg = score_batch(disc, *batch.negatives.T)
        inner = f_pos - f_neg + cfg.gamma
        rewards = np.tanh(inner)
        loss = np.maximum(0.0, inner)
        total_loss += loss.sum()
        total_reward += rewards.sum()
        violations += int((loss > 0).sum())
        policy_gradient_step(gen, batch, rewards, optimizer, cfg.l2_coeff)
    n = len(train)
    return ReportRow(epoch, "generator", float(total_loss / n), violations / n,
                     float(total_reward / n))


# --------------------------------------------------------------------------- driver


EpochHook = Callable[[int, DiscriminatorModel, "GeneratorModel | None"], None]


def train(cfg: TrainConfig, dataset: KgDataset, pretrained_disc: DiscriminatorModel | None = None,
          on_epoch: EpochHook | None = None):
    """Run the configured regime; returns ``(discriminator, generator_or_None, report)``.

    * ``random``: discriminator passes with uniformly sampled negatives.
    * ``gan-scratch``: both networks start random; each epoch runs ``g_passes``
      generator passes then ``d_passes`` discriminator passes.
    * ``gan-pretrain``: as gan-scratch, but the discriminator starts from
      ``pretrained_disc`` or from ``pretrain_epochs`` of random-negative training.
    """
    cfg.validate()
    if cfg.regime == "gan-pretrain" and pretrained_disc is None and cfg.pretrain_epochs == 0:
        raise ConfigError("gan-pretrain needs a pretrained discriminator or pretrain_epochs > 0")
    started = time.perf_counter()
    disc_rng, gen_rng, loop_rng, pre_rng = spawn_rngs(cfg.seed, 4)
    report = TrainReport()

    if pretrained_disc is not None:
        if (pretrained_disc.n_entities != dataset.n_entities
                or pretrained_disc.n_relations != dataset.n_relations):
            raise ConfigError("pretrained discriminator does not match the dataset vocabulary")
        if pretrained_disc.kind != cfg.model:
            raise ConfigError(
                f"pretrained discriminator is {pretrained_disc.kind!r}, config asks for {cfg.model!r}")
        disc = pretrained_disc.copy()
    else:
        disc = init_model(cfg.model, dataset.n_entities, dataset.n_relations, cfg.dim,
                          cfg.norm, disc_rng)

    random_source = RandomNegatives(dataset, cfg.strategy)
    if cfg.regime == "gan-pretrain" and pretrained_disc is None:
        pre_opt = Adam(cfg.pretrain_lr or cfg.lr)
        for epoch in range(1, cfg.pretrain_epochs + 1):
            report.rows.append(train_discriminator_pass(
                disc, random_source, dataset, cfg, pre_opt, pre_rng, epoch, phase="pretrain"))

    gen = None
    if cfg.regime != "random":
        gen = init_generator(dataset.n_entities, dataset.n_relations, cfg.gen_dim or cfg.dim,
                             cfg.gen_hidden, gen_rng)
    d_opt = Adam(cfg.lr)
    g_opt = Adam(cfg.gen_lr or cfg.lr)

    for epoch in range(1, cfg.epochs + 1):
        if gen is None:
            source = random_source
        else:
            for _ in range(cfg.g_passes):
                report.rows.append(train_generator_pass(gen, disc, dataset, cfg, g_opt,
                                                        loop_rng, epoch))
            source = GeneratorNegatives(gen, dataset, cfg.strategy, cfg.exclude_gold)
        for _ in range(cfg.d_passes):
            report.rows.append(train_discriminator_pass(disc, source, dataset, cfg, d_opt,
                                                        loop_rng, epoch))
        if on_epoch is not None:
            on_epoch(epoch, disc, gen)

    report.wall_clock = time.perf_counter() - started
    return disc, gen, report
