"""scikit-learn style wrappers around training and triple classification.

>>> emb = KGEmbedding(model="transe", regime="gan-scratch", epochs=5).fit(train_triples)
>>> emb.score_samples(test_triples)          # f_r(h, t), lower is more plausible
>>> clf = TripleClassifier(emb).fit(valid_triples, valid_labels)
>>> clf.predict(test_triples)                # +1 / -1
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .data import KgDataset
from .evaluator import ClassificationThresholds, classify_scores, evaluate_link_prediction, fit_thresholds
from .scorers import score_batch
from .trainer import TrainConfig, train


def check_triples(X, n_entities: int | None = None, n_relations: int | None = None) -> np.ndarray:
    """Validate an (n, 3) integer array of (head, relation, tail) ids."""
    X = check_array(X, dtype=np.int64, ensure_2d=True, ensure_min_samples=1)
    if X.shape[1] != 3:
        raise ValueError(f"expected triples with 3 columns, got {X.shape[1]}")
    if X.min() < 0:
        raise ValueError("triple ids must be non-negative")
    if n_entities is not None and X[:, [0, 2]].max() >= n_entities:
        raise ValueError(f"entity id out of range for {n_entities} entities")
    if n_relations is not None and X[:, 1].max() >= n_relations:
        raise ValueError(f"relation id out of range for {n_relations} relations")
    return X


def check_labels(y, n: int) -> np.ndarray:
    y = np.asarray(y).ravel()
    if y.shape != (n,):
        raise ValueError(f"expected {n} labels, got {y.shape[0]}")
    if not np.isin(y, (-1, 0, 1)).all():
        raise ValueError("labels must be +1 (true) or -1/0 (false)")
    return np.where(y > 0, 1, -1)


class KGEmbedding(BaseEstimator):
    """Knowledge graph embedding trained with random or generator-supplied negatives.

    ``fit`` takes train triples as an (n, 3) id array, or a :class:`KgDataset`
    via ``dataset=`` (needed for bern statistics over named vocabularies and for
    filtered evaluation). Learned discriminator embeddings are exposed as
    ``entity_embeddings_`` and ``relation_embeddings_``.
    """

    def __init__(self, model="transe", regime="random", gamma=1.0, dim=50, lr=0.001,
                 batch_size=1024, norm="l1", strategy="unif", epochs=100, g_passes=1,
                 d_passes=1, l2_coeff=1e-5, gen_dim=None, gen_hidden=None, gen_lr=None,
                 exclude_gold=False, pretrain_epochs=0, pretrain_lr=None, n_entities=None,
                 n_relations=None, random_state=0):
        self.model = model
        self.regime = regime
        self.gamma = gamma
        self.dim = dim
        self.lr = lr
        self.batch_size = batch_size
        self.norm = norm
        self.strategy = strategy
        self.epochs = epochs
        self.g_passes = g_passes
        self.d_passes = d_passes
        self.l2_coeff = l2_coeff
        self.gen_dim = gen_dim
        self.gen_hidden = gen_hidden
        self.gen_lr = gen_lr
        self.exclude_gold = exclude_gold
        self.pretrain_epochs = pretrain_epochs
        self.pretrain_lr = pretrain_lr
        self.n_entities = n_entities
        self.n_relations = n_relations
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(
            model=self.model, gamma=self.gamma, dim=self.dim, lr=self.lr,
            batch_size=self.batch_size, norm=self.norm, strategy=self.strategy,
            regime=self.regime, epochs=self.epochs, g_passes=self.g_passes,
            d_passes=self.d_passes, l2_coeff=self.l2_coeff, seed=self.random_state,
            gen_dim=self.gen_dim, gen_hidden=self.gen_hidden, gen_lr=self.gen_lr,
            exclude_gold=self.exclude_gold, pretrain_epochs=self.pretrain_epochs,
            pretrain_lr=self.pretrain_lr,
        ).validate()

    def fit(self, X=None, y=None, *, dataset: KgDataset | None = None, init_from=None):
        """Train on triples ``X`` (``y`` is ignored) or on ``dataset.train``.

        ``init_from`` may be a fitted :class:`KGEmbedding` or a discriminator model
        and seeds the gan-pretrain regime.
        """
        cfg = self._config()
        if dataset is None:
            if X is None:
                raise ValueError("fit needs triples X or dataset=")
            X = check_triples(X, self.n_entities, self.n_relations)
            dataset = KgDataset.from_triples(X, n_entities=self.n_entities,
                                             n_relations=self.n_relations)
        if isinstance(init_from, KGEmbedding):
            check_is_fitted(init_from)
            init_from = init_from.discriminator_
        disc, gen, report = train(cfg, dataset, pretrained_disc=init_from)
        self.discriminator_ = disc
        self.generator_ = gen
        self.report_ = report
        self.dataset_ = dataset
        self.n_entities_ = dataset.n_entities
        self.n_relations_ = dataset.n_relations
        self.entity_embeddings_ = disc.params["entity"]
        self.relation_embeddings_ = disc.params["relation"]
        return self

    def score_samples(self, X) -> np.ndarray:
        """Dissimilarity f_r(h, t) per triple; lower means more plausible."""
        check_is_fitted(self)
        X = check_triples(X, self.n_entities_, self.n_relations_)
        return score_batch(self.discriminator_, *X.T)

    def decision_function(self, X) -> np.ndarray:
        return -self.score_samples(X)

    def transform(self, X) -> np.ndarray:
        """Concatenated (head, relation, tail) discriminator embeddings per triple."""
        check_is_fitted(self)
        X = check_triples(X, self.n_entities_, self.n_relations_)
        return np.hstack([self.entity_embeddings_[X[:, 0]], self.relation_embeddings_[X[:, 1]],
                          self.entity_embeddings_[X[:, 2]]])

    def link_prediction(self, split: str = "test", n_jobs: int = 1):
        """Raw and filtered Mean Rank / Hits@10 on a split of the fitted dataset."""
        check_is_fitted(self)
        return evaluate_link_prediction(self.discriminator_, self.dataset_, split, n_jobs)


class TripleClassifier(ClassifierMixin, BaseEstimator):
    """Per-relation score thresholds on top of a fitted :class:`KGEmbedding`."""

    def __init__(self, embedding=None):
        self.embedding = embedding

    def fit(self, X, y):
        check_is_fitted(self.embedding)
        X = check_triples(X, self.embedding.n_entities_, self.embedding.n_relations_)
        y = check_labels(y, len(X))
        self.thresholds_: ClassificationThresholds = fit_thresholds(
            self.embedding.discriminator_, X, y)
        self.classes_ = np.array([-1, 1])
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self)
        X = check_triples(X, self.embedding.n_entities_, self.embedding.n_relations_)
        return classify_scores(self.embedding.score_samples(X), X[:, 1], self.thresholds_)

    def decision_function(self, X) -> np.ndarray:
        """delta_r - score: positive exactly where the triple is classified true."""
        check_is_fitted(self)
        X = check_triples(X, self.embedding.n_entities_, self.embedding.n_relations_)
        return self.thresholds_.deltas(X[:, 1]) - self.embedding.score_samples(X)
