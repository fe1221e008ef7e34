"""Link-prediction ranking and per-relation-threshold triple classification."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import HEAD, SIDES, TAIL, KgDataset
from .scorers import DiscriminatorModel, score_all, score_batch

SETTINGS = ("raw", "filtered")


class EvaluationError(ValueError):
    pass


# --------------------------------------------------------------------------- link prediction


def _ranks_from_scores(scores: np.ndarray, gold: int, known: set[int]):
    """(raw, filtered) rank of ``gold`` among all entities; only strictly lower scores count."""
    gold_score = scores[gold]
    better = scores < gold_score
    raw = 1 + int(better.sum())
    blocked = [e for e in known if e != gold]
    filtered = raw - int(better[blocked].sum()) if blocked else raw
    return raw, filtered


def triple_ranks(disc: DiscriminatorModel, triple, dataset: KgDataset) -> dict[str, tuple[int, int]]:
    """``{side: (raw_rank, filtered_rank)}`` for both corruption sides of ``triple``."""
    out = {}
    for side in SIDES:
        gold = int(triple[0] if side == HEAD else triple[2])
        scores = score_all(disc, triple, side)
        out[side] = _ranks_from_scores(scores, gold, dataset.known_entities(triple, side))
    return out


def rank_entity(disc: DiscriminatorModel, triple, side: str, dataset: KgDataset,
                setting: str = "filtered") -> int:
    """1 + number of admissible candidates scoring strictly below the gold triple."""
    if setting not in SETTINGS:
        raise ValueError(f"setting must be one of {SETTINGS}, got {setting!r}")
    if side not in SIDES:
        raise ValueError(f"side must be {HEAD!r} or {TAIL!r}, got {side!r}")
    gold = int(triple[0] if side == HEAD else triple[2])
    raw, filtered = _ranks_from_scores(score_all(disc, triple, side), gold,
                                       dataset.known_entities(triple, side))
    return raw if setting == "raw" else filtered


@dataclass
class LinkPredictionResult:
    setting: str
    mean_rank: float
    hits_at_10: float
    head_mean_rank: float
    tail_mean_rank: float
    head_hits_at_10: float
    tail_hits_at_10: float
    ranks: np.ndarray = field(repr=False)  # (n, 2): head-side, tail-side ranks

    @classmethod
    def from_ranks(cls, setting: str, ranks: np.ndarray) -> "LinkPredictionResult":
        ranks = np.asarray(ranks, dtype=np.int64).reshape(-1, 2)
        return cls(
            setting=setting,
            mean_rank=float(ranks.mean()),
            hits_at_10=float((ranks <= 10).mean()),
            head_mean_rank=float(ranks[:, 0].mean()),
            tail_mean_rank=float(ranks[:, 1].mean()),
            head_hits_at_10=float((ranks[:, 0] <= 10).mean()),
            tail_hits_at_10=float((ranks[:, 1] <= 10).mean()),
            ranks=ranks,
        )


def evaluate_link_prediction(disc: DiscriminatorModel, dataset: KgDataset, split: str = "test",
                             n_jobs: int = 1) -> dict[str, LinkPredictionResult]:
    """Raw and filtered results for every positive triple of ``split``.

    With ``n_jobs > 1`` triples are scored on a thread pool; results are
    gathered in input order so the output does not depend on scheduling.
    """
    triples = dataset.positives(split)
    if len(triples) == 0:
        raise EvaluationError(f"split {split!r} has no positive triples")

    def one(triple):
        r = triple_ranks(disc, triple, dataset)
        return r[HEAD] + r[TAIL]

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            rows = list(pool.map(one, triples))
    else:
        rows = [one(t) for t in triples]
    arr = np.array(rows, dtype=np.int64)  # raw_h, filt_h, raw_t, filt_t
    return {
        "raw": LinkPredictionResult.from_ranks("raw", arr[:, [0, 2]]),
        "filtered": LinkPredictionResult.from_ranks("filtered", arr[:, [1, 3]]),
    }


def link_prediction(disc: DiscriminatorModel, dataset: KgDataset, setting: str = "filtered",
                    split: str = "test", n_jobs: int = 1) -> LinkPredictionResult:
    if setting not in SETTINGS:
        raise ValueError(f"setting must be one of {SETTINGS}, got {setting!r}")
    return evaluate_link_prediction(disc, dataset, split, n_jobs)[setting]


def write_rank_dump(path, dataset: KgDataset, split: str,
                    results: dict[str, LinkPredictionResult]) -> None:
    triples = dataset.positives(split)
    raw, filt = results["raw"].ranks, results["filtered"].ranks
    ents, rels = dataset.entities, dataset.relations
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["head", "relation", "tail", "side", "raw_rank", "filtered_rank"])
        for i, (h, r, t) in enumerate(triples.tolist()):
            for j, side in enumerate(SIDES):
                w.writerow([ents.name(h), rels.name(r), ents.name(t), side,
                            int(raw[i, j]), int(filt[i, j])])


def read_rank_dump(path) -> dict[str, LinkPredictionResult]:
    """Re-aggregate a rank dump written by :func:`write_rank_dump`."""
    raw, filt = {HEAD: [], TAIL: []}, {HEAD: [], TAIL: []}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            raw[row["side"]].append(int(row["raw_rank"]))
            filt[row["side"]].append(int(row["filtered_rank"]))
    return {
        "raw": LinkPredictionResult.from_ranks("raw", np.column_stack([raw[HEAD], raw[TAIL]])),
        "filtered": LinkPredictionResult.from_ranks(
            "filtered", np.column_stack([filt[HEAD], filt[TAIL]])),
    }


# --------------------------------------------------------------------------- classification


@dataclass
class ClassificationThresholds:
    per_relation: dict[int, float]
    global_delta: float

    def delta(self, relation: int) -> float:
        return self.per_relation.get(int(relation), self.global_delta)

    def deltas(self, relations: np.ndarray) -> np.ndarray:
        return np.array([self.delta(r) for r in np.asarray(relations).tolist()], dtype=np.float64)


@dataclass
class ClassificationResult:
    accuracy: float
    per_relation: dict[int, float]
    counts: dict[int, int]


def best_threshold(scores, labels) -> tuple[float, float]:
    """Threshold maximizing accuracy of ``score < delta  <=>  positive``.

    Candidates are -inf, midpoints between consecutive distinct scores and
    +inf; ties go to the smallest threshold. Returns ``(delta, accuracy)``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(labels) > 0
    if scores.size == 0:
        raise EvaluationError("cannot fit a threshold on zero triples")
    uniq = np.unique(scores)
    candidates = np.concatenate([[-np.inf], (uniq[:-1] + uniq[1:]) / 2.0, [np.inf]])
    # correct(delta) = #pos with score < delta + #neg with score >= delta
    pos_sorted = np.sort(scores[positive])
    neg_sorted = np.sort(scores[~positive])
    pos_below = np.searchsorted(pos_sorted, candidates, side="left")
    neg_below = np.searchsorted(neg_sorted, candidates, side="left")
    correct = pos_below + (len(neg_sorted) - neg_below)
    best = int(np.argmax(correct))  # first maximum == smallest threshold
    return float(candidates[best]), float(correct[best] / scores.size)


def fit_thresholds(disc: DiscriminatorModel, triples, labels) -> ClassificationThresholds:
    """Per-relation thresholds maximizing validation accuracy, plus a pooled fallback."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    labels = np.asarray(labels)
    if len(triples) == 0:
        raise EvaluationError("validation split is empty")
    if labels.shape != (len(triples),):
        raise EvaluationError("need exactly one label per validation triple")
    rel_has_both = [
        len(np.unique(labels[triples[:, 1] == r] > 0)) == 2 for r in np.unique(triples[:, 1])
    ]
    if not any(rel_has_both):
        raise EvaluationError("validation needs positive and negative triples for some relation")
    scores = score_batch(disc, *triples.T)
    global_delta, _ = best_threshold(scores, labels)
    per_relation = {}
    for r in np.unique(triples[:, 1]).tolist():
        mask = triples[:, 1] == r
        per_relation[int(r)], _ = best_threshold(scores[mask], labels[mask])
    return ClassificationThresholds(per_relation, global_delta)


def classify_scores(scores, relations, thresholds: ClassificationThresholds) -> np.ndarray:
    """+1 where score < delta_r (strict), else -1."""
    return np.where(np.asarray(scores) < thresholds.deltas(relations), 1, -1)


def classify(disc: DiscriminatorModel, thresholds: ClassificationThresholds, triples,
             labels) -> ClassificationResult:
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    labels = np.where(np.asarray(labels) > 0, 1, -1)
    if len(triples) == 0:
        raise EvaluationError("cannot classify an empty split")
    pred = classify_scores(score_batch(disc, *triples.T), triples[:, 1], thresholds)
    hit = pred == labels
    per_relation, counts = {}, {}
    for r in np.unique(triples[:, 1]).tolist():
        mask = triples[:, 1] == r
        per_relation[int(r)] = float(hit[mask].mean())
        counts[int(r)] = int(mask.sum())
    return ClassificationResult(float(hit.mean()), per_relation, counts)
