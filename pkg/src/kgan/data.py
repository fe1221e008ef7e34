"""Triple files, vocabularies, the filtered-evaluation index and bern statistics."""

from __future__ import annotations

import os
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

HEAD = "head"
TAIL = "tail"
SIDES = (HEAD, TAIL)

_LABELS = {"1": 1, "+1": 1, "-1": -1, "−1": -1}


class DataFormatError(ValueError):
    """Raised for malformed triple files or inconsistent vocabularies."""


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


class Vocabulary:
    """Dense, first-appearance-ordered name <-> id map."""

    def __init__(self, names: Iterable[str] = ()):
        self._names: list[str] = []
        self._index: dict[str, int] = {}
        for name in names:
            self.add(name)

    def add(self, name: str) -> int:
        idx = self._index.get(name)
        if idx is None:
            idx = len(self._names)
            self._index[name] = idx
            self._names.append(name)
        return idx

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def __getitem__(self, name: str) -> int:
        return self._index[name]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self._names == other._names

    def get(self, name: str, default=None):
        return self._index.get(name, default)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self._names)

    def name(self, idx: int) -> str:
        return self._names[idx]

    def __repr__(self) -> str:
        return f"Vocabulary(n={len(self)})"


@dataclass(frozen=True)
class BernStats:
    tph: np.ndarray  # mean tails per head, per relation (0 where unseen in train)
    hpt: np.ndarray  # mean heads per tail


def compute_bern_stats(train: np.ndarray, n_relations: int) -> BernStats:
    tails_of: dict[tuple[int, int], set[int]] = defaultdict(set)
    heads_of: dict[tuple[int, int], set[int]] = defaultdict(set)
    for h, r, t in train.tolist():
        tails_of[(r, h)].add(t)
        heads_of[(r, t)].add(h)
    tph_sum = np.zeros(n_relations)
    tph_cnt = np.zeros(n_relations)
    for (r, _), tails in tails_of.items():
        tph_sum[r] += len(tails)
        tph_cnt[r] += 1
    hpt_sum = np.zeros(n_relations)
    hpt_cnt = np.zeros(n_relations)
    for (r, _), heads in heads_of.items():
        hpt_sum[r] += len(heads)
        hpt_cnt[r] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        tph = np.where(tph_cnt > 0, tph_sum / np.maximum(tph_cnt, 1), 0.0)
        hpt = np.where(hpt_cnt > 0, hpt_sum / np.maximum(hpt_cnt, 1), 0.0)
    return BernStats(tph=tph, hpt=hpt)


def _as_triple_array(triples) -> np.ndarray:
    arr = np.asarray(triples, dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, 3), dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise DataFormatError(f"triples must have shape (n, 3), got {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class KgDataset:
    """Id-level splits plus derived indexes. Treat as read-only after construction.

    ``valid`` and ``test`` hold every listed triple; when the files were labeled,
    ``valid_labels``/``test_labels`` carry +1/-1 per row and only positive rows
    are used for link prediction and filtering.
    """

    entities: Vocabulary
    relations: Vocabulary
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    valid_labels: np.ndarray | None = None
    test_labels: np.ndarray | None = None
    filter_index: frozenset = field(init=False)
    bern: BernStats = field(init=False)
    _tails_known: dict = field(init=False, repr=False)
    _heads_known: dict = field(init=False, repr=False)

    def __post_init__(self):
        for name in ("train", "valid", "test"):
            object.__setattr__(self, name, _as_triple_array(getattr(self, name)))
        if len(self.train) == 0:
            raise DataFormatError("empty training set")
        n_e, n_r = len(self.entities), len(self.relations)
        for name in ("train", "valid", "test"):
            arr = getattr(self, name)
            if len(arr) and (
                arr.min() < 0 or arr[:, [0, 2]].max() >= n_e or arr[:, 1].max() >= n_r
            ):
                raise DataFormatError(f"{name} split has ids outside the vocabulary")

        known = set(map(tuple, self.train.tolist()))
        known.update(map(tuple, self.positives("valid").tolist()))
        known.update(map(tuple, self.positives("test").tolist()))
        tails_known: dict[tuple[int, int], set[int]] = defaultdict(set)
        heads_known: dict[tuple[int, int], set[int]] = defaultdict(set)
        for h, r, t in known:
            tails_known[(h, r)].add(t)
            heads_known[(r, t)].add(h)
        object.__setattr__(self, "filter_index", frozenset(known))
        object.__setattr__(self, "_tails_known", dict(tails_known))
        object.__setattr__(self, "_heads_known", dict(heads_known))
        object.__setattr__(self, "bern", compute_bern_stats(self.train, n_r))

    @classmethod
    def from_triples(cls, train, valid=(), test=(), n_entities=None, n_relations=None,
                     valid_labels=None, test_labels=None) -> "KgDataset":
        """Build a dataset from id triples, naming entities/relations by their ids."""
        arrays = [_as_triple_array(x) for x in (train, valid, test)]
        stacked = np.concatenate(arrays)
        if n_entities is None:
            n_entities = int(stacked[:, [0, 2]].max()) + 1 if len(stacked) else 0
        if n_relations is None:
            n_relations = int(stacked[:, 1].max()) + 1 if len(stacked) else 0
        ents = Vocabulary(str(i) for i in range(n_entities))
        rels = Vocabulary(str(i) for i in range(n_relations))
        return cls(ents, rels, *arrays,
                   valid_labels=None if valid_labels is None else np.asarray(valid_labels),
                   test_labels=None if test_labels is None else np.asarray(test_labels))

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def split(self, name: str) -> np.ndarray:
        if name not in ("train", "valid", "test"):
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)

    def labels(self, name: str) -> np.ndarray | None:
        if name == "train":
            return None
        return getattr(self, f"{name}_labels")

    def positives(self, name: str) -> np.ndarray:
        arr = self.split(name)
        labels = self.labels(name)
        if labels is None:
            return arr
        return arr[labels > 0]

    def known_entities(self, triple: Sequence[int], side: str) -> set[int]:
        """Entities that, substituted on ``side``, give a triple in the filter index."""
        h, r, t = (int(x) for x in triple)
        if side == HEAD:
            return self._heads_known.get((r, t), set())
        if side == TAIL:
            return self._tails_known.get((h, r), set())
        raise ValueError(f"side must be {HEAD!r} or {TAIL!r}, got {side!r}")


def bern_replace_head_probability(dataset: KgDataset, relation: int) -> float:
    """tph / (tph + hpt); 0.5 when the relation never occurs in train."""
    tph = dataset.bern.tph[relation]
    hpt = dataset.bern.hpt[relation]
    if tph + hpt <= 0:
        return 0.5
    return float(tph / (tph + hpt))


def corrupted_candidates(dataset: KgDataset, triple: Sequence[int], side: str) -> list[int]:
    """Entity ids whose substitution on ``side`` yields a triple outside the filter index.

    The gold entity is never included.
    """
    gold = int(triple[0] if side == HEAD else triple[2])
    blocked = dataset.known_entities(triple, side) | {gold}
    return [e for e in range(dataset.n_entities) if e not in blocked]


# --------------------------------------------------------------------------- I/O


def read_triple_file(path: str | os.PathLike, labeled: bool = False):
    """Parse a TSV triple file into a list of name triples and a list of labels.

    Each line is ``head<TAB>relation<TAB>tail`` with an optional fourth label column
    (``1``/``-1``) when ``labeled`` is set. Blank lines are ignored.
    """
    rows: list[tuple[str, str, str]] = []
    labels: list[int] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) == 4 and labeled:
                label = _LABELS.get(cols[3].strip())
                if label is None:
                    raise DataFormatError(f"{path}:{lineno}: bad label {cols[3]!r}, expected 1 or -1")
                labels.append(label)
            elif len(cols) == 3:
                labels.append(1)
            else:
                expected = "3 or 4" if labeled else "3"
                raise DataFormatError(
                    f"{path}:{lineno}: expected {expected} tab-separated columns, got {len(cols)}"
                )
            rows.append((cols[0], cols[1], cols[2]))
    return rows, labels


def write_triple_file(path: str | os.PathLike, dataset: KgDataset, split: str,
                      with_labels: bool = False) -> None:
    arr = dataset.split(split)
    labels = dataset.labels(split)
    ents, rels = dataset.entities, dataset.relations
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, (h, r, t) in enumerate(arr.tolist()):
            line = f"{ents.name(h)}\t{rels.name(r)}\t{ents.name(t)}"
            if with_labels and labels is not None:
                line += f"\t{int(labels[i])}"
            fh.write(line + "\n")


def load_dataset(train_path, valid_path=None, test_path=None, labeled: bool = False,
                 unknown: str = "extend", entities: Sequence[str] | None = None,
                 relations: Sequence[str] | None = None) -> KgDataset:
    """Load train/valid/test TSV files into a :class:`KgDataset`.

    ``unknown`` controls names in valid/test that never appear in train:
    ``"extend"`` adds them to the vocabulary, ``"skip"`` drops the line and
    ``"error"`` raises. Passing ``entities``/``relations`` freezes the
    vocabulary to those names (e.g. a checkpoint's), in which case ``unknown``
    applies to every split including train.
    """
    if unknown not in ("extend", "skip", "error"):
        raise ValueError(f"unknown must be 'extend', 'skip' or 'error', got {unknown!r}")
    frozen = entities is not None or relations is not None
    ents, rels = Vocabulary(entities or ()), Vocabulary(relations or ())

    def encode(path, labeled_file, check):
        if path is None:
            return np.zeros((0, 3), dtype=np.int64), (np.zeros(0, dtype=np.int64) if labeled_file else None)
        rows, labels = read_triple_file(path, labeled=labeled_file)
        out, kept = [], []
        for (h, r, t), y in zip(rows, labels):
            if check:
                missing = [n for n, v in ((h, ents), (r, rels), (t, ents)) if n not in v]
                if missing and unknown == "error":
                    raise DataFormatError(f"{path}: unknown symbol {missing[0]!r}")
                if missing and unknown == "skip":
                    continue
            out.append((ents.add(h), rels.add(r), ents.add(t)))
            kept.append(y)
        arr = np.array(out, dtype=np.int64).reshape(-1, 3)
        return arr, (np.array(kept, dtype=np.int64) if labeled_file else None)

    train, _ = encode(train_path, False, frozen)
    if len(train) == 0:
        raise DataFormatError("empty training set")
    valid, valid_labels = encode(valid_path, labeled, True)
    test, test_labels = encode(test_path, labeled, True)
    return KgDataset(ents, rels, train, valid, test,
                     valid_labels=valid_labels, test_labels=test_labels)


def dataset_dir_paths(directory) -> list[str]:
    """``train.txt``, ``valid.txt`` (or ``dev.txt``) and ``test.txt`` inside ``directory``."""
    valid = os.path.join(directory, "valid.txt")
    dev = os.path.join(directory, "dev.txt")
    if not os.path.exists(valid) and os.path.exists(dev):
        valid = dev
    return [os.path.join(directory, "train.txt"), valid, os.path.join(directory, "test.txt")]


def load_dataset_dir(directory, labeled: bool = False, unknown: str = "extend") -> KgDataset:
    """Load the three splits of a dataset directory (see :func:`dataset_dir_paths`)."""
    paths = dataset_dir_paths(directory)
    for p in paths:
        if not os.path.exists(p):
            raise FileNotFoundError(p)
    return load_dataset(*paths, labeled=labeled, unknown=unknown)
