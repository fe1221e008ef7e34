"""Small synthetic knowledge graphs for tests, demos and sanity checks."""

from __future__ import annotations

import numpy as np

from .data import KgDataset
from .tensor import make_rng


def random_kg(n_entities: int = 30, n_relations: int = 4, n_triples: int = 200,
              valid_frac: float = 0.1, test_frac: float = 0.1, seed: int = 0) -> KgDataset:
    """Uniformly random distinct triples split into train/valid/test."""
    rng = make_rng(seed)
    cap = n_entities * n_entities * n_relations
    n_triples = min(n_triples, cap)
    flat = rng.choice(cap, size=n_triples, replace=False)
    h, rest = np.divmod(flat, n_entities * n_relations)
    r, t = np.divmod(rest, n_entities)
    triples = np.column_stack([h, r, t])
    n_valid = int(round(valid_frac * n_triples))
    n_test = int(round(test_frac * n_triples))
    n_train = n_triples - n_valid - n_test
    return KgDataset.from_triples(triples[:n_train], triples[n_train:n_train + n_valid],
                                  triples[n_train + n_valid:], n_entities=n_entities,
                                  n_relations=n_relations)


def typed_kg(n_entities: int = 200, n_types: int = 5, n_relations: int = 10,
             triples_per_relation: int = 150, n_test: int = 100, seed: int = 0) -> KgDataset:
    """Entities split into equal type clusters; each relation links one type pair.

    A corruption drawn uniformly from all entities usually has the wrong type,
    while a same-type replacement is much harder to tell apart from the truth.
    """
    rng = make_rng(seed)
    per_type = n_entities // n_types
    members = [np.arange(k * per_type, (k + 1) * per_type) for k in range(n_types)]
    rows = []
    for r in range(n_relations):
        a, b = rng.choice(n_types, size=2, replace=True)
        pairs = set()
        while len(pairs) < triples_per_relation:
            pairs.add((int(rng.choice(members[a])), int(rng.choice(members[b]))))
        rows.extend((h, r, t) for h, t in sorted(pairs))
    triples = np.array(rows, dtype=np.int64)
    triples = triples[rng.permutation(len(triples))]
    return KgDataset.from_triples(triples[n_test:], (), triples[:n_test],
                                  n_entities=per_type * n_types, n_relations=n_relations)


def entity_types(n_entities: int = 200, n_types: int = 5) -> np.ndarray:
    return np.arange(n_entities) // (n_entities // n_types)
