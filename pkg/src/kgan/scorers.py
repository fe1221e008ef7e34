"""Translation-family score functions, their analytic gradients and norm constraints.

Every scorer reduces to a residual vector ``v`` in relation space and a
dissimilarity ``|v|`` (L1 or L2). Lower scores mean more plausible triples.

======================  ==============================================
kind                    residual
======================  ==============================================
``unstructured``        h - t
``se``                  M_rh h - M_rt t
``transe``              h + r - t
``transh``              h_perp + r - t_perp,  x_perp = x - (w.x) w
``transr``              M_r h + r - M_r t
``transd``              (r_p h_p^T + I) h + r - (r_p t_p^T + I) t
======================  ==============================================
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .tensor import DTYPE, ContractError

KINDS = ("unstructured", "se", "transe", "transh", "transr", "transd")
NORMS = ("l1", "l2")

# kind-specific parameter slots: name -> (table it is indexed by, whether rows are matrices)
EXTRA_SLOTS = {
    "unstructured": {},
    "se": {"head_proj": ("relation", True), "tail_proj": ("relation", True)},
    "transe": {},
    "transh": {"normal": ("relation", False)},
    "transr": {"proj": ("relation", True)},
    "transd": {"ent_proj": ("entity", False), "rel_proj": ("relation", False)},
}


@dataclass
class DiscriminatorModel:
    kind: str
    norm: str
    params: dict[str, np.ndarray]

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scorer kind {self.kind!r}; expected one of {KINDS}")
        if self.norm not in NORMS:
            raise ValueError(f"norm must be 'l1' or 'l2', got {self.norm!r}")

    @property
    def n_entities(self) -> int:
        return self.params["entity"].shape[0]

    @property
    def n_relations(self) -> int:
        return self.params["relation"].shape[0]

    @property
    def dim(self) -> int:
        return self.params["entity"].shape[1]

    def copy(self) -> "DiscriminatorModel":
        return DiscriminatorModel(self.kind, self.norm,
                                  {k: v.copy() for k, v in self.params.items()})

    def astype(self, dtype) -> "DiscriminatorModel":
        return DiscriminatorModel(self.kind, self.norm,
                                  {k: v.astype(dtype) for k, v in self.params.items()})

    def digest(self) -> str:
        return params_digest(self.params)


def params_digest(params: dict[str, np.ndarray]) -> str:
    h = hashlib.sha256()
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name])
        h.update(name.encode())
        h.update(str(arr.dtype).encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


@dataclass
class ScoreGradient:
    """Sparse gradient of one score: ``(slot, row, block)`` entries.

    Rows may repeat (e.g. when head == tail); blocks for a repeated row add up.
    """

    entries: list[tuple[str, int, np.ndarray]] = field(default_factory=list)

    def dense(self, model: DiscriminatorModel) -> dict[str, np.ndarray]:
        out = {k: np.zeros(v.shape, dtype=np.float64) for k, v in model.params.items()}
        for slot, row, block in self.entries:
            out[slot][row] += block
        return out


def init_model(kind: str, n_entities: int, n_relations: int, dim: int, norm: str,
               rng: np.random.Generator, dtype=DTYPE) -> DiscriminatorModel:
    """Random embeddings in [-6/sqrt(d), 6/sqrt(d)], projected onto the unit ball.

    TransR and SE matrices start at identity and TransD relation projection
    vectors at zero, so those kinds start out scoring like TransE/Unstructured.
    """
    bound = 6.0 / np.sqrt(dim)

    def uniform(n):
        return rng.uniform(-bound, bound, size=(n, dim)).astype(dtype)

    params = {"entity": uniform(n_entities), "relation": uniform(n_relations)}
    eye = np.broadcast_to(np.eye(dim, dtype=dtype), (n_relations, dim, dim)).copy()
    if kind == "se":
        params["head_proj"] = eye
        params["tail_proj"] = eye.copy()
    elif kind == "transh":
        params["normal"] = uniform(n_relations)
    elif kind == "transr":
        params["proj"] = eye
    elif kind == "transd":
        params["ent_proj"] = uniform(n_entities)
        params["rel_proj"] = np.zeros((n_relations, dim), dtype=dtype)
    model = DiscriminatorModel(kind, norm, params)
    project_constraints(model)
    return model


# --------------------------------------------------------------------------- helpers


def _check_ids(model: DiscriminatorModel, h, r, t):
    h = np.atleast_1d(np.asarray(h, dtype=np.int64))
    r = np.atleast_1d(np.asarray(r, dtype=np.int64))
    t = np.atleast_1d(np.asarray(t, dtype=np.int64))
    n_e, n_r = model.n_entities, model.n_relations
    for name, ids, bound in (("head", h, n_e), ("relation", r, n_r), ("tail", t, n_e)):
        if ids.size and (ids.min() < 0 or ids.max() >= bound):
            raise ContractError(f"{name} id out of range [0, {bound})")
    h, r, t = np.broadcast_arrays(h, r, t)
    return h, r, t


def _groups(ids: np.ndarray):
    """Yield (value, positions) for each distinct id, in ascending id order."""
    order = np.argsort(ids, kind="stable")
    sorted_ids = ids[order]
    uniq, starts = np.unique(sorted_ids, return_index=True)
    ends = np.append(starts[1:], len(ids))
    for u, s, e in zip(uniq, starts, ends):
        yield int(u), order[s:e]


def _rel_matvec(mats: np.ndarray, r: np.ndarray, x: np.ndarray, transpose: bool = False):
    """Row-wise ``mats[r[b]] @ x[b]`` (or the transposed product)."""
    out = np.empty_like(x)
    for rel, idx in _groups(r):
        m = mats[rel].astype(np.float64)
        out[idx] = x[idx] @ (m if transpose else m.T)
    return out


def _gather(model, slot, ids):
    return model.params[slot][ids].astype(np.float64)


def _dissimilarity(v: np.ndarray, norm: str):
    """Scores and their gradients w.r.t. the residual, row-wise."""
    if norm == "l1":
        return np.abs(v).sum(axis=1), np.sign(v)
    s = np.sqrt((v * v).sum(axis=1))
    with np.errstate(invalid="ignore", divide="ignore"):
        g = np.where(s[:, None] > 0, v / s[:, None], 0.0)
    return s, g


def _residual(model: DiscriminatorModel, h, r, t):
    kind = model.kind
    eh, et = _gather(model, "entity", h), _gather(model, "entity", t)
    cache = {"eh": eh, "et": et}
    if kind == "unstructured":
        v = eh - et
    elif kind == "transe":
        v = eh + _gather(model, "relation", r) - et
    elif kind == "transh":
        w = _gather(model, "normal", r)
        u = eh - et
        wu = (w * u).sum(axis=1)
        v = u - wu[:, None] * w + _gather(model, "relation", r)
        cache.update(w=w, u=u, wu=wu)
    elif kind == "transr":
        u = eh - et
        v = _rel_matvec(model.params["proj"], r, u) + _gather(model, "relation", r)
        cache.update(u=u)
    elif kind == "transd":
        hp, tp = _gather(model, "ent_proj", h), _gather(model, "ent_proj", t)
        rp = _gather(model, "rel_proj", r)
        a = (hp * eh).sum(axis=1)
        b = (tp * et).sum(axis=1)
        v = eh + _gather(model, "relation", r) - et + (a - b)[:, None] * rp
        cache.update(hp=hp, tp=tp, rp=rp, a=a, b=b)
    elif kind == "se":
        v = (_rel_matvec(model.params["head_proj"], r, eh)
             - _rel_matvec(model.params["tail_proj"], r, et))
    else:  # pragma: no cover
        raise ValueError(kind)
    return v, cache


# --------------------------------------------------------------------------- scoring


def score_batch(model: DiscriminatorModel, h, r, t) -> np.ndarray:
    """Scores f_r(h, t) for aligned id arrays, as float64."""
    h, r, t = _check_ids(model, h, r, t)
    v, _ = _residual(model, h, r, t)
    return _dissimilarity(v, model.norm)[0]


def score(model: DiscriminatorModel, h: int, r: int, t: int) -> float:
    return float(score_batch(model, h, r, t)[0])


def score_all(model: DiscriminatorModel, triple, side: str) -> np.ndarray:
    """Scores of every entity substituted on ``side`` ("head" or "tail") of ``triple``."""
    h, r, t = (int(x) for x in triple)
    everyone = np.arange(model.n_entities)
    if side == "head":
        return score_batch(model, everyone, r, t)
    if side == "tail":
        return score_batch(model, h, r, everyone)
    raise ValueError(f"side must be 'head' or 'tail', got {side!r}")


def _grad_pieces(model: DiscriminatorModel, h, r, t):
    """Scores plus per-triple gradient pieces.

    A piece is ``(slot, rows, block)`` with ``block`` of shape (B, d), or
    ``(slot, rows, (left, right))`` meaning the per-triple matrix ``outer(left, right)``.
    """
    v, c = _residual(model, h, r, t)
    s, g = _dissimilarity(v, model.norm)
    kind = model.kind
    eh, et = c["eh"], c["et"]
    pieces = []
    if kind == "unstructured":
        pieces += [("entity", h, g), ("entity", t, -g)]
    elif kind == "transe":
        pieces += [("entity", h, g), ("relation", r, g), ("entity", t, -g)]
    elif kind == "transh":
        w, u, wu = c["w"], c["u"], c["wu"]
        wg = (w * g).sum(axis=1)
        du = g - wg[:, None] * w
        dw = -(wg[:, None] * u + wu[:, None] * g)
        pieces += [("entity", h, du), ("entity", t, -du), ("relation", r, g), ("normal", r, dw)]
    elif kind == "transr":
        du = _rel_matvec(model.params["proj"], r, g, transpose=True)
        pieces += [("entity", h, du), ("entity", t, -du), ("relation", r, g),
                   ("proj", r, (g, c["u"]))]
    elif kind == "transd":
        hp, tp, rp, a, b = c["hp"], c["tp"], c["rp"], c["a"], c["b"]
        rg = (rp * g).sum(axis=1)
        pieces += [
            ("entity", h, g + rg[:, None] * hp),
            ("entity", t, -g - rg[:, None] * tp),
            ("relation", r, g),
            ("ent_proj", h, rg[:, None] * eh),
            ("ent_proj", t, -rg[:, None] * et),
            ("rel_proj", r, (a - b)[:, None] * g),
        ]
    elif kind == "se":
        pieces += [
            ("entity", h, _rel_matvec(model.params["head_proj"], r, g, transpose=True)),
            ("entity", t, -_rel_matvec(model.params["tail_proj"], r, g, transpose=True)),
            ("head_proj", r, (g, eh)),
            ("tail_proj", r, (-g, et)),
        ]
    return s, pieces


def score_gradient(model: DiscriminatorModel, h: int, r: int, t: int) -> ScoreGradient:
    """Analytic gradient of f_r(h, t). L1 uses sign(x) with sign(0) = 0."""
    h_, r_, t_ = _check_ids(model, h, r, t)
    _, pieces = _grad_pieces(model, h_, r_, t_)
    grad = ScoreGradient()
    for slot, rows, block in pieces:
        if isinstance(block, tuple):
            left, right = block
            grad.entries.append((slot, int(rows[0]), np.outer(left[0], right[0])))
        else:
            grad.entries.append((slot, int(rows[0]), block[0].copy()))
    return grad


def accumulate_gradient(model: DiscriminatorModel, h, r, t, coef,
                        out: dict[str, np.ndarray] | None = None) -> dict[str, np.ndarray]:
    """Dense ``sum_b coef[b] * grad f(h_b, r_b, t_b)`` for every parameter slot."""
    h, r, t = _check_ids(model, h, r, t)
    coef = np.broadcast_to(np.asarray(coef, dtype=np.float64), h.shape)
    if out is None:
        out = {k: np.zeros(v.shape, dtype=np.float64) for k, v in model.params.items()}
    keep = coef != 0
    if not keep.any():
        return out
    h, r, t, coef = h[keep], r[keep], t[keep], coef[keep]
    _, pieces = _grad_pieces(model, h, r, t)
    for slot, rows, block in pieces:
        if isinstance(block, tuple):
            left, right = block
            left = left * coef[:, None]
            for rel, idx in _groups(rows):
                out[slot][rel] += left[idx].T @ right[idx]
        else:
            np.add.at(out[slot], rows, block * coef[:, None])
    return out


# --------------------------------------------------------------------------- constraints


# float32 rounding can leave a rescaled row a hair above 1; this slack keeps projection idempotent
_NORM_SLACK = 1e-6


def _clip_rows(arr: np.ndarray) -> None:
    norms = np.sqrt((arr.astype(np.float64) ** 2).sum(axis=1))
    over = norms > 1.0 + _NORM_SLACK
    if over.any():
        arr[over] = (arr[over] / norms[over, None]).astype(arr.dtype)


def project_constraints(model: DiscriminatorModel) -> DiscriminatorModel:
    """Rescale entity/relation rows with L2 norm > 1 onto the unit sphere, in place.

    TransH hyperplane normals are renormalized to unit length.
    """
    _clip_rows(model.params["entity"])
    _clip_rows(model.params["relation"])
    if model.kind == "transh":
        w = model.params["normal"]
        norms = np.sqrt((w.astype(np.float64) ** 2).sum(axis=1))
        nz = (norms > 0) & (np.abs(norms - 1.0) > _NORM_SLACK)
        w[nz] = (w[nz] / norms[nz, None]).astype(w.dtype)
    return model
