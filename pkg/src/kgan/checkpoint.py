"""Binary checkpoint format.

Layout (little-endian throughout)::

    magic        8 bytes  b"KGANCKPT"
    version      u32
    kind, norm   str                      (str = u32 byte length + UTF-8)
    dims         5 x u32                  |E|, |R|, d, d_g, h_g  (generator dims 0 if absent)
    entities     u32 count + count x str
    relations    u32 count + count x str
    disc         tensor table
    has_gen      u8, then a tensor table when 1
    config       str                      (JSON, sorted keys)
    seed         u64

A tensor table is ``u32 count`` followed by ``name: str, ndim: u32,
shape: ndim x u32, data: f32[prod(shape)]`` per tensor, sorted by name.
"""

from __future__ import annotations

import io
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .generator import GeneratorModel
from .scorers import EXTRA_SLOTS, KINDS, NORMS, DiscriminatorModel

MAGIC = b"KGANCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    disc: DiscriminatorModel
    entity_names: list[str]
    relation_names: list[str]
    gen: GeneratorModel | None = None
    config: dict = field(default_factory=dict)
    seed: int = 0


def _put_str(buf, s: str) -> None:
    raw = s.encode("utf-8")
    buf.write(struct.pack("<I", len(raw)))
    buf.write(raw)


def _put_tensors(buf, tensors: dict[str, np.ndarray]) -> None:
    buf.write(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        _put_str(buf, name)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())


def dumps(ckpt: Checkpoint) -> bytes:
    disc, gen = ckpt.disc, ckpt.gen
    if len(ckpt.entity_names) != disc.n_entities or len(ckpt.relation_names) != disc.n_relations:
        raise CheckpointError("name tables do not match the model's entity/relation counts")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    _put_str(buf, disc.kind)
    _put_str(buf, disc.norm)
    gen_dims = (gen.dim, gen.hidden) if gen is not None else (0, 0)
    buf.write(struct.pack("<5I", disc.n_entities, disc.n_relations, disc.dim, *gen_dims))
    for names in (ckpt.entity_names, ckpt.relation_names):
        buf.write(struct.pack("<I", len(names)))
        for n in names:
            _put_str(buf, n)
    _put_tensors(buf, disc.params)
    buf.write(struct.pack("<B", 1 if gen is not None else 0))
    if gen is not None:
        _put_tensors(buf, gen.params)
    _put_str(buf, json.dumps(ckpt.config, sort_keys=True))
    buf.write(struct.pack("<Q", int(ckpt.seed) & 0xFFFFFFFFFFFFFFFF))
    return buf.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("truncated checkpoint")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<I")
        return self.take(n).decode("utf-8")

    def tensors(self) -> dict[str, np.ndarray]:
        (count,) = self.unpack("<I")
        out = {}
        for _ in range(count):
            name = self.string()
            (ndim,) = self.unpack("<I")
            shape = self.unpack(f"<{ndim}I")
            size = int(np.prod(shape)) * 4
            out[name] = np.frombuffer(self.take(size), dtype="<f4").reshape(shape).astype(np.float32)
        return out


def loads(data: bytes) -> Checkpoint:
    rd = _Reader(data)
    if rd.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("not a kgan checkpoint (bad magic)")
    (version,) = rd.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    kind, norm = rd.string(), rd.string()
    n_e, n_r, dim, gen_dim, gen_hidden = rd.unpack("<5I")
    ents = [rd.string() for _ in range(rd.unpack("<I")[0])]
    rels = [rd.string() for _ in range(rd.unpack("<I")[0])]
    if kind not in KINDS or norm not in NORMS:
        raise CheckpointError(f"unknown model kind/norm {kind!r}/{norm!r}")
    disc = DiscriminatorModel(kind, norm, rd.tensors())
    expected = {"entity", "relation", *EXTRA_SLOTS[kind]}
    if set(disc.params) != expected:
        raise CheckpointError(f"{kind} checkpoint has tensors {sorted(disc.params)}, "
                              f"expected {sorted(expected)}")
    if (disc.n_entities, disc.n_relations, disc.dim) != (n_e, n_r, dim):
        raise CheckpointError("discriminator tensors disagree with header dims")
    if len(ents) != n_e or len(rels) != n_r:
        raise CheckpointError("name tables disagree with header dims")
    (has_gen,) = rd.unpack("<B")
    gen = GeneratorModel(rd.tensors()) if has_gen else None
    if gen is not None and (gen.dim, gen.hidden) != (gen_dim, gen_hidden):
        raise CheckpointError("generator tensors disagree with header dims")
    config = json.loads(rd.string())
    (seed,) = rd.unpack("<Q")
    if rd.pos != len(data):
        raise CheckpointError("trailing bytes after checkpoint")
    return Checkpoint(disc, ents, rels, gen, config, seed)


def save(path, ckpt: Checkpoint) -> None:
    data = dumps(ckpt)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def load(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return loads(fh.read())
