"""Versioned binary model checkpoints.

Layout (all integers little-endian u32):

    b"GLYPHLAB"            8-byte file tag
    kind                   4 bytes: b"AE\\0\\0", b"CNN\\0" or b"BASE"
    version
    n_sizes, sizes[n]      layer sizes (AE hidden sizes, CNN FC widths, [] for baselines)
    meta_len, meta         UTF-8 JSON (classes, task, hyperparameters, history, ...)
    n_blocks
    per block: ndim, dims[ndim], float64 little-endian values

Saving then loading reproduces every parameter bit for bit.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"GLYPHLAB"
VERSION = 1
TAGS = {"ae": b"AE\0\0", "cnn": b"CNN\0", "baseline": b"BASE"}
_KIND_OF = {v: k for k, v in TAGS.items()}


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    kind: str
    sizes: list
    meta: dict
    blocks: list = field(default_factory=list)


def dumps(ckpt: Checkpoint) -> bytes:
    if ckpt.kind not in TAGS:
        raise CheckpointError(f"unknown checkpoint kind {ckpt.kind!r}")
    meta = json.dumps(ckpt.meta, sort_keys=True, ensure_ascii=False).encode("utf-8")
    parts = [MAGIC, TAGS[ckpt.kind], struct.pack("<II", VERSION, len(ckpt.sizes))]
    parts.append(struct.pack(f"<{len(ckpt.sizes)}I", *ckpt.sizes))
    parts += [struct.pack("<I", len(meta)), meta, struct.pack("<I", len(ckpt.blocks))]
    for block in ckpt.blocks:
        a = np.asarray(block, dtype="<f8")
        parts.append(struct.pack(f"<I{a.ndim}I", a.ndim, *a.shape))
        parts.append(a.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("truncated checkpoint")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, count: int = 1):
        vals = struct.unpack(f"<{count}I", self.take(4 * count))
        return vals[0] if count == 1 else list(vals)


def loads(data: bytes) -> Checkpoint:
    r = _Reader(data)
    if r.take(8) != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    tag = r.take(4)
    if tag not in _KIND_OF:
        raise CheckpointError(f"unknown checkpoint tag {tag!r}")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    n = r.u32()
    sizes = r.u32(n) if n > 1 else ([r.u32()] if n == 1 else [])
    meta = json.loads(r.take(r.u32()).decode("utf-8"))
    blocks = []
    for _ in range(r.u32()):
        ndim = r.u32()
        shape = tuple(r.u32(ndim)) if ndim > 1 else ((r.u32(),) if ndim == 1 else ())
        count = int(np.prod(shape)) if shape else 1
        blocks.append(np.frombuffer(r.take(8 * count), dtype="<f8").reshape(shape).astype(np.float64))
    if r.pos != len(data):
        raise CheckpointError("trailing bytes after checkpoint")
    return Checkpoint(_KIND_OF[tag], sizes, meta, blocks)


def save(path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(dumps(ckpt))


def load(path) -> Checkpoint:
    return loads(Path(path).read_bytes())
