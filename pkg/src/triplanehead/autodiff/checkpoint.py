"""Binary checkpoint: named float64 tensors.

Layout (all integers little-endian u32)::

    b"TPDR" | version | count | count x (name_len, utf8 name, ndim, dims..., f64 data)
"""

from __future__ import annotations

import struct
from collections import OrderedDict
from pathlib import Path
from typing import Mapping

import numpy as np

from .tensor import Tensor

MAGIC = b"TPDR"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(tensors: Mapping[str, Tensor | np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, t in tensors.items():
        arr = np.asarray(t.data if isinstance(t, Tensor) else t, dtype="<f8")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(arr.tobytes(order="C"))
    return b"".join(parts)


def loads(blob: bytes) -> "OrderedDict[str, np.ndarray]":
    if blob[:4] != MAGIC:
        raise CheckpointError("bad magic; not a TPDR checkpoint")
    pos = 4

    def take(fmt: str):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(blob):
            raise CheckpointError("truncated checkpoint")
        vals = struct.unpack_from(fmt, blob, pos)
        pos += size
        return vals

    version, count = take("<II")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    out: OrderedDict[str, np.ndarray] = OrderedDict()
    for _ in range(count):
        (name_len,) = take("<I")
        name = blob[pos : pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = take("<I")
        shape = take(f"<{ndim}I")
        n = int(np.prod(shape, dtype=np.int64))
        if pos + 8 * n > len(blob):
            raise CheckpointError(f"truncated data for {name}")
        out[name] = np.frombuffer(blob, dtype="<f8", count=n, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * n
    if pos != len(blob):
        raise CheckpointError("trailing bytes after checkpoint")
    return out


def save(path: str | Path, tensors: Mapping[str, Tensor | np.ndarray]) -> None:
    Path(path).write_bytes(dumps(tensors))


def load(path: str | Path) -> "OrderedDict[str, np.ndarray]":
    return loads(Path(path).read_bytes())


def restore(params: Mapping[str, Tensor], arrays: Mapping[str, np.ndarray]) -> None:
    """Copy loaded arrays into existing parameter tensors, checking names and shapes."""
    missing = set(params) - set(arrays)
    if missing:
        raise CheckpointError(f"checkpoint missing tensors: {sorted(missing)}")
    for name, t in params.items():
        arr = arrays[name]
        if arr.shape != t.shape:
            raise CheckpointError(f"{name}: shape {arr.shape} in checkpoint, expected {t.shape}")
        t.data[...] = arr
