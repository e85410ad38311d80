"""RPRM parameter checkpoints.

Binary layout (little-endian)::

    "RPRM" u8 version=1 u32 count
    per parameter: u16 name_len, UTF-8 name, u8 trainable, u8 ndim, ndim * u32 dims,
                   prod(dims) float32 values

A JSON manifest with hyperparameters is written next to it as ``<path>.json``.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from compfer.autodiff.tensor import ParamStore
from compfer.errors import ParseError

MAGIC = b"RPRM"
VERSION = 1


def params_to_bytes(params: ParamStore) -> bytes:
    parts = [MAGIC, struct.pack("<BI", VERSION, len(params))]
    for name, t in params.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<BB", int(bool(t.requires_grad)), t.data.ndim))
        parts.append(struct.pack(f"<{t.data.ndim}I", *t.shape))
        parts.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    return b"".join(parts)


def params_from_bytes(buf: bytes) -> ParamStore:
    view = memoryview(buf)
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(view):
            raise ParseError(f"truncated checkpoint while reading {what}", pos)
        out = view[pos : pos + n]
        pos += n
        return out

    if bytes(take(4, "magic")) != MAGIC:
        raise ParseError("bad checkpoint magic", 0)
    version, count = struct.unpack("<BI", take(5, "header"))
    if version != VERSION:
        raise ParseError(f"unsupported checkpoint version {version}", 4)
    store = ParamStore()
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2, "name length"))
        name = bytes(take(nlen, "name")).decode("utf-8")
        trainable, ndim = struct.unpack("<BB", take(2, "flags"))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim, "shape"))
        n = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(take(4 * n, f"values of {name}"), dtype="<f4").reshape(shape)
        store.add(name, data.astype(np.float32), trainable=bool(trainable))
    if pos != len(view):
        raise ParseError("trailing bytes in checkpoint", pos)
    return store


def save_checkpoint(path, params: ParamStore, manifest: dict | None = None) -> str:
    """Write the checkpoint (and manifest); returns the sha256 of the binary file."""
    path = Path(path)
    blob = params_to_bytes(params)
    path.write_bytes(blob)
    if manifest is not None:
        Path(f"{path}.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return hashlib.sha256(blob).hexdigest()


def load_checkpoint(path) -> tuple[ParamStore, dict | None]:
    path = Path(path)
    store = params_from_bytes(path.read_bytes())
    mpath = Path(f"{path}.json")
    manifest = json.loads(mpath.read_text()) if mpath.exists() else None
    return store, manifest


def params_hash(params: ParamStore, prefix: str = "") -> str:
    h = hashlib.sha256()
    for name, t in params.items():
        if name.startswith(prefix):
            h.update(name.encode())
            h.update(np.ascontiguousarray(t.data).tobytes())
    return h.hexdigest()
