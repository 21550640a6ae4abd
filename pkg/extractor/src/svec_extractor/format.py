"""Writer for the SVEC vector-store interchange format.

Layout (little-endian): magic "SVEC", u32 version = 1, u32 dim,
u64 count, 16 reserved zero bytes, then count * dim float32 row-major.
The manifest is UTF-8 JSON {"dim", "count", "items": [{"id", "labels",
"caption"}]}, index-aligned with the rows. This is an independent
implementation of the consumer's documented on-disk interface.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Sequence

import numpy as np

MAGIC = b"SVEC"
VERSION = 1
_HEADER = struct.Struct("<4sIIQ16s")


def _atomic_write(path, writer) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as f:
            writer(f)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_vectors(path, vectors: np.ndarray) -> None:
    v = np.ascontiguousarray(vectors, dtype="<f4")
    if v.ndim != 2:
        raise ValueError(f"vectors must be 2-D, got shape {v.shape}")
    header = _HEADER.pack(MAGIC, VERSION, v.shape[1], v.shape[0], b"\x00" * 16)

    def writer(f):
        f.write(header)
        v.tofile(f)

    _atomic_write(path, writer)


def write_manifest(path, dim: int, items: Sequence[dict]) -> None:
    doc = {"dim": dim, "count": len(items),
           "items": [{"id": it["id"], "labels": list(it.get("labels", [])),
                      "caption": it.get("caption")} for it in items]}
    data = (json.dumps(doc, ensure_ascii=False, separators=(",", ":")) + "\n").encode()
    _atomic_write(path, lambda f: f.write(data))


def l2_normalize(vectors: np.ndarray) -> np.ndarray:
    """Unit-normalize rows in float64, returned as float32."""
    v = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    if (norms <= 1e-12).any():
        raise ValueError("cannot normalize a zero-norm embedding row")
    return (v / norms).astype(np.float32)
