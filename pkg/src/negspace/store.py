"""Bit-exact persistence for embedding collections.

A store is a pair of files: a binary vector file and a JSON manifest.

Vector file layout (little-endian):

    magic   4 bytes  ASCII "SVEC"
    version u32      1
    dim     u32
    count   u64
    reserved 16 zero bytes
    payload  count * dim float32, row-major

Manifest: UTF-8 JSON ``{"dim": int, "count": int, "items": [{"id": str,
"labels": [str], "caption": str|null}]}`` with ids unique and items
index-aligned with the vector rows.

Vectors are stored in float32; geometry downstream computes in float64.
Rows are re-normalized on load only when their float64 norm strays more
than 1e-6 from 1, so a write/read round trip of an already-normalized
store is bit-exact while sloppy external dumps still come back unit-norm.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from operator import itemgetter
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import (
    BadMagic,
    IoFailure,
    LengthMismatch,
    ManifestMismatch,
    UnknownId,
    VersionUnsupported,
    ZeroNormRow,
)

__all__ = ["MAGIC", "VERSION", "HEADER_SIZE", "StoreItem", "EmbeddingStore",
           "write_store", "read_store", "atomic_write_bytes", "atomic_write_text"]

MAGIC = b"SVEC"
VERSION = 1
_HEADER = struct.Struct("<4sIIQ16s")
HEADER_SIZE = _HEADER.size  # 36

_RENORM_TOL = 1e-6
_ZERO_TOL = 1e-12


class StoreItem(NamedTuple):
    id: str
    labels: tuple[str, ...] = ()
    caption: Optional[str] = None


def _row_norms(vectors: np.ndarray) -> np.ndarray:
    # float64 accumulation without materializing a float64 copy of the matrix
    return np.sqrt(np.einsum("ij,ij->i", vectors, vectors, dtype=np.float64))


class EmbeddingStore:
    """Immutable, index-aligned collection of ids, labels, captions and
    unit-norm float32 vectors."""

    def __init__(self, vectors, items: Sequence[StoreItem], _norms=None):
        v = np.ascontiguousarray(np.asarray(vectors), dtype=np.float32)
        if v.ndim != 2:
            raise ValueError(f"vectors must be 2-D, got shape {v.shape}")
        items = tuple(
            it if isinstance(it, StoreItem)
            else StoreItem(id=it["id"], labels=tuple(it.get("labels", ())),
                           caption=it.get("caption"))
            for it in items
        )
        if len(items) != v.shape[0]:
            raise ValueError(f"{len(items)} items for {v.shape[0]} vector rows")
        ids = [it.id for it in items]
        if len(set(ids)) != len(ids):
            raise ValueError("item ids must be unique")

        norms = _row_norms(v) if _norms is None else _norms
        if (norms <= _ZERO_TOL).any():
            bad = int(np.argmax(norms <= _ZERO_TOL))
            raise ZeroNormRow(f"row {bad} has norm {norms[bad]:.3e}")
        off = np.abs(norms - 1.0) > _RENORM_TOL
        if off.any():
            v = v.copy()
            v[off] = (v[off].astype(np.float64) / norms[off, None]).astype(np.float32)
        v.setflags(write=False)

        self.vectors = v
        self.items = items
        self.dim = int(v.shape[1])
        self.count = int(v.shape[0])
        self._ids = ids
        self._index = None
        self._ids_arr = None

    def __len__(self) -> int:
        return self.count

    def ids(self) -> list[str]:
        return list(self._ids)

    def ids_array(self) -> np.ndarray:
        if self._ids_arr is None:
            self._ids_arr = np.array(self._ids)
            self._ids_arr.setflags(write=False)
        return self._ids_arr

    def row_of(self, item_id: str) -> int:
        if self._index is None:
            self._index = {it.id: i for i, it in enumerate(self.items)}
        try:
            return self._index[item_id]
        except KeyError:
            raise UnknownId(item_id) from None

    def get_vector(self, item_id: str) -> np.ndarray:
        """Float64 copy of the row for ``item_id``."""
        return np.asarray(self.vectors[self.row_of(item_id)], dtype=np.float64)

    def get_item(self, item_id: str) -> StoreItem:
        return self.items[self.row_of(item_id)]


def get_vector(store: EmbeddingStore, item_id: str) -> np.ndarray:
    return store.get_vector(item_id)


def _manifest_dict(store: EmbeddingStore) -> dict:
    return {
        "dim": store.dim,
        "count": store.count,
        "items": [
            {"id": it.id, "labels": list(it.labels), "caption": it.caption}
            for it in store.items
        ],
    }


@contextmanager
def _atomic_file(path):
    """Temp-file-plus-rename writer; readers never observe a torn file."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as f:
            yield f
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path, data: bytes) -> None:
    try:
        with _atomic_file(path) as f:
            f.write(data)
    except OSError as exc:
        raise IoFailure(f"writing {path}: {exc}") from exc


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_store(store: EmbeddingStore, vector_path, manifest_path) -> None:
    """Serialize a store to its vector file and manifest atomically.

    The payload streams straight from the array (no intermediate bytes
    copy) and the manifest is compact: stores with 1e5+ items are on the
    hot load path.
    """
    header = _HEADER.pack(MAGIC, VERSION, store.dim, store.count, b"\x00" * 16)
    try:
        with _atomic_file(vector_path) as f:
            f.write(header)
            np.ascontiguousarray(store.vectors, dtype="<f4").tofile(f)
    except OSError as exc:
        raise IoFailure(f"writing {vector_path}: {exc}") from exc
    manifest = json.dumps(_manifest_dict(store), ensure_ascii=False,
                          separators=(",", ":")) + "\n"
    atomic_write_text(manifest_path, manifest)


def read_store(vector_path, manifest_path) -> EmbeddingStore:
    """Load and validate a store written by :func:`write_store`.

    Raises BadMagic / VersionUnsupported / LengthMismatch for malformed
    vector files, ManifestMismatch when the manifest disagrees with the
    header or violates the schema, and ZeroNormRow for degenerate rows.
    """
    try:
        size = os.path.getsize(vector_path)
        f = open(vector_path, "rb")
    except OSError as exc:
        raise IoFailure(f"reading {vector_path}: {exc}") from exc
    with f:
        head = f.read(HEADER_SIZE)
        if len(head) < HEADER_SIZE:
            raise BadMagic(
                f"{vector_path}: file shorter than the {HEADER_SIZE}-byte header")
        magic, version, dim, count, _reserved = _HEADER.unpack(head)
        if magic != MAGIC:
            raise BadMagic(f"{vector_path}: magic {magic!r} != {MAGIC!r}")
        if version != VERSION:
            raise VersionUnsupported(
                f"{vector_path}: version {version}, supported: {VERSION}")
        expected = count * dim * 4
        if size - HEADER_SIZE != expected:
            raise LengthMismatch(f"{vector_path}: payload {size - HEADER_SIZE} "
                                 f"bytes, header implies {expected}")

        def load_payload():
            v = np.fromfile(f, dtype="<f4", count=count * dim).reshape(count, dim)
            return v, _row_norms(v)

        # payload read and norm reduction both release the GIL; overlap them
        # with manifest parsing on the main thread
        with ThreadPoolExecutor(max_workers=1) as pool:
            payload = pool.submit(load_payload)
            try:
                manifest = json.loads(Path(manifest_path).read_bytes())
            except OSError as exc:
                raise IoFailure(f"reading {manifest_path}: {exc}") from exc
            except json.JSONDecodeError as exc:
                raise ManifestMismatch(f"{manifest_path}: invalid JSON: {exc}") from exc
            try:
                m_dim = manifest["dim"]
                m_count = manifest["count"]
                fields = itemgetter("id", "labels", "caption")
                items = [StoreItem(i, tuple(labels), caption)
                         for i, labels, caption in map(fields, manifest["items"])]
            except (KeyError, TypeError) as exc:
                raise ManifestMismatch(
                    f"{manifest_path}: schema violation: {exc}") from exc
            for it in items:
                if not isinstance(it.id, str) \
                        or not all(isinstance(x, str) for x in it.labels) \
                        or not (it.caption is None or isinstance(it.caption, str)):
                    raise ManifestMismatch(
                        f"{manifest_path}: bad item field types: {it!r}")
            try:
                vectors, norms = payload.result()
            except OSError as exc:
                raise IoFailure(f"reading {vector_path}: {exc}") from exc

    if m_dim != dim or m_count != count:
        raise ManifestMismatch(
            f"{manifest_path}: dim/count ({m_dim}, {m_count}) != header ({dim}, {count})")
    if len(items) != count:
        raise ManifestMismatch(f"{manifest_path}: {len(items)} items for count {count}")
    try:
        return EmbeddingStore(vectors, items, _norms=norms)
    except ValueError as exc:
        raise ManifestMismatch(f"{manifest_path}: {exc}") from exc
