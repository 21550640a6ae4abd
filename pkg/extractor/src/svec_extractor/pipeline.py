"""Batch extraction pipeline.

Turns an input listing (image paths, caption lines, or video paths) into
a store: every successfully encoded input becomes one unit-norm row, in
listing order. Per-item failures are logged and skipped rather than
aborting the batch.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .format import l2_normalize, write_manifest, write_vectors
from .video import mean_pool, read_frames

log = logging.getLogger(__name__)


@dataclass
class ExtractionJob:
    model_id: str
    out_vectors: Path
    out_manifest: Path
    image_paths: list[Path] = field(default_factory=list)
    captions: list[str] = field(default_factory=list)
    video_paths: list[Path] = field(default_factory=list)
    frames_per_video: int = 8
    batch_size: int = 32
    device: str = "cpu"
    labels: Optional[list[list[str]]] = None  # aligned with the input listing

    def __post_init__(self):
        kinds = [bool(self.image_paths), bool(self.captions), bool(self.video_paths)]
        if sum(kinds) != 1:
            raise ValueError("give exactly one of image paths, captions, video paths")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.frames_per_video < 1:
            raise ValueError("frames_per_video must be >= 1")
        n = len(self.image_paths) + len(self.captions) + len(self.video_paths)
        if self.labels is not None and len(self.labels) != n:
            raise ValueError("labels listing must align with the inputs")


def _batched(seq, size):
    for i in range(0, len(seq), size):
        yield i, seq[i:i + size]


def _labels_for(job: ExtractionJob, index: int) -> list[str]:
    return list(job.labels[index]) if job.labels is not None else []


def _extract_captions(job, encoder):
    rows, items = [], []
    for start, batch in _batched(job.captions, job.batch_size):
        feats = encoder.encode_texts(batch)
        for offset, caption in enumerate(batch):
            i = start + offset
            rows.append(feats[offset])
            items.append({"id": f"txt-{i:06d}", "labels": _labels_for(job, i),
                          "caption": caption})
    return rows, items


def _extract_images(job, encoder):
    from PIL import Image

    rows, items = [], []
    for start, batch in _batched(job.image_paths, job.batch_size):
        loaded = []
        for offset, path in enumerate(batch):
            i = start + offset
            try:
                with Image.open(path) as im:
                    loaded.append((i, path, im.convert("RGB")))
            except OSError as exc:
                log.warning("skipping unreadable image %s: %s", path, exc)
        if not loaded:
            continue
        feats = encoder.encode_images([im for _, _, im in loaded])
        for row, (i, path, _) in zip(feats, loaded):
            rows.append(row)
            items.append({"id": f"img-{i:06d}-{Path(path).stem}",
                          "labels": _labels_for(job, i), "caption": None})
    return rows, items


def _extract_videos(job, encoder):
    rows, items = [], []
    for i, path in enumerate(job.video_paths):
        try:
            frames = read_frames(path, job.frames_per_video)
        except OSError as exc:
            log.warning("skipping unreadable video %s: %s", path, exc)
            continue
        feats = []
        for _, batch in _batched(frames, job.batch_size):
            feats.append(encoder.encode_images(batch))
        pooled = mean_pool(np.vstack(feats))
        rows.append(pooled)
        items.append({"id": f"vid-{i:06d}-{Path(path).stem}",
                      "labels": _labels_for(job, i), "caption": None})
    return rows, items


def run_extraction(job: ExtractionJob, encoder=None) -> int:
    """Encode the job's inputs and write the store files.

    Returns the number of rows written. An encoder instance may be
    injected (tests); otherwise one is built from ``job.model_id``.
    """
    if encoder is None:
        from .encoders import make_encoder

        encoder = make_encoder(job.model_id, device=job.device)
    if job.captions:
        rows, items = _extract_captions(job, encoder)
    elif job.image_paths:
        rows, items = _extract_images(job, encoder)
    else:
        rows, items = _extract_videos(job, encoder)

    dim = encoder.dim
    vectors = (l2_normalize(np.stack(rows)) if rows
               else np.zeros((0, dim), dtype=np.float32))
    write_vectors(job.out_vectors, vectors)
    write_manifest(job.out_manifest, dim, items)
    log.info("wrote %d rows (dim %d) to %s", len(items), dim, job.out_vectors)
    return len(items)
