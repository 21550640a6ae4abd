"""Video frame sampling and pooling.

A video becomes one store row: uniformly sampled frames are encoded
individually, mean-pooled, and the pooled vector is normalized by the
pipeline. Frame decoding uses OpenCV and is imported lazily.
"""

from __future__ import annotations

import numpy as np


def sample_indices(total_frames: int, n_samples: int) -> list[int]:
    """Uniformly spaced frame indices, first and last frame included."""
    if total_frames < 1:
        raise ValueError("video has no frames")
    if n_samples < 1:
        raise ValueError("need at least one sample")
    if n_samples >= total_frames:
        return list(range(total_frames))
    return [round(i * (total_frames - 1) / (n_samples - 1)) for i in range(n_samples)] \
        if n_samples > 1 else [total_frames // 2]


def read_frames(path, n_samples: int):
    """Decode uniformly sampled RGB frames from a video file."""
    import cv2

    cap = cv2.VideoCapture(str(path))
    try:
        if not cap.isOpened():
            raise OSError(f"cannot open video {path}")
        total = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
        if total < 1:
            raise OSError(f"video {path} reports no frames")
        wanted = set(sample_indices(total, n_samples))
        frames = []
        for idx in range(total):
            ok, frame = cap.read()
            if not ok:
                break
            if idx in wanted:
                frames.append(cv2.cvtColor(frame, cv2.COLOR_BGR2RGB))
        if not frames:
            raise OSError(f"no decodable frames in {path}")
        return frames
    finally:
        cap.release()


def mean_pool(frame_features: np.ndarray) -> np.ndarray:
    """Mean over the frame axis; the caller normalizes the result."""
    feats = np.asarray(frame_features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] < 1:
        raise ValueError(f"expected (frames, dim), got {feats.shape}")
    return feats.mean(axis=0)
