"""Encoder backends.

An encoder exposes ``dim``, ``encode_texts(list[str])`` and
``encode_images(list[PIL.Image])``, both returning (n, dim) float arrays
(not necessarily normalized; the pipeline normalizes).

``StubEncoder`` is fully deterministic (vectors derived from content
hashes) and exists so the pipeline, formats, and CLI can be exercised
without model weights. ``ClipEncoder`` wraps any CLIP-family checkpoint
via transformers; torch/transformers are imported lazily so the stub path
has no heavy dependencies.
"""

from __future__ import annotations

import hashlib

import numpy as np


class StubEncoder:
    """Hash-seeded deterministic encoder for tests and dry runs."""

    def __init__(self, dim: int = 64):
        self.dim = dim

    def _from_bytes(self, payload: bytes) -> np.ndarray:
        digest = hashlib.sha256(payload).digest()
        seed = int.from_bytes(digest[:8], "little")
        rng = np.random.default_rng(seed)
        return rng.standard_normal(self.dim)

    def encode_texts(self, texts) -> np.ndarray:
        return np.stack([self._from_bytes(t.encode("utf-8")) for t in texts])

    def encode_images(self, images) -> np.ndarray:
        return np.stack([self._from_bytes(np.asarray(im).tobytes())
                         for im in images])


class ClipEncoder:
    """CLIP-family checkpoint via transformers (text + image towers)."""

    def __init__(self, model_id: str, device: str = "cpu"):
        import torch
        from transformers import CLIPModel, CLIPProcessor

        self._torch = torch
        self.device = device
        self.model = CLIPModel.from_pretrained(model_id).to(device).eval()
        self.processor = CLIPProcessor.from_pretrained(model_id)
        self.dim = int(self.model.config.projection_dim)

    def encode_texts(self, texts) -> np.ndarray:
        inputs = self.processor(text=list(texts), return_tensors="pt",
                                padding=True, truncation=True).to(self.device)
        with self._torch.no_grad():
            feats = self.model.get_text_features(**inputs)
        return feats.cpu().numpy().astype(np.float64)

    def encode_images(self, images) -> np.ndarray:
        inputs = self.processor(images=list(images),
                                return_tensors="pt").to(self.device)
        with self._torch.no_grad():
            feats = self.model.get_image_features(**inputs)
        return feats.cpu().numpy().astype(np.float64)


def make_encoder(model_id: str, device: str = "cpu", stub_dim: int = 64):
    if model_id == "stub":
        return StubEncoder(dim=stub_dim)
    return ClipEncoder(model_id, device=device)
