"""Embedding extraction into the SVEC store format.

Encodes images, captions, and videos with a CLIP-family checkpoint (or a
deterministic stub for tests) and writes unit-norm float32 vectors plus a
JSON manifest that the query engine loads directly.
"""

__version__ = "0.1.0"
