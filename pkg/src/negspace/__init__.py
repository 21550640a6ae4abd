"""Negation-aware embedding-space query engine.

Scores corpora of unit-norm embeddings against captions that may contain
a negated clause, using spherical-cap geometry instead of a single
full-caption embedding. Ships a bit-exact vector store format, a caption
decomposer, retrieval/MCQ evaluation, synthetic planted benchmarks, and
threshold/entropy analysis tooling, all behind one CLI.
"""

__version__ = "0.1.0"
