"""Query construction, corpus ranking, and retrieval/MCQ metrics.

Captions are decomposed, embedded through a text-embedding source (a
precomputed store or any callable), and turned into scoring queries. Three
scorer modes exist:

- ``subspace``: decompose and, when a negated part is present, score by
  the cap-intersection direction (the negation-aware rule);
- ``affirmative-only``: decompose but score by the affirmative embedding
  alone (the plain-dot baseline used for comparisons);
- ``full-caption``: no decomposition, score by the embedding of the raw
  caption string (vanilla single-embedding behavior).

For captions without a negation cue all three coincide bit-for-bit.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .decompose import DecomposerConfig, decompose
from .errors import DimensionMismatch, UnknownCaption
from .sphere import (
    VARIANT_SLERP_CENTER,
    NegationQuery,
    negation_query,
    normalize,
    score,
)
from .store import EmbeddingStore

__all__ = [
    "MODE_SUBSPACE", "MODE_AFFIRMATIVE_ONLY", "MODE_FULL_CAPTION", "MODES",
    "TEMPLATES", "EngineConfig", "RetrievalQuery", "McqCandidate", "McqItem",
    "EvalReport", "store_text_embedder", "build_query", "rank", "recall_at_k",
    "mcq_select", "run_retrieval_eval", "run_mcq_eval",
    "load_retrieval_tasks", "load_mcq_items", "report_to_json",
]

MODE_SUBSPACE = "subspace"
MODE_AFFIRMATIVE_ONLY = "affirmative-only"
MODE_FULL_CAPTION = "full-caption"
MODES = (MODE_SUBSPACE, MODE_AFFIRMATIVE_ONLY, MODE_FULL_CAPTION)

TEMPLATES = ("affirmation", "negation", "hybrid")

TextEmbedder = Callable[[str], np.ndarray]


@dataclass
class EngineConfig:
    t: float = 0.92
    variant: str = VARIANT_SLERP_CENTER
    mode: str = MODE_SUBSPACE
    k_list: tuple[int, ...] = (1, 5, 10)
    threads: int = 1
    decomposer: DecomposerConfig = field(default_factory=DecomposerConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}, expected one of {MODES}")
        if any(k < 1 for k in self.k_list):
            raise ValueError("k values must be >= 1")


@dataclass(frozen=True)
class RetrievalQuery:
    query_id: str
    caption: str
    relevant_ids: frozenset[str]
    is_negated: bool

    def __post_init__(self):
        if not self.relevant_ids:
            raise ValueError(f"query {self.query_id}: relevant_ids must be non-empty")


@dataclass(frozen=True)
class McqCandidate:
    text: str
    template: str

    def __post_init__(self):
        if self.template not in TEMPLATES:
            raise ValueError(f"unknown template {self.template!r}")


@dataclass(frozen=True)
class McqItem:
    image_id: str
    candidates: tuple[McqCandidate, ...]
    answer_index: int

    def __post_init__(self):
        if not 2 <= len(self.candidates) <= 4:
            raise ValueError(f"{self.image_id}: need 2-4 candidates, "
                             f"got {len(self.candidates)}")
        if not 0 <= self.answer_index < len(self.candidates):
            raise ValueError(f"{self.image_id}: answer index {self.answer_index} "
                             f"out of range")


@dataclass
class EvalReport:
    """Aggregated metrics plus the configuration echo (t, variant, backend)."""

    config: dict
    counts: dict
    recall_at_k: Optional[dict] = None
    mcq_accuracy: Optional[dict] = None


def store_text_embedder(text_store: EmbeddingStore) -> TextEmbedder:
    """Embedder that looks captions up in a precomputed text store.

    Store items are matched by their ``caption`` field (first occurrence
    wins). Unknown captions raise UnknownCaption.
    """
    by_caption: dict[str, int] = {}
    for i, item in enumerate(text_store.items):
        if item.caption is not None and item.caption not in by_caption:
            by_caption[item.caption] = i
    vectors = text_store.vectors

    def embed(caption: str) -> np.ndarray:
        try:
            row = by_caption[caption]
        except KeyError:
            raise UnknownCaption(caption) from None
        return normalize(np.asarray(vectors[row], dtype=np.float64))

    return embed


def build_query(caption: str, embedder: TextEmbedder,
                config: EngineConfig) -> NegationQuery:
    """Decompose (mode permitting), embed the parts, and derive the query."""
    if config.mode == MODE_FULL_CAPTION:
        return negation_query(embedder(caption), t=config.t, variant=config.variant)
    parts = decompose(caption, config.decomposer)
    e_a = embedder(parts.affirmative)
    if parts.negated is None or config.mode == MODE_AFFIRMATIVE_ONLY:
        return negation_query(e_a, t=config.t, variant=config.variant)
    e_n = embedder(parts.negated)
    return negation_query(e_a, e_n, t=config.t, variant=config.variant)


def rank(query: NegationQuery, store: EmbeddingStore) -> list[tuple[str, float]]:
    """All items scored against the query, best first.

    Ties break toward the lexicographically smaller id, so the ranking is
    invariant under corpus permutation and parallel evaluation.
    """
    if store.dim != query.direction.shape[0]:
        raise DimensionMismatch(
            f"store dim {store.dim} != query dim {query.direction.shape[0]}")
    if store.count == 0:
        return []
    # einsum keeps each row's float64 reduction independent of its position
    # in the matrix, so scores are bit-stable under corpus permutation
    # (blocked gemv kernels are not)
    scores = np.einsum("ij,j->i", store.vectors,
                       np.asarray(query.direction, dtype=np.float64),
                       dtype=np.float64)
    ids = store.ids_array()
    order = np.lexsort((ids, -scores))
    return [(str(ids[i]), float(scores[i])) for i in order]


def recall_at_k(ranked_ids: Sequence[str], relevant: Iterable[str], k: int) -> int:
    """1 iff any relevant id appears in the top k, else 0."""
    if k < 1:
        raise ValueError("k must be >= 1")
    relevant = set(relevant)
    return int(any(rid in relevant for rid in ranked_ids[:k]))


def mcq_select(image_vec: np.ndarray, candidate_queries: Sequence[NegationQuery]) -> int:
    """Index of the best-scoring candidate; ties go to the smallest index."""
    if len(candidate_queries) < 2:
        raise ValueError("need at least 2 candidates")
    scores = [score(image_vec, q) for q in candidate_queries]
    return int(np.argmax(scores))


def _config_echo(config: EngineConfig) -> dict:
    return {"t": config.t, "variant": config.variant,
            "backend": config.decomposer.backend}


def _mean(xs: Sequence[int]) -> float:
    return sum(xs) / len(xs)


def run_retrieval_eval(tasks: Sequence[RetrievalQuery], store: EmbeddingStore,
                       embedder: TextEmbedder, config: EngineConfig) -> EvalReport:
    """Rank the corpus for every query and aggregate Recall@K per bucket.

    Buckets split by ``is_negated``; an empty task list yields zero counts
    and no recall fractions.
    """
    corpus_ids = set(store.ids())
    for task in tasks:
        missing = task.relevant_ids - corpus_ids
        if missing:
            raise ValueError(f"query {task.query_id}: relevant ids not in corpus: "
                             f"{sorted(missing)[:5]}")

    def evaluate(task: RetrievalQuery) -> dict[int, int]:
        query = build_query(task.caption, embedder, config)
        ranked = [rid for rid, _ in rank(query, store)]
        return {k: recall_at_k(ranked, task.relevant_ids, k) for k in config.k_list}

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            hits = list(pool.map(evaluate, tasks))
    else:
        hits = [evaluate(task) for task in tasks]

    buckets = {"affirmative": [h for task, h in zip(tasks, hits) if not task.is_negated],
               "negated": [h for task, h in zip(tasks, hits) if task.is_negated]}
    recall = {
        name: {k: _mean([h[k] for h in rows]) for k in config.k_list}
        for name, rows in buckets.items() if rows
    }
    counts = {name: len(rows) for name, rows in buckets.items()}
    return EvalReport(config=_config_echo(config), counts=counts, recall_at_k=recall)


def run_mcq_eval(items: Sequence[McqItem], store: EmbeddingStore,
                 embedder: TextEmbedder, config: EngineConfig) -> EvalReport:
    """Score every candidate caption per item; accuracy is bucketed by the
    template of the correct answer, and the overall average is the mean of
    the per-template accuracies."""

    def evaluate(item: McqItem) -> tuple[str, int]:
        image_vec = store.get_vector(item.image_id)
        queries = [build_query(c.text, embedder, config) for c in item.candidates]
        chosen = mcq_select(image_vec, queries)
        return item.candidates[item.answer_index].template, int(chosen == item.answer_index)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(evaluate, items))
    else:
        results = [evaluate(item) for item in items]

    buckets: dict[str, list[int]] = {}
    for template, correct in results:
        buckets.setdefault(template, []).append(correct)
    accuracy = {name: _mean(rows) for name, rows in
                sorted(buckets.items(), key=lambda kv: TEMPLATES.index(kv[0]))}
    if accuracy:
        accuracy["average"] = _mean(list(accuracy.values()))
    counts = {name: len(rows) for name, rows in
              sorted(buckets.items(), key=lambda kv: TEMPLATES.index(kv[0]))}
    return EvalReport(config=_config_echo(config), counts=counts, mcq_accuracy=accuracy)


# --- task files and report serialization ---

def _read_jsonl(path) -> list[dict]:
    rows = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
    return rows


def load_retrieval_tasks(path) -> list[RetrievalQuery]:
    return [
        RetrievalQuery(query_id=str(r["query_id"]), caption=str(r["caption"]),
                       relevant_ids=frozenset(str(x) for x in r["relevant_ids"]),
                       is_negated=bool(r["is_negated"]))
        for r in _read_jsonl(path)
    ]


def load_mcq_items(path) -> list[McqItem]:
    return [
        McqItem(image_id=str(r["image_id"]),
                candidates=tuple(McqCandidate(text=str(c["text"]),
                                              template=str(c["template"]))
                                 for c in r["candidates"]),
                answer_index=int(r["answer"]))
        for r in _read_jsonl(path)
    ]


def _round_tree(value, places=4):
    if isinstance(value, float):
        return round(value, places)
    if isinstance(value, dict):
        return {k: _round_tree(v, places) for k, v in value.items()}
    if isinstance(value, list):
        return [_round_tree(v, places) for v in value]
    return value


def report_to_json(report: EvalReport, extra_config: Optional[dict] = None) -> str:
    """Serialize with stable key order; floats rounded to 4 places here only."""
    config = dict(report.config)
    if extra_config:
        config.update(extra_config)
    config.setdefault("version", __version__)
    doc: dict = {"config": config, "counts": report.counts}
    if report.recall_at_k is not None:
        doc["recall_at_k"] = {bucket: {str(k): v for k, v in ks.items()}
                              for bucket, ks in report.recall_at_k.items()}
    if report.mcq_accuracy is not None:
        doc["mcq_accuracy"] = report.mcq_accuracy
    return json.dumps(_round_tree(doc), ensure_ascii=False, indent=2) + "\n"
