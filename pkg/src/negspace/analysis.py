"""Threshold sweeps, retrieval-diversity entropy, and query-vector export."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import UnlabeledItem
from .evalengine import (
    EngineConfig,
    EvalReport,
    TextEmbedder,
    build_query,
    rank,
    run_mcq_eval,
    run_retrieval_eval,
)
from .store import EmbeddingStore, StoreItem, write_store

__all__ = ["SweepResult", "EntropyReport", "threshold_sweep", "topk_entropy",
           "rank_queries", "export_query_vector", "sweep_csv", "entropy_csv"]


@dataclass(frozen=True)
class SweepResult:
    metric: str
    t_values: list[float]
    metric_per_t: list[float]
    argmax_t: float
    max_drop: float  # max metric - min metric over the sweep window


@dataclass(frozen=True)
class EntropyReport:
    k: int
    per_query: list[dict]  # {"caption", "top_k_labels", "entropy_bits"}
    mean_entropy: float


def _metric_value(report: EvalReport, metric: str) -> float:
    if metric == "mcq-average":
        return report.mcq_accuracy["average"]
    if metric.startswith("recall@"):
        k = int(metric.split("@", 1)[1])
        buckets = report.recall_at_k or {}
        if "negated" in buckets:
            return buckets["negated"][k]
        return buckets["affirmative"][k]
    raise ValueError(f"unknown sweep metric {metric!r}")


def threshold_sweep(tasks: Sequence, store: EmbeddingStore, embedder: TextEmbedder,
                    t_min: float, t_max: float, steps: int, config: EngineConfig,
                    metric: str = "mcq-average") -> SweepResult:
    """Evaluate the metric on an evenly spaced, endpoint-inclusive t grid.

    ``metric`` is "mcq-average" (tasks are MCQ items) or "recall@K" (tasks
    are retrieval queries; the negated bucket is reported when present).
    """
    if steps < 2:
        raise ValueError("steps must be >= 2")
    if not t_min < t_max:
        raise ValueError("t_min must be < t_max")
    t_values = [float(t) for t in np.linspace(t_min, t_max, steps)]
    values = []
    for t in t_values:
        cfg = replace(config, t=t)
        if metric == "mcq-average":
            report = run_mcq_eval(tasks, store, embedder, cfg)
        else:
            report = run_retrieval_eval(tasks, store, embedder, cfg)
        values.append(float(_metric_value(report, metric)))
    best = int(np.argmax(values))
    return SweepResult(metric=metric, t_values=t_values, metric_per_t=values,
                       argmax_t=t_values[best],
                       max_drop=float(max(values) - min(values)))


def shannon_entropy_bits(labels: Sequence[str]) -> float:
    """Entropy of the empirical label distribution, in bits (0 log 0 := 0)."""
    counts = Counter(labels)
    n = len(labels)
    return -sum((c / n) * math.log2(c / n) for c in counts.values())


def topk_entropy(rankings: Sequence[tuple[str, Sequence[str]]],
                 store: EmbeddingStore, k: int) -> EntropyReport:
    """Label-diversity entropy of the top k of each ranking.

    ``rankings`` holds (caption, ordered item ids) pairs. Each item
    contributes its primary (first) label; unlabeled items are an error.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    per_query = []
    for caption, ranked_ids in rankings:
        top_labels = []
        for rid in list(ranked_ids)[:k]:
            item = store.get_item(rid)
            if not item.labels:
                raise UnlabeledItem(f"item {rid} has no labels")
            top_labels.append(item.labels[0])
        per_query.append({"caption": caption, "top_k_labels": top_labels,
                          "entropy_bits": shannon_entropy_bits(top_labels)})
    mean = (sum(q["entropy_bits"] for q in per_query) / len(per_query)
            if per_query else 0.0)
    return EntropyReport(k=k, per_query=per_query, mean_entropy=mean)


def rank_queries(captions: Sequence[str], store: EmbeddingStore,
                 embedder: TextEmbedder,
                 config: EngineConfig) -> list[tuple[str, list[str]]]:
    """Rank the corpus for each caption; (caption, ordered ids) pairs."""
    out = []
    for caption in captions:
        query = build_query(caption, embedder, config)
        out.append((caption, [rid for rid, _ in rank(query, store)]))
    return out


def export_query_vector(caption: str, embedder: TextEmbedder, config: EngineConfig,
                        vector_path, manifest_path) -> np.ndarray:
    """Write the caption's scoring direction as a single-row store.

    The files are the standard vector + manifest pair, so any consumer of
    the store format (e.g. a text-to-image conditioning stage) can read the
    vector back. Nothing is written if the caption cannot be resolved.
    """
    query = build_query(caption, embedder, config)
    direction = np.asarray(query.direction, dtype=np.float32)[None, :]
    store = EmbeddingStore(direction, [StoreItem(id="query", caption=caption)])
    write_store(store, vector_path, manifest_path)
    return query.direction


def sweep_csv(result: SweepResult) -> str:
    lines = ["t,metric"]
    for t, v in zip(result.t_values, result.metric_per_t):
        lines.append(f"{t:.6f},{v:.6f}")
    return "\n".join(lines) + "\n"


def entropy_csv(report: EntropyReport) -> str:
    lines = ["caption,entropy_bits,top_k_labels"]
    for q in report.per_query:
        labels = "|".join(q["top_k_labels"])
        caption = q["caption"].replace('"', '""')
        lines.append(f"\"{caption}\",{q['entropy_bits']:.6f},{labels}")
    return "\n".join(lines) + "\n"


def sweep_json(result: SweepResult) -> str:
    doc = {"metric": result.metric,
           "t_values": [round(t, 6) for t in result.t_values],
           "metric_per_t": [round(v, 6) for v in result.metric_per_t],
           "argmax_t": round(result.argmax_t, 6),
           "max_drop": round(result.max_drop, 6)}
    return json.dumps(doc, ensure_ascii=False, indent=2) + "\n"


def entropy_json(report: EntropyReport, config_echo: Optional[dict] = None) -> str:
    doc = {
        "k": report.k,
        "mean_entropy": round(report.mean_entropy, 6),
        "per_query": [{"caption": q["caption"],
                       "entropy_bits": round(q["entropy_bits"], 6),
                       "top_k_labels": q["top_k_labels"]} for q in report.per_query],
    }
    if config_echo:
        doc["config"] = config_echo
    return json.dumps(doc, ensure_ascii=False, indent=2) + "\n"
