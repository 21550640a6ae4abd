"""Seeded synthetic benchmarks with exhaustively computable ground truth.

Planted geometry
----------------
Cluster centers double as the text anchors for their label captions. Two
labels (the first two) sit at ``ADJACENT_ANGLE`` on either side of the
neutral-prompt axis, close enough that caps around them overlap the
neutral cap at practical thresholds; the remaining labels are mutually
orthogonal and orthogonal to that axis. This gives every scoring regime a
home: pure-negation MCQ items live on the adjacent pair, hybrid retrieval
and MCQ items live on the orthogonal labels, and an extra isolated axis
hosts the retrieval-diversity task.

Point clouds are isotropic perturbations of the centers, re-normalized,
with the perturbation scaled so the expected angle to the center is the
requested spread. Everything is a pure function of the seed.

The module also carries the single-direction separation-margin
demonstration: no unit vector can exceed sqrt(m + gamma*m*(m-1)) / m as a
minimum dot product against m pairwise-gamma-correlated unit vectors, so
the achievable margin collapses as the number of excluded items grows.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .decompose import decompose_rules
from .errors import UnknownLabel
from .evalengine import McqCandidate, McqItem, RetrievalQuery
from .sphere import SphericalCap, cap_contains
from .store import EmbeddingStore, StoreItem, atomic_write_text, write_store

__all__ = [
    "ADJACENT_ANGLE", "LABEL_POOL", "ClusterSpec", "sample_cluster",
    "MarginWitness", "margin_bound", "max_pairwise_dot",
    "best_separating_margin", "margin_empirical",
    "PlantedBenchmark", "build_benchmark", "emit_benchmark", "default_labels",
    "divisibility_histogram", "histogram_csv",
]

ADJACENT_ANGLE = 0.51  # half-angle of the close label pair around the neutral axis

LABEL_POOL = (
    "apple", "bicycle", "castle", "dolphin", "engine", "forest", "guitar",
    "harbor", "island", "jacket", "lantern", "meadow", "nutmeg", "orchid",
    "piano", "quartz",
)

NEUTRAL_CAPTION = "This is a photo"
HUB_CAPTION = "An image"


def default_labels(n: int) -> list[str]:
    if n <= len(LABEL_POOL):
        return list(LABEL_POOL[:n])
    return list(LABEL_POOL) + [f"concept{i:02d}" for i in range(n - len(LABEL_POOL))]


@dataclass(frozen=True)
class ClusterSpec:
    label: str
    center: np.ndarray
    angular_spread: float
    n_points: int
    seed: int

    def __post_init__(self):
        if not 0.0 < self.angular_spread < math.pi / 2:
            raise ValueError(f"angular_spread {self.angular_spread} outside (0, pi/2)")
        if self.n_points < 1:
            raise ValueError("n_points must be >= 1")


def _perturb(center: np.ndarray, n: int, spread: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    dim = center.shape[0]
    sigma = math.tan(spread) / math.sqrt(dim - 1)
    pts = center + sigma * rng.standard_normal((n, dim))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def sample_cluster(spec: ClusterSpec) -> np.ndarray:
    """n_points unit vectors around the center, bit-reproducible per seed."""
    center = np.asarray(spec.center, dtype=np.float64)
    center = center / np.linalg.norm(center)
    return _perturb(center, spec.n_points, spec.angular_spread, spec.seed)


# --- separation-margin demonstration ---

def margin_bound(m: int, gamma: float) -> float:
    """Supremum of the separation margin: sqrt(m + gamma*m*(m-1)) / m."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    return math.sqrt(m + gamma * m * (m - 1)) / m


def max_pairwise_dot(vectors: np.ndarray, block: int = 2048) -> float:
    """Largest off-diagonal dot product, blockwise to bound memory."""
    m = vectors.shape[0]
    if m < 2:
        return 0.0
    best = -np.inf
    for i in range(0, m, block):
        g = vectors[i:i + block] @ vectors.T
        rows = np.arange(g.shape[0])
        g[rows, i + rows] = -np.inf
        best = max(best, float(g.max()))
    return best


def best_separating_margin(vectors: np.ndarray, trials: int,
                           rng: np.random.Generator) -> float:
    """Best achieved min_i(n . u_i) over candidate separators n.

    Candidates: the normalized mean of the vectors (optimal for the
    natural relaxation of the min-dot objective) plus ``trials`` random
    unit restarts.
    """
    m, dim = vectors.shape
    candidates = []
    s = vectors.sum(axis=0)
    norm = float(np.linalg.norm(s))
    if norm > 1e-12:
        candidates.append(s / norm)
    for _ in range(trials):
        v = rng.standard_normal(dim)
        candidates.append(v / np.linalg.norm(v))
    return max(float((vectors @ n).min()) for n in candidates)


@dataclass(frozen=True)
class MarginWitness:
    m: int
    gamma: float
    bound: float
    empirical_best_margin: float

    def __post_init__(self):
        if self.empirical_best_margin > self.bound + 1e-6:
            raise ValueError(
                f"margin {self.empirical_best_margin} exceeds bound {self.bound}")


def margin_empirical(m: int, dim: int, trials: int, seed: int,
                     orthonormal: bool = False) -> MarginWitness:
    """Sample m unit vectors, search for the best separating direction, and
    witness that it stays below the pairwise-correlation bound.

    With ``orthonormal`` the vectors are exactly orthonormal (needs
    m <= dim), realizing the gamma = 0 case where the bound is 1/sqrt(m).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if dim < 2:
        raise ValueError("dim must be >= 2")
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(seed)
    if orthonormal:
        if m > dim:
            raise ValueError(f"cannot build {m} orthonormal vectors in dim {dim}")
        q, _ = np.linalg.qr(rng.standard_normal((dim, m)))
        vectors = np.ascontiguousarray(q.T)
    else:
        vectors = rng.standard_normal((m, dim))
        vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    gamma = max(0.0, max_pairwise_dot(vectors))
    return MarginWitness(
        m=m,
        gamma=gamma,
        bound=margin_bound(m, gamma),
        empirical_best_margin=best_separating_margin(vectors, trials, rng),
    )


# --- planted benchmark ---

@dataclass
class PlantedBenchmark:
    params: dict
    image_store: EmbeddingStore
    text_store: EmbeddingStore
    text_anchors: dict[str, np.ndarray]
    retrieval_tasks: list[RetrievalQuery]
    mcq_items: list[McqItem]
    binary_mcq_items: list[McqItem]
    diversity_queries: list[dict]


def _orthonormal_frame(dim: int, n_cols: int, seed_seq) -> np.ndarray:
    rng = np.random.default_rng(seed_seq)
    q, _ = np.linalg.qr(rng.standard_normal((dim, n_cols)))
    signs = np.sign(q[0, :])
    signs[signs == 0] = 1.0
    return q * signs


def build_benchmark(labels: Sequence[str], dim: int, spread: float,
                    points_per_cluster: int, seed: int,
                    t_gen: float = 0.97) -> PlantedBenchmark:
    """Construct the planted benchmark for the given labels.

    Emits the image store, the caption-keyed text store, negated and
    affirmative retrieval tasks (relevant sets computed exhaustively,
    excluding points inside the generation-threshold cap of the negated
    center), 4-way MCQ items across the three templates, binary MCQ items,
    and the diversity task. Raises when fewer than 3 labels are given or
    when the label centers violate the separation condition
    (inter-center angle > 2*arccos(t_gen) + 6*spread).
    """
    labels = list(labels)
    if len(labels) < 3:
        raise ValueError("need at least 3 labels")
    if len(set(labels)) != len(labels):
        raise ValueError("labels must be unique")
    if dim < len(labels) + 2:
        raise ValueError(f"dim must be >= len(labels) + 2, got {dim}")
    if not 0.0 < spread < math.pi / 2:
        raise ValueError("spread outside (0, pi/2)")
    if not -1.0 < t_gen < 1.0:
        raise ValueError("t_gen outside (-1, 1)")

    n_labels = len(labels)
    root = np.random.SeedSequence(seed)
    frame_ss, points_ss = root.spawn(2)
    point_seeds = np.random.default_rng(points_ss).integers(2**63, size=4 * n_labels)

    q = _orthonormal_frame(dim, n_labels + 1, frame_ss)
    rho = ADJACENT_ANGLE
    centers = {
        labels[0]: math.cos(rho) * q[:, 0] + math.sin(rho) * q[:, 1],
        labels[1]: math.cos(rho) * q[:, 0] - math.sin(rho) * q[:, 1],
    }
    for i in range(2, n_labels):
        centers[labels[i]] = q[:, i]
    neutral = q[:, 0]
    hub = q[:, n_labels]

    # separation condition between cluster centers
    c_mat = np.stack([centers[x] for x in labels])
    gram = c_mat @ c_mat.T
    np.fill_diagonal(gram, -1.0)
    min_angle = math.acos(float(np.clip(gram.max(), -1, 1)))
    sep_threshold = 2 * math.acos(t_gen) + 6 * spread
    if min_angle <= sep_threshold:
        raise ValueError(
            f"separation violated: min inter-center angle {min_angle:.4f} <= "
            f"2*alpha_gen + 6*spread = {sep_threshold:.4f}")

    orth = labels[2:]
    mixture_pairs = [(orth[i], orth[i + 1]) for i in range(0, len(orth) - 1, 2)]

    # --- image store ---
    img_rows, img_items = [], []
    seed_i = 0
    for label in labels:
        spec = ClusterSpec(label, centers[label], spread, points_per_cluster,
                           int(point_seeds[seed_i]))
        seed_i += 1
        pts = sample_cluster(spec)
        for i in range(points_per_cluster):
            img_rows.append(pts[i])
            img_items.append(StoreItem(id=f"img-{label}-{i:03d}", labels=(label,)))
    n_mix_points = max(2, points_per_cluster // 2)
    for a, b in mixture_pairs:
        mid = centers[a] + centers[b]
        mid /= np.linalg.norm(mid)
        pts = _perturb(mid, n_mix_points, spread, int(point_seeds[seed_i]))
        seed_i += 1
        for i in range(n_mix_points):
            img_rows.append(pts[i])
            img_items.append(StoreItem(id=f"img-{a}+{b}-{i:03d}", labels=(a, b)))
    image_store = EmbeddingStore(np.asarray(img_rows, dtype=np.float32), img_items)

    # --- text store (caption -> anchor) ---
    text_rows, text_items = [], []

    def add_text(caption: str, vec: np.ndarray) -> None:
        text_rows.append(vec)
        text_items.append(StoreItem(id=f"txt-{len(text_items):04d}", caption=caption))

    for x in labels:
        add_text(f"A photo of a {x}", centers[x])
        add_text(f"A photo of {x}", centers[x])
        # content-dominated stand-ins for raw negated captions (vanilla mode)
        add_text(f"Not a photo of a {x}", centers[x])
        add_text(f"An image but not a photo of a {x}", centers[x])
    add_text(NEUTRAL_CAPTION, neutral)
    add_text(HUB_CAPTION, hub)
    for x in labels:
        for y in labels:
            if x != y:
                mid = centers[x] + centers[y]
                add_text(f"A photo of a {x} and a {y}", mid / np.linalg.norm(mid))
    text_store = EmbeddingStore(np.asarray(text_rows, dtype=np.float32), text_items)

    # --- retrieval tasks ---
    tasks = []
    for x in labels:
        relevant = frozenset(it.id for it in img_items if x in it.labels)
        tasks.append(RetrievalQuery(query_id=f"aff-{x}", caption=f"A photo of a {x}",
                                    relevant_ids=relevant, is_negated=False))

    neg_pairs = [(labels[0], labels[1]), (labels[1], labels[0])]
    if len(orth) >= 3:
        neg_pairs += [(a, orth[(i + 2) % len(orth)]) for i, a in enumerate(orth)]
    elif len(orth) == 2:
        neg_pairs += [(orth[0], orth[1]), (orth[1], orth[0])]
    for a, b in neg_pairs:
        cap_b = SphericalCap(centers[b], t_gen)
        relevant = frozenset(
            it.id for i, it in enumerate(img_items)
            if a in it.labels and not cap_contains(
                np.asarray(image_store.vectors[i], dtype=np.float64), cap_b))
        tasks.append(RetrievalQuery(query_id=f"neg-{a}-not-{b}",
                                    caption=f"A photo of a {a} but not {b}",
                                    relevant_ids=relevant, is_negated=True))

    # --- MCQ items ---
    present_pair = (labels[0], labels[1])

    def orth_at(i: int) -> str:
        return orth[i % len(orth)]

    def rotate(cands: list[McqCandidate], answer: int, by: int):
        k = by % len(cands)
        return tuple(cands[k:] + cands[:k]), (answer - k) % len(cands)

    mcq_items: list[McqItem] = []
    for j in range(24):
        side = j % 2
        present, absent = present_pair[side], present_pair[1 - side]
        image_id = f"img-{present}-{(j // 2) % points_per_cluster:03d}"
        true = McqCandidate(f"Not a photo of a {absent}", "negation")
        twin = McqCandidate(f"Not a photo of a {present}", "negation")
        x, y = orth_at(j), orth_at(j + 1)
        filler_a = McqCandidate(
            f"A photo of a {x} and a {y}" if x != y else f"A photo of a {x}",
            "affirmation")
        filler_b = McqCandidate(f"A photo of a {orth_at(j + 2)}", "affirmation")
        if j % 2 == 0:
            cands, answer = [true, twin, filler_a, filler_b], 0
        else:
            cands, answer = [filler_a, twin, true, filler_b], 2
        mcq_items.append(McqItem(image_id, tuple(cands), answer))

    if len(orth) >= 2:
        for j in range(min(24, 3 * len(orth))):
            a, b = orth_at(j), orth_at(j + 1)
            image_id = f"img-{a}-{(j // len(orth)) % points_per_cluster:03d}"
            cands = [
                McqCandidate(f"A photo of a {a} but not {b}", "hybrid"),
                McqCandidate(f"A photo of a {a} and a {b}", "affirmation"),
                McqCandidate(f"A photo of a {b} but not {a}", "hybrid"),
                McqCandidate(f"A photo of a {labels[0]} and a {labels[1]}",
                             "affirmation"),
            ]
            cands, answer = rotate(cands, 0, j)
            mcq_items.append(McqItem(image_id, cands, answer))

    for idx, (a, b) in enumerate(mixture_pairs):
        others = [x for x in orth if x not in (a, b)]
        c = others[idx % len(others)] if others else labels[0]
        for i in range(min(6, n_mix_points)):
            image_id = f"img-{a}+{b}-{i:03d}"
            cands = [
                McqCandidate(f"A photo of a {a} and a {b}", "affirmation"),
                McqCandidate(f"A photo of a {a} and a {c}", "affirmation"),
                McqCandidate(f"A photo of a {c} but not {b}", "hybrid"),
                McqCandidate(f"A photo of a {labels[0]} and a {labels[1]}",
                             "affirmation"),
            ]
            cands, answer = rotate(cands, 0, i + idx)
            mcq_items.append(McqItem(image_id, cands, answer))

    binary_items = []
    for j in range(16):
        side = j // 8
        label = present_pair[side]
        image_id = f"img-{label}-{(j % 8) % points_per_cluster:03d}"
        cands = (McqCandidate(f"A photo of a {present_pair[0]}", "affirmation"),
                 McqCandidate(f"Not a photo of a {present_pair[0]}", "negation"))
        binary_items.append(McqItem(image_id, cands, side))

    diversity = [{"query_id": f"div-{x}",
                  "caption": f"An image but not a photo of a {x}"} for x in orth]

    # every emitted caption must decompose onto stored anchors
    stored = {it.caption for it in text_items}
    captions = ([t.caption for t in tasks]
                + [c.text for it in mcq_items + binary_items for c in it.candidates]
                + [d["caption"] for d in diversity])
    for caption in captions:
        parts = decompose_rules(caption)
        for part in filter(None, (parts.affirmative, parts.negated)):
            if part not in stored:
                raise AssertionError(f"caption part {part!r} missing from text store "
                                     f"(from {caption!r})")

    params = {
        "labels": labels,
        "dim": dim,
        "spread": spread,
        "points_per_cluster": points_per_cluster,
        "seed": seed,
        "t_gen": t_gen,
        "adjacent_angle": rho,
        "separation_threshold": sep_threshold,
        "min_inter_center_angle": min_angle,
    }
    return PlantedBenchmark(
        params=params,
        image_store=image_store,
        text_store=text_store,
        text_anchors={x: centers[x] for x in labels},
        retrieval_tasks=tasks,
        mcq_items=mcq_items,
        binary_mcq_items=binary_items,
        diversity_queries=diversity,
    )


def _jsonl(rows: list[dict]) -> str:
    return "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows)


def emit_benchmark(bench: PlantedBenchmark, out_dir) -> dict[str, Path]:
    """Write all benchmark files; byte-identical for identical seeds."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "image_vectors": out / "images.svec",
        "image_manifest": out / "images.json",
        "text_vectors": out / "texts.svec",
        "text_manifest": out / "texts.json",
        "retrieval_tasks": out / "retrieval.jsonl",
        "mcq_items": out / "mcq.jsonl",
        "binary_mcq_items": out / "mcq_binary.jsonl",
        "diversity": out / "diversity.jsonl",
        "divisibility": out / "divisibility.csv",
        "params": out / "params.json",
    }
    write_store(bench.image_store, paths["image_vectors"], paths["image_manifest"])
    write_store(bench.text_store, paths["text_vectors"], paths["text_manifest"])
    atomic_write_text(paths["retrieval_tasks"], _jsonl([
        {"query_id": t.query_id, "caption": t.caption,
         "relevant_ids": sorted(t.relevant_ids), "is_negated": t.is_negated}
        for t in bench.retrieval_tasks]))
    for key, items in (("mcq_items", bench.mcq_items),
                       ("binary_mcq_items", bench.binary_mcq_items)):
        atomic_write_text(paths[key], _jsonl([
            {"image_id": it.image_id,
             "candidates": [{"text": c.text, "template": c.template}
                            for c in it.candidates],
             "answer": it.answer_index}
            for it in items]))
    atomic_write_text(paths["diversity"], _jsonl(bench.diversity_queries))
    atomic_write_text(paths["divisibility"], histogram_csv(
        divisibility_histogram(bench.image_store, bench.text_anchors)))
    atomic_write_text(paths["params"],
                      json.dumps(bench.params, ensure_ascii=False, indent=2) + "\n")
    return paths


# --- divisibility histograms ---

_BIN_EDGES = np.round(np.arange(-1.0, 1.0 + 1e-9, 0.02), 10)


def divisibility_histogram(store: EmbeddingStore,
                           text_anchors: dict[str, np.ndarray]) -> list[dict]:
    """Cosine-similarity histograms showing per-concept cluster structure.

    For every anchor label: (a) pairwise cosines among images whose primary
    label matches, and (b) cosines between the label's text anchor and
    those images. Binned over [-1, 1] in 0.02 steps.
    """
    rows = []
    for label, anchor in text_anchors.items():
        idx = [i for i, it in enumerate(store.items)
               if it.labels and it.labels[0] == label]
        if not idx:
            raise UnknownLabel(label)
        pts = np.asarray(store.vectors[idx], dtype=np.float64)
        gram = pts @ pts.T
        iu = np.triu_indices(len(idx), k=1)
        intra = gram[iu] if len(idx) > 1 else np.empty(0)
        anchor = np.asarray(anchor, dtype=np.float64)
        anchor = anchor / np.linalg.norm(anchor)
        t2i = pts @ anchor
        for kind, values in (("intra", intra), ("text2img", t2i)):
            counts, _ = np.histogram(np.clip(values, -1.0, 1.0), bins=_BIN_EDGES)
            for b, count in enumerate(counts):
                if count:
                    rows.append({"kind": kind, "label": label,
                                 "bin_left": float(_BIN_EDGES[b]),
                                 "bin_right": float(_BIN_EDGES[b + 1]),
                                 "count": int(count)})
    return rows


def histogram_csv(rows: list[dict]) -> str:
    lines = ["kind,label,bin_left,bin_right,count"]
    for r in rows:
        lines.append(f"{r['kind']},{r['label']},{r['bin_left']:.2f},"
                     f"{r['bin_right']:.2f},{r['count']}")
    return "\n".join(lines) + "\n"
