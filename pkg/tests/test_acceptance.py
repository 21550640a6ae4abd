"""End-to-end acceptance criteria for the engine.

Each test covers one criterion at its stated tolerance and prints a
PASS line (visible with ``pytest tests/test_acceptance.py -v -s``).
All expected values were derived with independent oracles (dense arc
sampling, exhaustive scoring, direct formula evaluation) and frozen here.
"""

import math
import time

import numpy as np
import pytest

from negspace import analysis
from negspace.evalengine import (
    EngineConfig,
    MODE_AFFIRMATIVE_ONLY,
    MODE_FULL_CAPTION,
    RetrievalQuery,
    rank,
    report_to_json,
    run_mcq_eval,
    run_retrieval_eval,
    store_text_embedder,
)
from negspace.sphere import (
    VARIANT_MIRROR,
    angle_between,
    feasible_arc_centroid_oracle,
    negation_direction,
    negation_query,
    normalize,
)
from negspace.store import EmbeddingStore, StoreItem, read_store, write_store
from negspace.synth import build_benchmark, default_labels, margin_empirical

# Values derived and frozen before locking the thresholds (exhaustive
# scoring of the seeded benchmark; see the planted-benchmark tests).
BENCH_SEED = 7
FROZEN_BASELINE_NEGATION_ACC = 0.5
FROZEN_SWEEP_MAX_DROP = 0.0


def _pass(name, detail=""):
    suffix = f" ({detail})" if detail else ""
    print(f"\nACCEPTANCE {name}: PASS{suffix}")


def _pair_at_angle(rng, dim, theta):
    a = normalize(rng.standard_normal(dim))
    w = rng.standard_normal(dim)
    w -= (w @ a) * a
    w /= np.linalg.norm(w)
    return a, math.cos(theta) * a + math.sin(theta) * w


@pytest.fixture(scope="module")
def bench():
    return build_benchmark(default_labels(10), dim=64, spread=0.08,
                           points_per_cluster=16, seed=BENCH_SEED)


@pytest.fixture(scope="module")
def bench_embedder(bench):
    return store_text_embedder(bench.text_store)


def test_geometry_suite():
    rng = np.random.default_rng(1234)
    start = time.perf_counter()
    dims = [2, 8, 512]
    for i in range(1000):
        dim = dims[i % 3]
        theta = float(rng.uniform(2e-4, math.pi - 2e-4))
        t = float(rng.uniform(-0.999, 0.999))
        a, n = _pair_at_angle(rng, dim, theta)
        d = negation_direction(a, n, t)
        assert abs(float(np.linalg.norm(d)) - 1.0) <= 1e-9
        b = n - (n @ a) * a
        b /= np.linalg.norm(b)
        resid = d - (d @ a) * a - (d @ b) * b
        assert float(np.linalg.norm(resid)) <= 1e-9
    # alpha = theta/2 hands back the affirmative embedding for both variants
    for i in range(50):
        dim = dims[i % 3]
        theta = float(rng.uniform(1e-2, math.pi - 1e-2))
        a, n = _pair_at_angle(rng, dim, theta)
        t_boundary = math.cos(angle_between(a, n) / 2.0)
        for variant in ("slerp-center", VARIANT_MIRROR):
            d = negation_direction(a, n, t_boundary, variant)
            assert float(np.linalg.norm(d - a)) <= 1e-9
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    _pass("geometry-suite", f"1000 triples + 50 boundary cases in {elapsed:.2f}s")


def test_oracle_equivalence():
    rng = np.random.default_rng(4321)
    slerp_devs, mirror_devs = [], []
    for _ in range(200):
        t = float(rng.uniform(0.5, 0.99))
        alpha = math.acos(t)
        theta = float(rng.uniform(1e-3, 1.999 * alpha))  # overlapping caps
        a, n = _pair_at_angle(rng, 8, theta)
        mid = feasible_arc_centroid_oracle(a, n, t, samples=100_000)
        assert mid is not None
        slerp_devs.append(angle_between(mid, negation_direction(a, n, t)))
        mirror_devs.append(
            angle_between(mid, negation_direction(a, n, t, VARIANT_MIRROR)))
    assert max(slerp_devs) < 1e-5
    # the sum-form variant is documented, not asserted: its deviation shows
    # how far the mirrored combination sits from the true region center
    _pass("oracle-equivalence",
          f"slerp-center max dev {max(slerp_devs):.2e} rad; mirror variant "
          f"mean dev {np.mean(mirror_devs):.4f} rad, max {max(mirror_devs):.4f} rad")


def test_affirmative_passthrough():
    rng = np.random.default_rng(99)
    n_items, n_queries, dim = 400, 1000, 32
    rows = rng.standard_normal((n_items, dim))
    corpus = EmbeddingStore(
        (rows / np.linalg.norm(rows, axis=1, keepdims=True)).astype(np.float32),
        [StoreItem(f"img-{i:04d}") for i in range(n_items)])
    captions = [f"synthetic caption number {i}" for i in range(n_queries)]
    trows = rng.standard_normal((n_queries, dim))
    texts = EmbeddingStore(
        (trows / np.linalg.norm(trows, axis=1, keepdims=True)).astype(np.float32),
        [StoreItem(f"txt-{i:04d}", caption=captions[i]) for i in range(n_queries)])
    embedder = store_text_embedder(texts)
    tasks = [RetrievalQuery(f"q-{i:04d}", captions[i],
                            frozenset({f"img-{rng.integers(n_items):04d}"}), False)
             for i in range(n_queries)]
    report_engine = run_retrieval_eval(tasks, corpus, embedder,
                                       EngineConfig(mode="subspace"))
    report_baseline = run_retrieval_eval(tasks, corpus, embedder,
                                         EngineConfig(mode=MODE_AFFIRMATIVE_ONLY))
    json_engine = report_to_json(report_engine)
    json_baseline = report_to_json(report_baseline)
    assert json_engine.encode() == json_baseline.encode()
    _pass("affirmative-passthrough",
          f"{n_queries} negation-free queries, reports bit-identical")


def test_margin_demonstration():
    start = time.perf_counter()
    witnesses = [margin_empirical(m, 512, trials=100, seed=2024)
                 for m in (10, 100, 1000, 10000)]
    for w in witnesses:  # MarginWitness construction enforces <= bound + 1e-6
        assert w.empirical_best_margin <= w.bound + 1e-6
    margins = [w.empirical_best_margin for w in witnesses]
    for lo, hi in zip(margins[1:], margins[:-1]):
        assert lo <= hi + 0.02  # non-increasing within sampling noise
    # near-orthogonal construction: gamma = 0, bound 1/sqrt(m), reached exactly
    for m in (10, 100, 256):
        w = margin_empirical(m, 512, trials=20, seed=2024, orthonormal=True)
        assert w.gamma <= 1e-12
        assert w.empirical_best_margin <= 1.0 / math.sqrt(m) + 1e-6
        assert w.empirical_best_margin == pytest.approx(1.0 / math.sqrt(m), abs=1e-9)
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    trend = ", ".join(f"m={w.m}: {w.empirical_best_margin:.4f}<={w.bound:.4f}"
                      for w in witnesses)
    _pass("margin-demonstration", f"{trend}; {elapsed:.1f}s")


def test_planted_benchmark_negation_gains(bench, bench_embedder):
    cfg = EngineConfig(t=0.92)
    retrieval = run_retrieval_eval(bench.retrieval_tasks, bench.image_store,
                                   bench_embedder, cfg)
    assert retrieval.recall_at_k["negated"][1] == 1.0
    mcq = run_mcq_eval(bench.mcq_items, bench.image_store, bench_embedder, cfg)
    assert mcq.mcq_accuracy["negation"] == 1.0
    baseline = run_mcq_eval(bench.mcq_items, bench.image_store, bench_embedder,
                            EngineConfig(t=0.92, mode=MODE_AFFIRMATIVE_ONLY))
    assert baseline.mcq_accuracy["negation"] <= 0.5
    assert baseline.mcq_accuracy["negation"] == FROZEN_BASELINE_NEGATION_ACC
    _pass("planted-benchmark-negation-gains",
          f"R@1-Neg=1.00, MCQ negation=1.00, baseline negation="
          f"{baseline.mcq_accuracy['negation']:.2f}")


def test_threshold_robustness(bench, bench_embedder):
    result = analysis.threshold_sweep(bench.mcq_items, bench.image_store,
                                      bench_embedder, 0.90, 0.95, 6,
                                      EngineConfig(), metric="mcq-average")
    best = max(result.metric_per_t)
    relative_drop = result.max_drop / best if best else 0.0
    assert relative_drop <= 0.05
    assert result.max_drop <= FROZEN_SWEEP_MAX_DROP + 1e-12  # frozen regression bound
    _pass("threshold-robustness",
          f"6-step sweep over [0.90, 0.95], max drop {result.max_drop:.4f}")


def test_entropy_trends(bench, bench_embedder):
    captions = [q["caption"] for q in bench.diversity_queries]
    means = {}
    for t in (0.99, 0.90, 0.70):
        sub = analysis.rank_queries(captions, bench.image_store, bench_embedder,
                                    EngineConfig(t=t))
        van = analysis.rank_queries(captions, bench.image_store, bench_embedder,
                                    EngineConfig(t=t, mode=MODE_FULL_CAPTION))
        sub_e = analysis.topk_entropy(sub, bench.image_store, 5).mean_entropy
        van_e = analysis.topk_entropy(van, bench.image_store, 5).mean_entropy
        assert sub_e >= van_e
        means[t] = sub_e
    assert means[0.99] <= means[0.90] <= means[0.70]
    _pass("entropy-trends",
          f"mean top-5 entropy {means[0.99]:.2f} -> {means[0.90]:.2f} -> "
          f"{means[0.70]:.2f} bits as t drops")


def test_performance(tmp_path):
    import gc

    rng = np.random.default_rng(0)
    n, dim = 100_000, 512
    rows = rng.standard_normal((n, dim)).astype(np.float32)
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    store = EmbeddingStore(rows, [StoreItem(f"item-{i:06d}") for i in range(n)])
    write_store(store, tmp_path / "big.svec", tmp_path / "big.json")
    del rows, store  # free construction buffers before timing
    gc.collect()

    # best-of-5 to suppress scheduler noise, as timeit does
    load_times, rank_times = [], []
    query = negation_query(rng.standard_normal(dim))
    back = None
    for _ in range(5):
        del back
        gc.collect()
        t0 = time.perf_counter()
        back = read_store(tmp_path / "big.svec", tmp_path / "big.json")
        load_times.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        ranking = rank(query, back)
        rank_times.append(time.perf_counter() - t0)
        assert len(ranking) == n
        del ranking
    assert min(load_times) < 0.5
    assert min(rank_times) < 1.0
    _pass("performance",
          f"100k x 512: load {min(load_times):.3f}s, rank {min(rank_times):.3f}s")


def test_format_round_trip(tmp_path):
    rng = np.random.default_rng(2718)
    for case in range(100):
        dim = int(rng.integers(2, 64))
        count = int(rng.integers(0, 50))
        rows = rng.standard_normal((count, dim))
        if count:
            rows /= np.linalg.norm(rows, axis=1, keepdims=True)
        items = [StoreItem(f"c{case}-{i}",
                           tuple(f"l{j}" for j in range(int(rng.integers(0, 3)))),
                           None if rng.integers(2) else f"caption {case}/{i}")
                 for i in range(count)]
        store = EmbeddingStore(rows.astype(np.float32), items)
        vp, mp = tmp_path / f"{case}.svec", tmp_path / f"{case}.json"
        write_store(store, vp, mp)
        back = read_store(vp, mp)
        np.testing.assert_array_equal(back.vectors, store.vectors)
        assert back.items == store.items
        write_store(back, tmp_path / "again.svec", tmp_path / "again.json")
        assert (tmp_path / "again.svec").read_bytes() == vp.read_bytes()
        assert (tmp_path / "again.json").read_bytes() == mp.read_bytes()
    _pass("format-round-trip", "100 randomized stores, 32-bit exact")


@pytest.mark.skipif("not config.getoption('--real-data', default=None)",
                    reason="real-model spot check needs extracted checkpoint "
                           "embeddings (pass --real-data DIR with stores "
                           "produced by the extractor)")
def test_real_model_spot_check(request):
    """Optional: CLIP ViT-B/32 embeddings on COCO-style MCQ should move the
    average accuracy from roughly 0.392 to roughly 0.663 (+-0.03)."""
    from negspace.evalengine import load_mcq_items

    data = request.config.getoption("--real-data")
    corpus = read_store(f"{data}/images.svec", f"{data}/images.json")
    texts = read_store(f"{data}/texts.svec", f"{data}/texts.json")
    items = load_mcq_items(f"{data}/mcq.jsonl")
    embedder = store_text_embedder(texts)
    base = run_mcq_eval(items, corpus, embedder,
                        EngineConfig(t=0.92, mode=MODE_FULL_CAPTION))
    ours = run_mcq_eval(items, corpus, embedder, EngineConfig(t=0.92))
    assert base.mcq_accuracy["average"] == pytest.approx(0.392, abs=0.03)
    assert ours.mcq_accuracy["average"] == pytest.approx(0.663, abs=0.03)
    _pass("real-model-spot-check")
