"""Command-line entry point.

One subcommand per capability; all inputs and outputs are files (or
stdout), runs are deterministic given identical inputs and seeds, and
output files are written atomically. Exit status: 0 on success, 1 on
usage errors, 2 on data or runtime errors (diagnostics on stderr).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, analysis, synth
from .decompose import DecomposerConfig, decompose
from .errors import NegspaceError
from .evalengine import (
    MODES,
    EngineConfig,
    load_mcq_items,
    load_retrieval_tasks,
    report_to_json,
    run_mcq_eval,
    run_retrieval_eval,
    store_text_embedder,
)
from .sphere import VARIANT_SLERP_CENTER, VARIANTS
from .store import atomic_write_text, read_store

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _emit(text: str, out_path) -> None:
    if out_path is None:
        sys.stdout.write(text)
    else:
        atomic_write_text(out_path, text)


def _int_list(raw: str) -> tuple[int, ...]:
    return tuple(int(x) for x in raw.split(","))


def _add_scoring_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--t", type=float, default=0.92,
                   help="cosine threshold (default 0.92)")
    p.add_argument("--variant", choices=VARIANTS, default=VARIANT_SLERP_CENTER)
    p.add_argument("--mode", choices=MODES, default="subspace")
    p.add_argument("--threads", type=int, default=1)


def _add_store_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--store", required=True, help="image/corpus vector file")
    p.add_argument("--manifest", required=True, help="corpus manifest")
    p.add_argument("--text-store", required=True, help="text-anchor vector file")
    p.add_argument("--text-manifest", required=True, help="text-anchor manifest")


def _decomposer_config(args) -> DecomposerConfig:
    return DecomposerConfig(
        backend=getattr(args, "backend", "rules"),
        endpoint=getattr(args, "endpoint", None),
        cache_path=getattr(args, "cache", None),
        timeout=getattr(args, "timeout", 10.0),
        retries=getattr(args, "retries", 2),
    )


def _engine_config(args) -> EngineConfig:
    return EngineConfig(t=args.t, variant=args.variant, mode=args.mode,
                        k_list=getattr(args, "k", (1, 5, 10)),
                        threads=args.threads,
                        decomposer=_decomposer_config(args))


def _full_config_echo(args, seed=None) -> dict:
    return {"mode": args.mode, "k_list": list(getattr(args, "k", (1, 5, 10))),
            "threads": args.threads, "seed": seed, "version": __version__}


def build_parser() -> _Parser:
    parser = _Parser(prog="negspace",
                     description="negation-aware embedding-space query engine")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("store-info", parents=[], help="inspect a vector store")
    p.add_argument("--store", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")

    p = sub.add_parser("decompose", help="split a caption into parts")
    p.add_argument("--caption", required=True)
    p.add_argument("--backend", choices=["rules", "remote"], default="rules")
    p.add_argument("--endpoint")
    p.add_argument("--cache")
    p.add_argument("--timeout", type=float, default=10.0)
    p.add_argument("--retries", type=int, default=2)
    p.add_argument("--out")

    for name, help_text in (("retrieve", "run a retrieval evaluation"),
                            ("mcq", "run an MCQ evaluation")):
        p = sub.add_parser(name, help=help_text)
        _add_store_flags(p)
        p.add_argument("--tasks", required=True)
        p.add_argument("--k", type=_int_list, default=(1, 5, 10),
                       help="comma-separated K values (retrieval only)")
        _add_scoring_flags(p)
        p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="threshold sensitivity sweep")
    _add_store_flags(p)
    p.add_argument("--tasks", required=True)
    p.add_argument("--metric", default="mcq-average",
                   help='"mcq-average" or "recall@K"')
    p.add_argument("--t-min", type=float, default=0.90)
    p.add_argument("--t-max", type=float, default=0.95)
    p.add_argument("--steps", type=int, default=6)
    p.add_argument("--k", type=_int_list, default=(1, 5, 10))
    _add_scoring_flags(p)
    p.add_argument("--out", required=True, help="JSON result path")
    p.add_argument("--out-csv", help="optional CSV curve path")

    p = sub.add_parser("entropy", help="top-K label-diversity entropy")
    _add_store_flags(p)
    p.add_argument("--tasks", required=True, help="JSONL with caption fields")
    p.add_argument("--top-k", type=int, default=5)
    _add_scoring_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--out-csv")

    p = sub.add_parser("synth", help="generate a planted benchmark")
    p.add_argument("--labels", default="10",
                   help="label count or comma-separated label names")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--spread", type=float, default=0.08)
    p.add_argument("--points", type=int, default=16)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--t-gen", type=float, default=0.97)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("margin",
                       help="single-direction separation margin demonstration")
    p.add_argument("--m", type=_int_list, default=(10, 100, 1000, 10000))
    p.add_argument("--dim", type=int, default=512)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--orthonormal", action="store_true",
                   help="use exactly orthonormal vectors (m <= dim)")
    p.add_argument("--out")

    p = sub.add_parser("export-query", help="export a caption's scoring vector")
    p.add_argument("--text-store", required=True)
    p.add_argument("--text-manifest", required=True)
    p.add_argument("--caption", required=True)
    _add_scoring_flags(p)
    p.add_argument("--out-vectors", required=True)
    p.add_argument("--out-manifest", required=True)

    return parser


def _cmd_store_info(args) -> int:
    store = read_store(args.store, args.manifest)
    norms = np.sqrt(np.einsum("ij,ij->i", store.vectors, store.vectors,
                              dtype=np.float64)) if store.count else np.zeros(0)
    doc = {
        "dim": store.dim,
        "count": store.count,
        "ids_sample": store.ids()[:5],
        "labels_present": sorted({lab for it in store.items for lab in it.labels})[:20],
        "max_norm_deviation": float(np.abs(norms - 1.0).max()) if store.count else 0.0,
    }
    _emit(json.dumps(doc, ensure_ascii=False, indent=2) + "\n", args.out)
    return EXIT_OK


def _cmd_decompose(args) -> int:
    result = decompose(args.caption, _decomposer_config(args))
    _emit(json.dumps(result.to_dict(), ensure_ascii=False, indent=2) + "\n", args.out)
    return EXIT_OK


def _load_pair(args):
    corpus = read_store(args.store, args.manifest)
    texts = read_store(args.text_store, args.text_manifest)
    return corpus, store_text_embedder(texts)


def _cmd_retrieve(args) -> int:
    corpus, embedder = _load_pair(args)
    tasks = load_retrieval_tasks(args.tasks)
    report = run_retrieval_eval(tasks, corpus, embedder, _engine_config(args))
    _emit(report_to_json(report, _full_config_echo(args)), args.out)
    return EXIT_OK


def _cmd_mcq(args) -> int:
    corpus, embedder = _load_pair(args)
    items = load_mcq_items(args.tasks)
    report = run_mcq_eval(items, corpus, embedder, _engine_config(args))
    _emit(report_to_json(report, _full_config_echo(args)), args.out)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    corpus, embedder = _load_pair(args)
    if args.metric == "mcq-average":
        tasks = load_mcq_items(args.tasks)
    else:
        tasks = load_retrieval_tasks(args.tasks)
    result = analysis.threshold_sweep(tasks, corpus, embedder, args.t_min,
                                      args.t_max, args.steps,
                                      _engine_config(args), metric=args.metric)
    _emit(analysis.sweep_json(result), args.out)
    if args.out_csv:
        atomic_write_text(args.out_csv, analysis.sweep_csv(result))
    return EXIT_OK


def _cmd_entropy(args) -> int:
    corpus, embedder = _load_pair(args)
    rows = [json.loads(line) for line in
            Path(args.tasks).read_text(encoding="utf-8").splitlines() if line.strip()]
    captions = [r["caption"] for r in rows]
    rankings = analysis.rank_queries(captions, corpus, embedder,
                                     _engine_config(args))
    report = analysis.topk_entropy(rankings, corpus, args.top_k)
    echo = {"t": args.t, "variant": args.variant, **_full_config_echo(args)}
    _emit(analysis.entropy_json(report, echo), args.out)
    if args.out_csv:
        atomic_write_text(args.out_csv, analysis.entropy_csv(report))
    return EXIT_OK


def _cmd_synth(args) -> int:
    raw = args.labels
    if raw.isdigit():
        labels = synth.default_labels(int(raw))
    else:
        labels = [x.strip() for x in raw.split(",") if x.strip()]
    bench = synth.build_benchmark(labels, dim=args.dim, spread=args.spread,
                                  points_per_cluster=args.points,
                                  seed=args.seed, t_gen=args.t_gen)
    paths = synth.emit_benchmark(bench, args.out_dir)
    listing = {k: str(v) for k, v in paths.items()}
    sys.stdout.write(json.dumps(listing, indent=2) + "\n")
    return EXIT_OK


def _cmd_margin(args) -> int:
    rows = []
    for m in args.m:
        w = synth.margin_empirical(m, args.dim, args.trials, args.seed,
                                   orthonormal=args.orthonormal)
        rows.append({"m": w.m, "gamma": round(w.gamma, 6),
                     "bound": round(w.bound, 6),
                     "empirical_best_margin": round(w.empirical_best_margin, 6)})
    doc = {"dim": args.dim, "trials": args.trials, "seed": args.seed,
           "orthonormal": args.orthonormal, "results": rows,
           "version": __version__}
    _emit(json.dumps(doc, ensure_ascii=False, indent=2) + "\n", args.out)
    return EXIT_OK


def _cmd_export_query(args) -> int:
    texts = read_store(args.text_store, args.text_manifest)
    embedder = store_text_embedder(texts)
    analysis.export_query_vector(args.caption, embedder, _engine_config(args),
                                 args.out_vectors, args.out_manifest)
    return EXIT_OK


_COMMANDS = {
    "store-info": _cmd_store_info,
    "decompose": _cmd_decompose,
    "retrieve": _cmd_retrieve,
    "mcq": _cmd_mcq,
    "sweep": _cmd_sweep,
    "entropy": _cmd_entropy,
    "synth": _cmd_synth,
    "margin": _cmd_margin,
    "export-query": _cmd_export_query,
}


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (NegspaceError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"negspace {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
