"""Command-line extraction into the SVEC store format."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .pipeline import ExtractionJob, run_extraction


def _read_listing(path) -> list[str]:
    return [line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines()
            if line.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="svec-extract",
        description="encode images, captions, or videos into an SVEC store")
    p.add_argument("--model", default="openai/clip-vit-base-patch32",
                   help='checkpoint id, or "stub" for the deterministic test encoder')
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--images", help="file listing one image path per line")
    src.add_argument("--image-dir", help="directory of images (sorted by name)")
    src.add_argument("--captions", help="file with one caption per line")
    src.add_argument("--videos", help="file listing one video path per line")
    p.add_argument("--frames", type=int, default=8,
                   help="uniformly sampled frames per video (default 8)")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--device", default="cpu")
    p.add_argument("--stub-dim", type=int, default=64,
                   help="embedding dim of the stub encoder")
    p.add_argument("--labels-file",
                   help="optional file of comma-separated labels, aligned "
                        "line-by-line with the inputs")
    p.add_argument("--out-vectors", required=True)
    p.add_argument("--out-manifest", required=True)
    return p


IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".webp"}


def job_from_args(args) -> ExtractionJob:
    image_paths, captions, video_paths = [], [], []
    if args.images:
        image_paths = [Path(x) for x in _read_listing(args.images)]
    elif args.image_dir:
        image_paths = sorted(p for p in Path(args.image_dir).iterdir()
                             if p.suffix.lower() in IMAGE_SUFFIXES)
    elif args.captions:
        captions = _read_listing(args.captions)
    else:
        video_paths = [Path(x) for x in _read_listing(args.videos)]
    labels = None
    if args.labels_file:
        labels = [[x.strip() for x in line.split(",") if x.strip()]
                  for line in _read_listing(args.labels_file)]
    return ExtractionJob(model_id=args.model,
                         out_vectors=Path(args.out_vectors),
                         out_manifest=Path(args.out_manifest),
                         image_paths=image_paths, captions=captions,
                         video_paths=video_paths,
                         frames_per_video=args.frames,
                         batch_size=args.batch_size, device=args.device,
                         labels=labels)


def dispatch(argv) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        job = job_from_args(args)
        if args.model == "stub":
            from .encoders import StubEncoder

            count = run_extraction(job, encoder=StubEncoder(dim=args.stub_dim))
        else:
            count = run_extraction(job)
        print(f"wrote {count} rows -> {args.out_vectors}")
        return 0
    except (OSError, ValueError) as exc:
        print(f"svec-extract: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
