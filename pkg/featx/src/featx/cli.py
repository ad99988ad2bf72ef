"""featx command line: images directory in, corpus matrix files out."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .extract import extract, manifest_for_directory
from .network import FeatureExtractor


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="featx",
        description="Extract per-image features and class posteriors into "
        "the corpus matrix file format.",
    )
    parser.add_argument("--images", type=Path, required=True, help="image directory")
    parser.add_argument("--out-features", type=Path, required=True)
    parser.add_argument("--out-posteriors", type=Path, required=True)
    parser.add_argument(
        "--roles", type=Path, default=None,
        help="class-role sidecar (default: bundled 61 food + 6 container table)",
    )
    parser.add_argument(
        "--weights", type=Path, default=None,
        help="local network state-dict; omitted: deterministic untrained init",
    )
    parser.add_argument("--init-seed", type=int, default=0)
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument(
        "--manifest", type=Path, default=None,
        help="where to write the manifest report (default: OUT_FEATURES.manifest.json)",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        extractor = FeatureExtractor(
            weights_path=args.weights, init_seed=args.init_seed, threads=args.threads
        )
        manifest = manifest_for_directory(
            args.images, args.out_features, args.out_posteriors, extractor
        )
        report = extract(
            manifest, extractor, roles_path=args.roles, batch_size=args.batch_size
        )
    except FileNotFoundError as exc:
        print(f"featx: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"featx: {exc}", file=sys.stderr)
        return 1
    manifest_path = args.manifest or Path(f"{args.out_features}.manifest.json")
    manifest_path.write_text(report.to_json(), encoding="utf-8")
    print(
        f"extracted {report.n_images} images "
        f"({len(report.failed)} undecodable) with {report.manifest.network}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
