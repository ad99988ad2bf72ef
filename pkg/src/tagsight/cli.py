"""Command-line surface for the tag-visualness pipeline.

Every command reads the corpus files named by flags, writes its outputs
into --out, and drops a manifest.json recording the configuration hash,
seed, and per-stage timings.  Data outputs (CSV/JSON) are byte-identical
across re-runs with the same configuration; SVG plots are not held to
that.

Exit codes: 0 success, 1 validation/usage error, 2 data error, 3 internal.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import corr, geo, linsvm, noise, plots, report, synth, visualness
from ._util import fmt
from .corpus import build_tag_index, ingest, save_matrix, save_metadata
from .errors import DataError, TagsightError, ValidationError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """argparse variant whose usage errors exit with the validation code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_VALIDATION)


class _Stages:
    """Collects wall-clock timings per pipeline stage."""

    def __init__(self):
        self.timings: dict[str, float] = {}

    @contextmanager
    def stage(self, name: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + (
                time.perf_counter() - start
            )


def _configure_logging() -> None:
    level_name = os.environ.get("TAGSIGHT_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config_dict(args) -> dict:
    config = {}
    for key, value in sorted(vars(args).items()):
        if key in ("func", "command"):
            continue
        config[key] = str(value) if isinstance(value, Path) else value
    return config


def _write_manifest(args, stages: _Stages, outputs: list[str]) -> None:
    out = _out_dir(args)
    config = _config_dict(args)
    digest = hashlib.sha256(
        json.dumps({"command": args.command, "config": config}, sort_keys=True).encode()
    ).hexdigest()
    manifest = {
        "command": args.command,
        "config": config,
        "config_hash": digest,
        "seed": config.get("seed"),
        "timings_s": {k: round(v, 6) for k, v in stages.timings.items()},
        "outputs": sorted(outputs),
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="\n")


def _load_corpus(args, need_posteriors: bool = False):
    posterior_path = getattr(args, "posteriors", None)
    if need_posteriors and posterior_path is None:
        raise ValidationError("this command requires --posteriors")
    corpus, ingest_report = ingest(args.metadata, args.features, posterior_path)
    logger.info(
        "loaded %d posts (%d malformed, %d duplicate ids)",
        ingest_report.posts,
        ingest_report.malformed,
        ingest_report.duplicate_ids,
    )
    return corpus, ingest_report


def _experiment_config(args) -> visualness.ExperimentConfig:
    return visualness.ExperimentConfig(
        neg_ratio=args.neg_ratio,
        test_fraction=args.test_fraction,
        k=args.k,
        seed=args.seed,
    )


def _filter_spec(args) -> noise.FilterSpec:
    if args.filter and args.container:
        raise ValidationError("--filter and --container are mutually exclusive")
    if args.filter:
        return noise.FilterSpec(
            mode="prune", classes=tuple(args.filter), threshold=args.threshold
        )
    if args.container:
        return noise.FilterSpec(
            mode="focus", classes=tuple(args.container), threshold=args.threshold
        )
    return noise.FilterSpec()


def _slug(name: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in name.lower()).strip("_")


# ---------------------------------------------------------------------------
# Commands


def cmd_ingest(args) -> int:
    stages = _Stages()
    with stages.stage("load"):
        corpus, ingest_report = _load_corpus(args)
    out = _out_dir(args)
    distinct_tags = len({t for p in corpus.posts for t in p.tags})
    summary = {
        "posts": ingest_report.posts,
        "matrix_rows": corpus.n_rows,
        "feature_dim": corpus.features.d,
        "posterior_classes": corpus.posteriors.k if corpus.posteriors else None,
        "distinct_tags": distinct_tags,
        "lines_total": ingest_report.lines_total,
        "malformed": ingest_report.malformed,
        "malformed_lines": ingest_report.malformed_lines,
        "duplicate_ids": ingest_report.duplicate_ids,
        "invalid_geotags": ingest_report.invalid_geotags,
        "rejected_tags": ingest_report.rejected_tags,
    }
    with stages.stage("write"):
        _write_text(
            out / "ingest_summary.json",
            json.dumps(summary, indent=2, sort_keys=True) + "\n",
        )
    _write_manifest(args, stages, ["ingest_summary.json"])
    print(
        f"ingested {summary['posts']} posts "
        f"({summary['malformed']} malformed, {summary['duplicate_ids']} duplicates)"
    )
    return EXIT_OK


def _groundtruth_json(truth: synth.GroundTruth) -> str:
    payload = {
        "true_tag_rows": {t: rows.tolist() for t, rows in sorted(truth.true_tag_rows.items())},
        "fp_tag_rows": {t: rows.tolist() for t, rows in sorted(truth.fp_tag_rows.items())},
        "food_rows": truth.food_rows.tolist(),
        "container_confident_rows": truth.container_confident_rows.tolist(),
        "distractor_confident_rows": truth.distractor_confident_rows.tolist(),
        "food_confident_rows": truth.food_confident_rows.tolist(),
        "other_confident_rows": truth.other_confident_rows.tolist(),
        "continent_of_row": {str(k): v for k, v in sorted(truth.continent_of_row.items())},
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def cmd_synth(args) -> int:
    stages = _Stages()
    with stages.stage("load"):
        spec = synth.load_spec(args.spec)
        if args.seed is not None:
            spec = synth.SynthSpec(**{**spec.__dict__, "seed": args.seed})
    with stages.stage("generate"):
        corpus, truth = synth.generate(spec)
    out = _out_dir(args)
    with stages.stage("write"):
        save_metadata(corpus.posts, out / "metadata.jsonl")
        save_matrix(out / "features.tsgm", corpus.features.data)
        save_matrix(
            out / "posteriors.tsgm",
            corpus.posteriors.data,
            corpus.posteriors.class_names,
            corpus.posteriors.class_roles,
        )
        _write_text(out / "groundtruth.json", _groundtruth_json(truth))
    outputs = ["metadata.jsonl", "features.tsgm", "posteriors.tsgm", "groundtruth.json"]
    _write_manifest(args, stages, outputs)
    print(f"generated {len(corpus)} posts into {out}")
    return EXIT_OK


def cmd_bounds(args) -> int:
    stages = _Stages()
    with stages.stage("load"):
        corpus, _ = _load_corpus(args, need_posteriors=True)
    with stages.stage("compute"):
        bounds = noise.food_content_bounds(corpus, threshold=args.threshold)
    out = _out_dir(args)
    header = "n_total,n_confident_food_or_container,n_confident_nonfood,lower,upper,threshold"
    row = (
        f"{bounds.n_total},{bounds.n_confident_food_or_container},"
        f"{bounds.n_confident_nonfood},{fmt(bounds.lower)},{fmt(bounds.upper)},"
        f"{fmt(bounds.threshold)}"
    )
    with stages.stage("write"):
        _write_text(out / "bounds.csv", header + "\n" + row + "\n")
    _write_manifest(args, stages, ["bounds.csv"])
    print(f"lower {bounds.lower:.4f} upper {bounds.upper:.4f}")
    return EXIT_OK


def cmd_filter(args) -> int:
    stages = _Stages()
    spec = _filter_spec(args)
    if spec.mode == "none":
        raise ValidationError("give --filter CLASS or --container CLASS")
    with stages.stage("load"):
        corpus, _ = _load_corpus(args, need_posteriors=True)
    with stages.stage("compute"):
        view = spec.apply(corpus)
    out = _out_dir(args)
    lines = ["row,id"]
    for post in view.posts():
        lines.append(f"{post.row},{post.id}")
    summary = {
        "filter": spec.describe(),
        "n_before": len(corpus.full_view()),
        "n_after": len(view),
        "n_removed": len(corpus.full_view()) - len(view),
    }
    with stages.stage("write"):
        _write_text(out / "filtered_rows.csv", "\n".join(lines) + "\n")
        _write_text(
            out / "filter_summary.json",
            json.dumps(summary, indent=2, sort_keys=True) + "\n",
        )
    _write_manifest(args, stages, ["filtered_rows.csv", "filter_summary.json"])
    print(
        f"filter {summary['filter']}: kept {summary['n_after']} of "
        f"{summary['n_before']} posts ({summary['n_removed']} removed)"
    )
    return EXIT_OK


def cmd_train_tags(args) -> int:
    stages = _Stages()
    with stages.stage("load"):
        corpus, _ = _load_corpus(args)
        index = build_tag_index(corpus, args.top_k_tags)
    config = _experiment_config(args)
    out = _out_dir(args)
    models_dir = out / "models"
    models_dir.mkdir(exist_ok=True)

    rows = ["tag,file,n_pos,n_neg,epochs,objective"]
    skipped = ["tag,reason"]
    outputs = ["models.csv", "models_skipped.csv"]
    with stages.stage("train"):
        for rank, tag in enumerate(index.tags, start=1):
            try:
                dataset = visualness.assemble_tag_dataset(corpus, index, tag, config)
            except visualness.TagSkipped as skip:
                skipped.append(f"{tag},{skip.reason}")
                continue
            all_rows = np.concatenate([dataset.train.rows, dataset.test.rows])
            all_labels = np.concatenate([dataset.train.labels, dataset.test.labels])
            svm_config = linsvm.SvmConfig(
                seed=visualness.stable_seed(config.seed, tag, "train")
            )
            model = linsvm.train(
                corpus.features.data[all_rows].astype(np.float64), all_labels, svm_config
            )
            filename = f"models/{rank:04d}_{_slug(tag)}.tsvm"
            linsvm.save_model(model, out / filename, tol=svm_config.tol)
            rows.append(
                f"{tag},{filename},{dataset.n_pos},{dataset.n_neg},"
                f"{model.epochs_run},{fmt(model.final_objective)}"
            )
            outputs.append(filename)
    with stages.stage("write"):
        _write_text(out / "models.csv", "\n".join(rows) + "\n")
        _write_text(out / "models_skipped.csv", "\n".join(skipped) + "\n")
    _write_manifest(args, stages, outputs)
    print(f"trained {len(rows) - 1} tag models ({len(skipped) - 1} skipped)")
    return EXIT_OK


def cmd_rank(args) -> int:
    stages = _Stages()
    with stages.stage("load"):
        corpus, _ = _load_corpus(args)
        index = build_tag_index(corpus, args.top_k_tags)
        categories = (
            visualness.load_categories(args.categories) if args.categories else None
        )
    config = _experiment_config(args)
    with stages.stage("evaluate"):
        result = visualness.rank_visualness(
            corpus, index, index.tags, config, categories, workers=args.workers
        )
    out = _out_dir(args)
    skipped_lines = ["tag,reason"] + [f"{s.tag},{s.reason}" for s in result.skipped]
    with stages.stage("write"):
        _write_text(out / "visualness.csv", result.to_csv())
        _write_text(out / "visualness_skipped.csv", "\n".join(skipped_lines) + "\n")
        plots.visualness_distribution(result, out / "visualness.svg")
    _write_manifest(
        args, stages, ["visualness.csv", "visualness_skipped.csv", "visualness.svg"]
    )
    best = result.results[0]
    print(
        f"ranked {len(result.results)} tags; most visual: {best.tag} "
        f"({best.balanced_accuracy:.3f})"
    )
    return EXIT_OK


def cmd_geocode(args) -> int:
    stages = _Stages()
    with stages.stage("load"):
        corpus, _ = _load_corpus(args)
        atlas = geo.load_atlas(args.atlas)
    with stages.stage("geocode"):
        stats = geo.geocode_corpus(corpus, atlas, coastal_km=args.coastal_km)
    out = _out_dir(args)
    record_lines = ["row,id,lat,lon,country,continent,resolution"]
    for row in sorted(stats.records):
        rec = stats.records[row]
        post = corpus.post_for_row(row)
        record_lines.append(
            f"{row},{post.id},{fmt(rec.lat)},{fmt(rec.lon)},"
            f"{rec.country or ''},{rec.continent or ''},{rec.resolution}"
        )
    stat_lines = [
        "metric,value",
        f"n_posts,{stats.n_posts}",
        f"n_geotagged,{stats.n_geotagged}",
        f"n_resolved,{stats.n_resolved}",
        f"geotagged_fraction,{fmt(stats.geotagged_fraction)}",
        f"resolved_fraction,{fmt(stats.resolved_fraction)}",
    ]
    count_lines = ["kind,name,count"]
    for name, count in stats.country_counts.items():
        count_lines.append(f"country,{name},{count}")
    for name, count in stats.continent_counts.items():
        count_lines.append(f"continent,{name},{count}")
    with stages.stage("write"):
        _write_text(out / "geo_records.csv", "\n".join(record_lines) + "\n")
        _write_text(out / "geo_stats.csv", "\n".join(stat_lines) + "\n")
        _write_text(out / "geo_counts.csv", "\n".join(count_lines) + "\n")
        plots.geo_scatter(list(stats.records.values()), out / "geo_scatter.svg")
    _write_manifest(
        args,
        stages,
        ["geo_records.csv", "geo_stats.csv", "geo_counts.csv", "geo_scatter.svg"],
    )
    print(
        f"geotagged {stats.n_geotagged}/{stats.n_posts} "
        f"({stats.geotagged_fraction:.0%}), resolved {stats.n_resolved}"
    )
    return EXIT_OK


def cmd_breakdown(args) -> int:
    stages = _Stages()
    need_posteriors = args.label_source == "posterior"
    with stages.stage("load"):
        corpus, _ = _load_corpus(args, need_posteriors=need_posteriors)
        atlas = geo.load_atlas(args.atlas)
        visual_tags = None
        if args.tags_file:
            visual_tags = [
                line.strip()
                for line in Path(args.tags_file).read_text(encoding="utf-8").splitlines()
                if line.strip()
            ]
    with stages.stage("geocode"):
        stats = geo.geocode_corpus(corpus, atlas, coastal_km=args.coastal_km)
    source = (
        geo.LABEL_SOURCE_POSTERIOR
        if args.label_source == "posterior"
        else geo.LABEL_SOURCE_VISUAL_TAGS
    )
    with stages.stage("compute"):
        table = geo.continent_breakdown(
            corpus,
            stats,
            source,
            top_n=args.top_n,
            visual_tags=visual_tags,
            threshold=args.threshold,
        )
    out = _out_dir(args)
    lines = ["continent,rank,label,count"]
    for continent, entries in table.items():
        for rank, (label, count) in enumerate(entries, start=1):
            lines.append(f"{continent},{rank},{label},{count}")
    with stages.stage("write"):
        _write_text(out / "breakdown.csv", "\n".join(lines) + "\n")
    _write_manifest(args, stages, ["breakdown.csv"])
    overall = table.get(geo.OVERALL, [])
    if overall:
        print(f"overall top label: {overall[0][0]} ({overall[0][1]} posts)")
    else:
        print("no labels found")
    return EXIT_OK


def cmd_correlate(args) -> int:
    stages = _Stages()
    with stages.stage("load"):
        corpus, _ = _load_corpus(args)
        if args.tags_file:
            tags = [
                line.strip()
                for line in Path(args.tags_file).read_text(encoding="utf-8").splitlines()
                if line.strip()
            ]
        else:
            tags = list(build_tag_index(corpus, args.top_k_tags).tags)
    with stages.stage("compute"):
        matrix = corr.tag_phi_matrix(corpus, tags)
        positive = corr.top_correlations(matrix, args.top_pairs, "positive")
        negative = corr.top_correlations(matrix, args.top_pairs, "negative")
    out = _out_dir(args)
    outputs = [
        "corr_matrix.csv",
        "corr_top_positive.csv",
        "corr_top_negative.csv",
        "corr_heatmap.svg",
    ]

    def pair_csv(pairs):
        lines = ["tag_a,tag_b,phi"]
        for a, b, phi in pairs:
            lines.append(f"{a},{b},{fmt(phi)}")
        return "\n".join(lines) + "\n"

    with stages.stage("write"):
        _write_text(out / "corr_matrix.csv", corr.matrix_to_csv(matrix))
        _write_text(out / "corr_top_positive.csv", pair_csv(positive))
        _write_text(out / "corr_top_negative.csv", pair_csv(negative))
        plots.correlation_heatmap(matrix, out / "corr_heatmap.svg")

    if args.atlas is not None or args.per_continent:
        with stages.stage("geocode"):
            atlas = geo.load_atlas(args.atlas)
            stats = geo.geocode_corpus(corpus, atlas, coastal_km=args.coastal_km)
        with stages.stage("compute"):
            per_continent = corr.per_continent_correlations(
                corpus, stats, tags, min_posts=args.min_continent_posts
            )
        with stages.stage("write"):
            for continent, cmatrix in per_continent.items():
                filename = f"corr_continent_{_slug(continent)}.csv"
                _write_text(out / filename, corr.matrix_to_csv(cmatrix))
                outputs.append(filename)
    _write_manifest(args, stages, outputs)
    if positive:
        a, b, phi = positive[0]
        print(f"strongest positive correlation: {a} & {b} (phi {phi:.3f})")
    else:
        print("no positive correlations")
    return EXIT_OK


def cmd_report(args) -> int:
    stages = _Stages()
    spec = _filter_spec(args)
    if spec.mode == "none":
        raise ValidationError("give --filter CLASS or --container CLASS")
    with stages.stage("load"):
        corpus, _ = _load_corpus(args, need_posteriors=True)
        index = build_tag_index(corpus, args.top_k_tags)
    config = _experiment_config(args)
    with stages.stage("evaluate"):
        comparison = report.compare_conditions(
            corpus,
            spec,
            index,
            index.tags,
            config,
            top_n=args.top_n,
            workers=args.workers,
        )
    out = _out_dir(args)
    with stages.stage("write"):
        _write_text(out / "comparison.csv", comparison.to_csv())
    _write_manifest(args, stages, ["comparison.csv"])
    raw_mean, filtered_mean = comparison.top_means
    print(
        f"top-{comparison.top_n} mean accuracy: raw {raw_mean:.4f} -> "
        f"filtered {filtered_mean:.4f}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> _Parser:
    parser = _Parser(prog="tagsight", description=__doc__)

    corpus_parent = _Parser(add_help=False)
    corpus_parent.add_argument("--metadata", type=Path, required=True)
    corpus_parent.add_argument("--features", type=Path, required=True)
    corpus_parent.add_argument("--posteriors", type=Path, default=None)

    out_parent = _Parser(add_help=False)
    out_parent.add_argument("--out", type=Path, required=True)

    seed_parent = _Parser(add_help=False)
    seed_parent.add_argument("--seed", type=int, default=42)

    experiment_parent = _Parser(add_help=False)
    experiment_parent.add_argument("--neg-ratio", type=float, default=1.0)
    experiment_parent.add_argument("--test-fraction", type=float, default=0.25)
    experiment_parent.add_argument("--k", type=int, default=50)
    experiment_parent.add_argument("--top-k-tags", type=int, default=1000)
    experiment_parent.add_argument("--workers", type=int, default=1)

    filter_parent = _Parser(add_help=False)
    filter_parent.add_argument(
        "--filter", action="append", default=[], metavar="CLASS",
        help="distractor class to prune (repeatable)",
    )
    filter_parent.add_argument(
        "--container", action="append", default=[], metavar="CLASS",
        help="container class to focus on (repeatable)",
    )
    filter_parent.add_argument("--threshold", type=float, default=noise.DEFAULT_THRESHOLD)

    geo_parent = _Parser(add_help=False)
    geo_parent.add_argument("--atlas", type=Path, default=None)
    geo_parent.add_argument("--coastal-km", type=float, default=geo.DEFAULT_COASTAL_KM)

    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser(
        "ingest", parents=[corpus_parent, out_parent], help="validate corpus files"
    )
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", parents=[out_parent], help="generate a synthetic corpus")
    p.add_argument("--spec", type=Path, required=True)
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser(
        "bounds",
        parents=[corpus_parent, out_parent],
        help="food/non-food content bounds",
    )
    p.add_argument("--threshold", type=float, default=noise.DEFAULT_THRESHOLD)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser(
        "filter",
        parents=[corpus_parent, out_parent, filter_parent],
        help="apply a posterior-based filter",
    )
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser(
        "train-tags",
        parents=[corpus_parent, out_parent, seed_parent, experiment_parent],
        help="train and save one classifier per tag",
    )
    p.set_defaults(func=cmd_train_tags)

    p = sub.add_parser(
        "rank",
        parents=[corpus_parent, out_parent, seed_parent, experiment_parent],
        help="rank tags by visualness",
    )
    p.add_argument("--categories", type=Path, default=None)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser(
        "geocode",
        parents=[corpus_parent, out_parent, geo_parent],
        help="reverse geocode geotagged posts",
    )
    p.set_defaults(func=cmd_geocode)

    p = sub.add_parser(
        "breakdown",
        parents=[corpus_parent, out_parent, geo_parent],
        help="top labels per continent",
    )
    p.add_argument("--label-source", choices=["posterior", "visual-tags"], default="posterior")
    p.add_argument("--tags-file", type=Path, default=None)
    p.add_argument("--top-n", type=int, default=10)
    p.add_argument("--threshold", type=float, default=noise.DEFAULT_THRESHOLD)
    p.set_defaults(func=cmd_breakdown)

    p = sub.add_parser(
        "correlate",
        parents=[corpus_parent, out_parent, geo_parent],
        help="tag co-occurrence correlations",
    )
    p.add_argument("--top-k-tags", type=int, default=20)
    p.add_argument("--tags-file", type=Path, default=None)
    p.add_argument("--top-pairs", type=int, default=10)
    p.add_argument("--per-continent", action="store_true")
    p.add_argument("--min-continent-posts", type=int, default=corr.DEFAULT_MIN_CONTINENT_POSTS)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser(
        "report",
        parents=[corpus_parent, out_parent, seed_parent, experiment_parent, filter_parent],
        help="compare raw vs filtered visualness",
    )
    p.add_argument("--top-n", type=int, default=report.DEFAULT_TOP_N)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not hasattr(args, "func"):
        parser.print_help(sys.stderr)
        return EXIT_VALIDATION
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"tagsight: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DataError, FileNotFoundError) as exc:
        print(f"tagsight: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TagsightError as exc:
        print(f"tagsight: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - defensive
        logger.exception("internal error")
        print(f"tagsight: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
