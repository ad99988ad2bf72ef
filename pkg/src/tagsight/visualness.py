"""Per-tag visualness experiments.

For each tag: build a balanced positive/negative dataset from the corpus,
train a linear SVM on a stratified train split, then score the held-out
split.  The visualness metric is balanced accuracy (mean of the two
per-class recalls); ranking quality over the top-k scored test items is
reported as precision@k and average precision.

Tag evaluations are independent jobs: each derives its own seed from
(global seed, tag), so results do not depend on scheduling or worker
count.
"""

from __future__ import annotations

import io
import multiprocessing
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import linsvm
from ._util import fmt, stable_seed
from .corpus import Corpus, CorpusView, TagIndex, as_view
from .errors import EmptyReportError, TagSkipped, UndefinedMetricError, ValidationError

CATEGORIES = ("concrete-food", "food-related", "non-food")
UNLABELED = "unlabeled"

REPORT_COLUMNS = (
    "tag",
    "freq_rank",
    "n_pos",
    "n_neg",
    "balanced_accuracy",
    "p_at_k",
    "ap",
    "category",
)


class MetricTruncationWarning(UserWarning):
    """k exceeded the ranking length; the full length was used instead."""


# ---------------------------------------------------------------------------
# Metrics


def balanced_accuracy(predictions, labels) -> float:
    """(TPR + TNR) / 2 over +-1 predictions and labels."""
    predictions = np.asarray(predictions).ravel()
    labels = np.asarray(labels).ravel()
    if predictions.shape != labels.shape:
        raise ValidationError("predictions and labels differ in length")
    pos = labels > 0
    neg = labels < 0
    if not pos.any() or not neg.any():
        raise UndefinedMetricError("labels must contain both classes")
    tpr = float((predictions[pos] > 0).mean())
    tnr = float((predictions[neg] < 0).mean())
    return (tpr + tnr) / 2.0


def _effective_k(length: int, k: int) -> int:
    if k < 1:
        raise ValidationError("k must be >= 1")
    if k > length:
        warnings.warn(
            f"k={k} exceeds ranking length {length}; using full length",
            MetricTruncationWarning,
            stacklevel=3,
        )
        return length
    return k


def precision_at_k(ranked_relevance: Sequence[int], k: int) -> float:
    """Fraction of relevant items among the first k of a ranked 0/1 list."""
    rel = [int(r) for r in ranked_relevance]
    k = _effective_k(len(rel), k)
    return sum(rel[:k]) / k


def average_precision(ranked_relevance: Sequence[int], k: int) -> float:
    """Mean precision@i over relevant ranks i <= k, normalized by the number
    of relevant items inside the top k; 0.0 when none are relevant."""
    rel = [int(r) for r in ranked_relevance]
    k = _effective_k(len(rel), k)
    hits = 0
    total = 0.0
    for i in range(k):
        if rel[i]:
            hits += 1
            total += hits / (i + 1)
    if hits == 0:
        return 0.0
    return total / hits


# ---------------------------------------------------------------------------
# Dataset assembly


@dataclass(frozen=True)
class ExperimentConfig:
    neg_ratio: float = 1.0
    test_fraction: float = 0.25
    k: int = 50
    seed: int = 42
    min_positives: int = 20
    svm: linsvm.SvmConfig = linsvm.SvmConfig()

    def __post_init__(self):
        if self.neg_ratio <= 0:
            raise ValidationError("neg_ratio must be positive")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValidationError("test_fraction must be in (0, 1)")
        if self.k < 1:
            raise ValidationError("k must be >= 1")


@dataclass(frozen=True)
class Split:
    rows: np.ndarray  # corpus row indices
    labels: np.ndarray  # +-1


@dataclass(frozen=True)
class TagDataset:
    tag: str
    train: Split
    test: Split
    n_pos: int
    n_neg: int


def _split_counts(n: int, test_fraction: float) -> int:
    """Test-set size for one class: rounded, but always leaving both sides."""
    return min(max(int(round(n * test_fraction)), 1), n - 1)


def assemble_tag_dataset(
    corpus_or_view: Corpus | CorpusView,
    tag_index: TagIndex,
    tag: str,
    config: ExperimentConfig,
) -> TagDataset:
    """Build disjoint stratified train/test splits for one tag.

    Positives are the view's posts carrying the tag; negatives are sampled
    uniformly without replacement from the rest at ``neg_ratio``.  Raises
    TagSkipped when the tag cannot be evaluated here.
    """
    view = as_view(corpus_or_view)
    if tag not in tag_index:
        raise TagSkipped(tag, "not in tag index")
    positives = view.intersect(tag_index.posting(tag))
    if positives.size < config.min_positives:
        raise TagSkipped(
            tag, f"{positives.size} positives < minimum {config.min_positives}"
        )
    pool = np.setdiff1d(view.rows, positives, assume_unique=True)
    if pool.size == 0:
        raise TagSkipped(tag, "no negative examples available")

    rng = np.random.default_rng(stable_seed(config.seed, tag))
    n_neg_target = int(round(config.neg_ratio * positives.size))
    if pool.size < n_neg_target:
        warnings.warn(
            f"tag {tag!r}: only {pool.size} negatives available "
            f"(wanted {n_neg_target}); shrinking",
            stacklevel=2,
        )
        n_neg_target = pool.size
    negatives = np.sort(rng.choice(pool, size=n_neg_target, replace=False))

    def split_class(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        shuffled = rng.permutation(rows)
        n_test = _split_counts(rows.size, config.test_fraction)
        return np.sort(shuffled[n_test:]), np.sort(shuffled[:n_test])

    pos_train, pos_test = split_class(positives)
    neg_train, neg_test = split_class(negatives)

    def combine(pos_rows, neg_rows) -> Split:
        rows = np.concatenate([pos_rows, neg_rows])
        labels = np.concatenate(
            [np.ones(pos_rows.size, dtype=np.int64), -np.ones(neg_rows.size, dtype=np.int64)]
        )
        order = np.argsort(rows, kind="stable")
        return Split(rows=rows[order], labels=labels[order])

    return TagDataset(
        tag=tag,
        train=combine(pos_train, neg_train),
        test=combine(pos_test, neg_test),
        n_pos=int(positives.size),
        n_neg=int(negatives.size),
    )


# ---------------------------------------------------------------------------
# Per-tag evaluation


@dataclass(frozen=True)
class TagVisualness:
    tag: str
    freq_rank: int
    balanced_accuracy: float
    precision_at_k: float
    average_precision: float
    k: int  # effective ranking cutoff actually used
    n_pos: int
    n_neg: int
    category: str = UNLABELED


def evaluate_tag(
    corpus_or_view: Corpus | CorpusView,
    tag_index: TagIndex,
    tag: str,
    config: ExperimentConfig,
    category: str = UNLABELED,
) -> TagVisualness:
    """Train on the tag's train split and score the held-out split."""
    view = as_view(corpus_or_view)
    dataset = assemble_tag_dataset(view, tag_index, tag, config)
    features = view.corpus.features.data

    svm_config = replace(config.svm, seed=stable_seed(config.seed, tag, "train"))
    X_train = features[dataset.train.rows].astype(np.float64)
    model = linsvm.train(X_train, dataset.train.labels, svm_config)

    X_test = features[dataset.test.rows].astype(np.float64)
    scores = linsvm.decision_values(model, X_test)
    preds = np.where(scores >= 0.0, 1, -1)
    acc = balanced_accuracy(preds, dataset.test.labels)

    # Rank test items by decision value, ties broken by row index.
    order = np.lexsort((dataset.test.rows, -scores))
    relevance = (dataset.test.labels[order] > 0).astype(int)
    k = min(config.k, relevance.size)
    return TagVisualness(
        tag=tag,
        freq_rank=tag_index.freq_rank(tag),
        balanced_accuracy=acc,
        precision_at_k=precision_at_k(relevance, k),
        average_precision=average_precision(relevance, k),
        k=k,
        n_pos=dataset.n_pos,
        n_neg=dataset.n_neg,
        category=category,
    )


# ---------------------------------------------------------------------------
# Ranking across tags


@dataclass(frozen=True)
class SkippedTag:
    tag: str
    reason: str


@dataclass(frozen=True)
class VisualnessReport:
    results: tuple[TagVisualness, ...]  # sorted by balanced accuracy desc
    skipped: tuple[SkippedTag, ...]

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(",".join(REPORT_COLUMNS) + "\n")
        for r in self.results:
            out.write(
                ",".join(
                    [
                        r.tag,
                        str(r.freq_rank),
                        str(r.n_pos),
                        str(r.n_neg),
                        fmt(r.balanced_accuracy),
                        fmt(r.precision_at_k),
                        fmt(r.average_precision),
                        r.category,
                    ]
                )
                + "\n"
            )
        return out.getvalue()


_WORKER_STATE: tuple | None = None


def _init_worker(view, tag_index, config, categories) -> None:
    global _WORKER_STATE
    _WORKER_STATE = (view, tag_index, config, categories)


def _evaluate_one(tag: str):
    view, tag_index, config, categories = _WORKER_STATE
    try:
        return evaluate_tag(
            view, tag_index, tag, config, categories.get(tag, UNLABELED)
        )
    except TagSkipped as skip:
        return SkippedTag(tag=skip.tag, reason=skip.reason)


def rank_visualness(
    corpus_or_view: Corpus | CorpusView,
    tag_index: TagIndex,
    tags: Iterable[str],
    config: ExperimentConfig,
    categories: Mapping[str, str] | None = None,
    workers: int = 1,
) -> VisualnessReport:
    """Evaluate tags and sort them by balanced accuracy (descending).

    Skipped tags are reported with their reasons.  Results are identical
    for any worker count.
    """
    view = as_view(corpus_or_view)
    categories = dict(categories or {})
    unique_tags = list(dict.fromkeys(tags))
    if not unique_tags:
        raise EmptyReportError("no tags requested")

    if workers <= 1:
        _init_worker(view, tag_index, config, categories)
        outcomes = [_evaluate_one(tag) for tag in unique_tags]
    else:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(
            processes=workers,
            initializer=_init_worker,
            initargs=(view, tag_index, config, categories),
        ) as pool:
            outcomes = pool.map(_evaluate_one, unique_tags)

    results = [o for o in outcomes if isinstance(o, TagVisualness)]
    skipped = [o for o in outcomes if isinstance(o, SkippedTag)]
    if not results:
        raise EmptyReportError("no evaluable tags")
    results.sort(key=lambda r: (-r.balanced_accuracy, r.tag))
    skipped.sort(key=lambda s: s.tag)
    return VisualnessReport(results=tuple(results), skipped=tuple(skipped))


def load_categories(path: str | Path) -> dict[str, str]:
    """Read a "tag,category" file into a mapping (unknown categories rejected)."""
    mapping: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ValidationError(f"{path}:{lineno}: expected 'tag,category'")
            tag, category = parts[0].strip(), parts[1].strip()
            if category not in CATEGORIES:
                raise ValidationError(
                    f"{path}:{lineno}: category must be one of {CATEGORIES}"
                )
            mapping[tag] = category
    return mapping


# ---------------------------------------------------------------------------
# Retrieval


def top_ranked_images(
    corpus_or_view: Corpus | CorpusView,
    model: linsvm.LinearModel,
    candidate_rows: Sequence[int],
    k: int,
) -> list[str]:
    """Ids of the k highest-scoring candidates (ties: lower row first)."""
    view = as_view(corpus_or_view)
    rows = np.asarray(candidate_rows, dtype=np.int64)
    if rows.size == 0:
        return []
    scores = linsvm.decision_values(
        model, view.corpus.features.data[rows].astype(np.float64)
    )
    order = np.lexsort((rows, -scores))
    picked = rows[order[: min(k, rows.size)]]
    ids = []
    for row in picked:
        post = view.corpus.post_for_row(int(row))
        ids.append(post.id if post is not None else f"row:{int(row)}")
    return ids
