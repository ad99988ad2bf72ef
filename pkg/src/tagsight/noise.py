"""Posterior-based corpus diagnostics and label-noise filters.

A post is "confidently" recognized as a class when that class's posterior
probability strictly exceeds the threshold (default 0.5, conservative for
a distribution normalized over many classes).  Food-content bounds count
confident recognitions: the lower bound trusts food/container hits, the
upper bound is one minus the confident non-food fraction.  Filters return
lightweight row-subset views; the corpus is never copied or mutated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .corpus import (
    ROLE_CONTAINER,
    ROLE_FOOD,
    Corpus,
    CorpusView,
    PosteriorMatrix,
    as_view,
)
from .errors import ConfigurationError, MissingDataError, ValidationError

DEFAULT_THRESHOLD = 0.5
DEFAULT_DISTRACTOR_CLASSES = ("web site", "restaurant", "book jacket", "comic book", "wig")
DEFAULT_CONTAINER_CLASSES = ("plate",)


@dataclass(frozen=True)
class FoodBounds:
    n_total: int
    n_confident_food_or_container: int
    n_confident_nonfood: int
    lower: float
    upper: float
    threshold: float


def confident_class(
    posterior_row, threshold: float = DEFAULT_THRESHOLD
) -> tuple[int, float] | None:
    """(argmax class index, probability) if it clears the threshold, else None."""
    row = np.asarray(posterior_row, dtype=np.float64).ravel()
    if row.size == 0 or not np.isfinite(row).all():
        raise ValidationError("malformed posterior row")
    if row.min() < 0.0 or row.max() > 1.0 or abs(row.sum() - 1.0) > 1e-3:
        raise ValidationError("posterior row must be a distribution")
    idx = int(row.argmax())
    prob = float(row[idx])
    if prob > threshold:
        return idx, prob
    return None


def _posteriors(view: CorpusView) -> PosteriorMatrix:
    posteriors = view.corpus.posteriors
    if posteriors is None:
        raise MissingDataError("corpus has no posterior matrix")
    return posteriors


def _confident_mask(view: CorpusView, threshold: float) -> tuple[np.ndarray, np.ndarray]:
    """(confident?, argmax class index) for every row of the view."""
    data = _posteriors(view).data[view.rows]
    argmax = data.argmax(axis=1)
    top = data[np.arange(data.shape[0]), argmax]
    return top > threshold, argmax


def food_content_bounds(
    corpus_or_view: Corpus | CorpusView, threshold: float = DEFAULT_THRESHOLD
) -> FoodBounds:
    """Bracket the fraction of genuinely food-related posts."""
    view = as_view(corpus_or_view)
    posteriors = _posteriors(view)
    confident, argmax = _confident_mask(view, threshold)
    roles = posteriors.role_codes()[argmax]
    food_like = confident & ((roles == 1) | (roles == 2))
    nonfood = confident & (roles == 0)
    n = len(view)
    n_food = int(food_like.sum())
    n_nonfood = int(nonfood.sum())
    return FoodBounds(
        n_total=n,
        n_confident_food_or_container=n_food,
        n_confident_nonfood=n_nonfood,
        lower=n_food / n if n else 0.0,
        upper=1.0 - n_nonfood / n if n else 1.0,
        threshold=threshold,
    )


def _class_indices(posteriors: PosteriorMatrix, names: Iterable[str]) -> np.ndarray:
    indices = []
    for name in names:
        if name not in posteriors.class_names:
            raise ConfigurationError(f"unknown posterior class {name!r}")
        indices.append(posteriors.class_names.index(name))
    return np.array(sorted(set(indices)), dtype=np.int64)


def prune_distractors(
    corpus_or_view: Corpus | CorpusView,
    distractor_classes: Iterable[str] = DEFAULT_DISTRACTOR_CLASSES,
    threshold: float = DEFAULT_THRESHOLD,
) -> CorpusView:
    """Drop posts confidently recognized as one of the distractor classes."""
    view = as_view(corpus_or_view)
    targets = _class_indices(_posteriors(view), distractor_classes)
    if targets.size == 0:
        return view
    confident, argmax = _confident_mask(view, threshold)
    drop = confident & np.isin(argmax, targets)
    return CorpusView(view.corpus, view.rows[~drop])


def focus_container(
    corpus_or_view: Corpus | CorpusView,
    container_classes: Iterable[str] = DEFAULT_CONTAINER_CLASSES,
    threshold: float = DEFAULT_THRESHOLD,
) -> CorpusView:
    """Keep only posts confidently recognized as one of the container classes."""
    view = as_view(corpus_or_view)
    targets = _class_indices(_posteriors(view), container_classes)
    confident, argmax = _confident_mask(view, threshold)
    keep = confident & np.isin(argmax, targets)
    return CorpusView(view.corpus, view.rows[keep])


@dataclass(frozen=True)
class FilterSpec:
    """A configured filter: prune the named classes, or focus on them.

    mode "none" is the identity filter.
    """

    mode: str = "none"  # none | prune | focus
    classes: tuple[str, ...] = ()
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        if self.mode not in ("none", "prune", "focus"):
            raise ValidationError(f"unknown filter mode {self.mode!r}")
        if self.mode != "none" and not self.classes:
            raise ValidationError(f"filter mode {self.mode!r} needs class names")

    def describe(self) -> str:
        if self.mode == "none":
            return "identity"
        return f"{self.mode}[{','.join(self.classes)}]@{self.threshold:g}"

    def apply(self, corpus_or_view: Corpus | CorpusView) -> CorpusView:
        view = as_view(corpus_or_view)
        if self.mode == "none":
            return view
        if self.mode == "prune":
            return prune_distractors(view, self.classes, self.threshold)
        return focus_container(view, self.classes, self.threshold)
