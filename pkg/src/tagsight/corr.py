"""Tag co-occurrence analysis via phi coefficients.

The phi coefficient of two tags is the Pearson correlation of their binary
presence indicators, computed exactly from the 2x2 contingency table:

    phi = (n11*n00 - n10*n01) / sqrt(n1. * n0. * n.1 * n.0)

A tag present in every post (or none) of the view has zero variance; its
entries are undefined and flagged explicitly rather than silently zeroed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .corpus import Corpus, CorpusView, as_view
from .errors import ValidationError
from .geo import CONTINENTS, GeoStats

logger = logging.getLogger(__name__)

DEFAULT_MIN_CONTINENT_POSTS = 50


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    tags: tuple[str, ...]
    values: np.ndarray  # (t, t) float64; NaN where undefined
    defined: np.ndarray  # (t, t) bool
    n: int  # posts counted

    def phi(self, tag_a: str, tag_b: str) -> float:
        i, j = self.tags.index(tag_a), self.tags.index(tag_b)
        return float(self.values[i, j])

    def is_defined(self, tag_a: str, tag_b: str) -> bool:
        i, j = self.tags.index(tag_a), self.tags.index(tag_b)
        return bool(self.defined[i, j])


def indicator_matrix(view: CorpusView, tags: Sequence[str]) -> np.ndarray:
    """(posts, tags) 0/1 matrix of tag presence over the view."""
    row_pos = {int(row): k for k, row in enumerate(view.rows)}
    out = np.zeros((len(view), len(tags)), dtype=np.int8)
    tag_col = {tag: j for j, tag in enumerate(tags)}
    for post in view.posts():
        for tag in post.tags:
            j = tag_col.get(tag)
            if j is not None:
                out[row_pos[post.row], j] = 1
    return out


def phi_from_indicators(a: np.ndarray, b: np.ndarray) -> float:
    """Exact phi from two 0/1 vectors; NaN when either has zero variance."""
    n = a.size
    n11 = int(np.sum((a == 1) & (b == 1)))
    n10 = int(np.sum((a == 1) & (b == 0)))
    n01 = int(np.sum((a == 0) & (b == 1)))
    n00 = n - n11 - n10 - n01
    row1 = n11 + n10
    row0 = n01 + n00
    col1 = n11 + n01
    col0 = n10 + n00
    denom = row1 * row0 * col1 * col0
    if denom == 0:
        return math.nan
    return (n11 * n00 - n10 * n01) / math.sqrt(denom)


def tag_phi_matrix(
    corpus_or_view: Corpus | CorpusView, tags: Sequence[str]
) -> CorrelationMatrix:
    """Pairwise phi over the view's posts for the given tags."""
    view = as_view(corpus_or_view)
    tags = tuple(dict.fromkeys(tags))
    if not tags:
        raise ValidationError("tags must be non-empty")
    if len(view) < 2:
        raise ValidationError("need at least two posts")

    indicators = indicator_matrix(view, tags)
    t = len(tags)
    values = np.full((t, t), np.nan)
    defined = np.zeros((t, t), dtype=bool)
    variable = [bool(0 < indicators[:, j].sum() < indicators.shape[0]) for j in range(t)]
    for i in range(t):
        if variable[i]:
            values[i, i] = 1.0
            defined[i, i] = True
        for j in range(i + 1, t):
            if not (variable[i] and variable[j]):
                continue
            phi = phi_from_indicators(indicators[:, i], indicators[:, j])
            values[i, j] = values[j, i] = phi
            defined[i, j] = defined[j, i] = True
    return CorrelationMatrix(tags=tags, values=values, defined=defined, n=len(view))


def top_correlations(
    matrix: CorrelationMatrix, n: int, sign: str
) -> list[tuple[str, str, float]]:
    """The n strongest defined off-diagonal pairs of the requested sign,
    ordered by |phi| descending, ties lexicographic by pair."""
    if sign not in ("positive", "negative"):
        raise ValidationError("sign must be 'positive' or 'negative'")
    if n < 1:
        raise ValidationError("n must be >= 1")
    pairs = []
    t = len(matrix.tags)
    for i in range(t):
        for j in range(i + 1, t):
            if not matrix.defined[i, j]:
                continue
            phi = float(matrix.values[i, j])
            if sign == "positive" and phi > 0:
                pairs.append((matrix.tags[i], matrix.tags[j], phi))
            elif sign == "negative" and phi < 0:
                pairs.append((matrix.tags[i], matrix.tags[j], phi))
    pairs.sort(key=lambda p: (-abs(p[2]), p[0], p[1]))
    return pairs[:n]


def per_continent_correlations(
    corpus_or_view: Corpus | CorpusView,
    geostats: GeoStats,
    tags: Sequence[str],
    min_posts: int = DEFAULT_MIN_CONTINENT_POSTS,
) -> dict[str, CorrelationMatrix]:
    """One matrix per continent with at least ``min_posts`` resolved posts;
    smaller continents are omitted with a warning."""
    view = as_view(corpus_or_view)
    by_continent: dict[str, list[int]] = {}
    for row in view.rows:
        continent = geostats.continent_of_row(int(row))
        if continent is not None:
            by_continent.setdefault(continent, []).append(int(row))

    result: dict[str, CorrelationMatrix] = {}
    for continent in CONTINENTS:
        rows = by_continent.get(continent)
        if rows is None:
            continue
        if len(rows) < min_posts:
            logger.warning(
                "continent %s has %d posts (< %d); omitted from correlation analysis",
                continent,
                len(rows),
                min_posts,
            )
            continue
        sub = CorpusView(view.corpus, np.array(sorted(rows), dtype=np.int64))
        result[continent] = tag_phi_matrix(sub, tags)
    return result


def matrix_to_csv(matrix: CorrelationMatrix) -> str:
    """CSV rendering; undefined entries print as n/a."""
    lines = ["tag," + ",".join(matrix.tags)]
    for i, tag in enumerate(matrix.tags):
        cells = [tag]
        for j in range(len(matrix.tags)):
            if matrix.defined[i, j]:
                cells.append(f"{matrix.values[i, j]:.6f}")
            else:
                cells.append("n/a")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
