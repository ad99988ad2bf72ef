"""Synthetic corpus generator with planted, fully-recorded ground truth.

Visual tags shift their true positives' features by ``separation`` standard
deviations along a tag-specific random unit direction; with unit-variance
spherical noise the Bayes-optimal balanced accuracy for one tag is
Phi(separation / 2).  Non-visual tags are assigned independently of the
features, so any classifier sits at chance.  Posterior rows model a
recognizer that is always right on its confident subset: container and
food confidences land only on true food posts, distractor and other
confidences only on non-food posts.

Everything is a deterministic function of (spec, seed); the same spec
yields byte-identical corpus files.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .corpus import (
    ROLE_CONTAINER,
    ROLE_FOOD,
    ROLE_OTHER,
    Corpus,
    FeatureMatrix,
    MAX_TAGS_PER_POST,
    Post,
    PosteriorMatrix,
)
from .errors import ValidationError

# Small recognizer vocabulary used for generated posteriors.
CLASS_TABLE: tuple[tuple[str, str], ...] = (
    ("pizza", ROLE_FOOD),
    ("salad", ROLE_FOOD),
    ("ice cream", ROLE_FOOD),
    ("burger", ROLE_FOOD),
    ("sushi", ROLE_FOOD),
    ("cake", ROLE_FOOD),
    ("plate", ROLE_CONTAINER),
    ("bowl", ROLE_CONTAINER),
    ("web site", ROLE_OTHER),
    ("restaurant", ROLE_OTHER),
    ("book jacket", ROLE_OTHER),
    ("comic book", ROLE_OTHER),
    ("wig", ROLE_OTHER),
    ("menu", ROLE_OTHER),
    ("tshirt", ROLE_OTHER),
    ("scenery", ROLE_OTHER),
)
CLASS_NAMES = tuple(name for name, _ in CLASS_TABLE)
CLASS_ROLES = tuple(role for _, role in CLASS_TABLE)
_FOOD_CLASSES = tuple(n for n, r in CLASS_TABLE if r == ROLE_FOOD)
_PLAIN_OTHER_CLASSES = ("menu", "tshirt", "scenery")  # never used as distractors
_CONFIDENT_P = 0.85

CONTINENTS = ("Africa", "Asia", "Australia", "Europe", "N. America", "S. America")
NO_GEOTAG = "none"

# One representative interior point per city; all verified to fall inside
# the bundled atlas polygons.
CITY_TABLE: Mapping[str, tuple[tuple[float, float], ...]] = {
    "Europe": (
        (48.8566, 2.3522),  # Paris
        (52.5200, 13.4050),  # Berlin
        (40.4168, -3.7038),  # Madrid
        (41.8933, 12.4822),  # Rome
        (53.4808, -2.2426),  # Manchester
    ),
    "Asia": (
        (35.6762, 139.6503),  # Tokyo
        (35.1815, 136.9066),  # Nagoya
        (39.9042, 116.4074),  # Beijing
        (34.3416, 108.9398),  # Xi'an
        (28.6139, 77.2090),  # Delhi
        (12.9716, 77.5946),  # Bangalore
    ),
    "N. America": (
        (41.8781, -87.6298),  # Chicago
        (32.7767, -96.7970),  # Dallas
        (39.7392, -104.9903),  # Denver
        (43.6532, -79.3832),  # Toronto
        (45.4215, -75.6972),  # Ottawa
        (19.4326, -99.1332),  # Mexico City
    ),
    "S. America": (
        (-23.5505, -46.6333),  # Sao Paulo
        (-15.7939, -47.8828),  # Brasilia
        (-34.6037, -58.3816),  # Buenos Aires
        (-31.4201, -64.1888),  # Cordoba
    ),
    "Africa": (
        (30.0444, 31.2357),  # Cairo
        (9.0579, 7.4951),  # Abuja
        (7.3775, 3.9470),  # Ibadan
        (-26.2041, 28.0473),  # Johannesburg
    ),
    "Australia": (
        (-33.8688, 151.2093),  # Sydney
        (-37.8136, 144.9631),  # Melbourne
        (-35.2809, 149.1300),  # Canberra
    ),
}


@dataclass(frozen=True)
class VisualTag:
    tag: str
    separation: float  # class-mean distance in sigma units
    prevalence: float


@dataclass(frozen=True)
class NonvisualTag:
    tag: str
    prevalence: float


@dataclass(frozen=True)
class TagCluster:
    """Tags planted to co-occur: on each cluster post, every member tag is
    present independently with probability co_prob."""

    tags: tuple[str, ...]
    prevalence: float
    co_prob: float
    continent: str | None = None  # restrict cluster posts to one continent


@dataclass(frozen=True)
class SynthSpec:
    n_posts: int
    d: int = 64
    visual_tags: tuple[VisualTag, ...] = ()
    nonvisual_tags: tuple[NonvisualTag, ...] = ()
    clusters: tuple[TagCluster, ...] = ()
    false_positive_rate: float = 0.0
    fp_on_distractors: bool = False
    container_fraction: float = 0.0
    distractor_fraction: float = 0.0
    food_confident_rate: float = 0.6
    nonfood_confident_rate: float = 0.5
    geo_mixture: tuple[tuple[str, float], ...] = ()  # (continent or "none", weight)
    seed: int = 0


@dataclass
class GroundTruth:
    """Every planted fact, sufficient to recompute any corpus quantity."""

    spec: SynthSpec
    true_tag_rows: dict[str, np.ndarray] = field(default_factory=dict)
    fp_tag_rows: dict[str, np.ndarray] = field(default_factory=dict)
    food_rows: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))
    container_confident_rows: np.ndarray = field(
        default_factory=lambda: np.array([], dtype=np.int64)
    )
    distractor_confident_rows: np.ndarray = field(
        default_factory=lambda: np.array([], dtype=np.int64)
    )
    food_confident_rows: np.ndarray = field(
        default_factory=lambda: np.array([], dtype=np.int64)
    )
    other_confident_rows: np.ndarray = field(
        default_factory=lambda: np.array([], dtype=np.int64)
    )
    continent_of_row: dict[int, str] = field(default_factory=dict)
    directions: dict[str, np.ndarray] = field(default_factory=dict)

    def rows_with_tag(self, tag: str) -> np.ndarray:
        """All rows carrying the tag, planted truth plus injected noise."""
        true = self.true_tag_rows.get(tag, np.array([], dtype=np.int64))
        noisy = self.fp_tag_rows.get(tag, np.array([], dtype=np.int64))
        return np.union1d(true, noisy)


def _validate(spec: SynthSpec) -> None:
    if spec.n_posts < 1:
        raise ValidationError("n_posts must be >= 1")
    if spec.d < 1:
        raise ValidationError("d must be >= 1")
    for vt in spec.visual_tags:
        if not 0.0 < vt.prevalence < 1.0:
            raise ValidationError(f"prevalence of {vt.tag!r} must be in (0, 1)")
        if vt.separation < 0.0:
            raise ValidationError(f"separation of {vt.tag!r} must be >= 0")
    for nt in spec.nonvisual_tags:
        if not 0.0 < nt.prevalence < 1.0:
            raise ValidationError(f"prevalence of {nt.tag!r} must be in (0, 1)")
    for cl in spec.clusters:
        if not 0.0 < cl.prevalence < 1.0 or not 0.0 < cl.co_prob <= 1.0:
            raise ValidationError("cluster prevalence/co_prob out of range")
        if cl.continent is not None and cl.continent not in CONTINENTS:
            raise ValidationError(f"unknown cluster continent {cl.continent!r}")
    for frac, name in (
        (spec.false_positive_rate, "false_positive_rate"),
        (spec.container_fraction, "container_fraction"),
        (spec.distractor_fraction, "distractor_fraction"),
        (spec.food_confident_rate, "food_confident_rate"),
        (spec.nonfood_confident_rate, "nonfood_confident_rate"),
    ):
        if not 0.0 <= frac <= 1.0:
            raise ValidationError(f"{name} must be in [0, 1]")
    if spec.container_fraction + spec.distractor_fraction > 1.0:
        raise ValidationError("container_fraction + distractor_fraction must be <= 1")
    names = [vt.tag for vt in spec.visual_tags] + [nt.tag for nt in spec.nonvisual_tags]
    if len(set(names)) != len(names):
        raise ValidationError("duplicate tag names across visual/nonvisual lists")
    for continent, weight in spec.geo_mixture:
        if continent != NO_GEOTAG and continent not in CONTINENTS:
            raise ValidationError(f"unknown continent {continent!r} in geo_mixture")
        if weight < 0:
            raise ValidationError("geo_mixture weights must be >= 0")


def generate(spec: SynthSpec) -> tuple[Corpus, GroundTruth]:
    """Generate a corpus (features + posteriors) and its ground truth."""
    _validate(spec)
    rng = np.random.default_rng(spec.seed)
    n, d = spec.n_posts, spec.d
    truth = GroundTruth(spec=spec)

    # Continent assignment first so clusters can be continent-restricted.
    continent_of = np.full(n, "", dtype=object)
    if spec.geo_mixture:
        labels = [c for c, _ in spec.geo_mixture]
        weights = np.array([w for _, w in spec.geo_mixture], dtype=np.float64)
        if weights.sum() <= 0:
            raise ValidationError("geo_mixture weights sum to zero")
        weights = weights / weights.sum()
        picks = rng.choice(len(labels), size=n, p=weights)
        for i in range(n):
            label = labels[picks[i]]
            if label != NO_GEOTAG:
                continent_of[i] = label

    tag_sets: list[set[str]] = [set() for _ in range(n)]

    def plant(tag: str, rows: np.ndarray) -> None:
        truth.true_tag_rows[tag] = np.sort(rows).astype(np.int64)
        for row in rows:
            tag_sets[row].add(tag)

    for vt in spec.visual_tags:
        plant(vt.tag, np.flatnonzero(rng.random(n) < vt.prevalence))
    for nt in spec.nonvisual_tags:
        plant(nt.tag, np.flatnonzero(rng.random(n) < nt.prevalence))

    for cluster in spec.clusters:
        if cluster.continent is None:
            eligible = np.arange(n)
        else:
            eligible = np.flatnonzero(continent_of == cluster.continent)
        cluster_rows = eligible[rng.random(eligible.size) < cluster.prevalence]
        for tag in cluster.tags:
            member_rows = cluster_rows[rng.random(cluster_rows.size) < cluster.co_prob]
            existing = truth.true_tag_rows.get(tag, np.array([], dtype=np.int64))
            combined = np.union1d(existing, member_rows)
            truth.true_tag_rows[tag] = combined.astype(np.int64)
            for row in member_rows:
                tag_sets[row].add(tag)

    food_rows = (
        np.union1d(
            np.array([], dtype=np.int64),
            np.concatenate(
                [truth.true_tag_rows[vt.tag] for vt in spec.visual_tags]
            ),
        )
        if spec.visual_tags
        else np.array([], dtype=np.int64)
    )
    truth.food_rows = food_rows.astype(np.int64)
    nonfood_rows = np.setdiff1d(np.arange(n), food_rows, assume_unique=False)

    n_distractor = int(round(n * spec.distractor_fraction))
    if n_distractor > nonfood_rows.size:
        raise ValidationError(
            "distractor_fraction exceeds the available non-food posts"
        )
    distractor_rows = np.sort(rng.choice(nonfood_rows, n_distractor, replace=False))
    truth.distractor_confident_rows = distractor_rows.astype(np.int64)

    n_container = int(round(food_rows.size * spec.container_fraction))
    container_rows = np.sort(rng.choice(food_rows, n_container, replace=False))
    truth.container_confident_rows = container_rows.astype(np.int64)

    # False-positive tag noise: extra assignments on posts without the
    # actual content, targeted at distractor posts when so configured.
    for vt in spec.visual_tags:
        true_rows = truth.true_tag_rows[vt.tag]
        n_fp = int(round(spec.false_positive_rate * true_rows.size))
        pool = distractor_rows if spec.fp_on_distractors else np.arange(n)
        pool = np.setdiff1d(pool, true_rows, assume_unique=False)
        n_fp = min(n_fp, pool.size)
        fp_rows = np.sort(rng.choice(pool, n_fp, replace=False))
        truth.fp_tag_rows[vt.tag] = fp_rows.astype(np.int64)
        for row in fp_rows:
            tag_sets[row].add(vt.tag)

    overfull = [i for i, tags in enumerate(tag_sets) if len(tags) > MAX_TAGS_PER_POST]
    if overfull:
        raise ValidationError(
            f"spec plants more than {MAX_TAGS_PER_POST} tags on post {overfull[0]}"
        )

    # Features: unit-variance noise, plus the per-tag mean shift on true rows.
    features = rng.standard_normal((n, d))
    for vt in spec.visual_tags:
        direction = rng.standard_normal(d)
        direction /= np.linalg.norm(direction)
        truth.directions[vt.tag] = direction
        features[truth.true_tag_rows[vt.tag]] += vt.separation * direction
    features = features.astype(np.float32)

    posteriors = _build_posteriors(
        spec, rng, truth, distractor_rows, container_rows, food_rows
    )

    likes = rng.poisson(20.0, size=n)
    comments = rng.poisson(3.0, size=n)
    posts = []
    id_width = max(6, len(str(n - 1)))
    for i in range(n):
        geotag = None
        if continent_of[i]:
            cities = CITY_TABLE[str(continent_of[i])]
            geotag = cities[int(rng.integers(len(cities)))]
            truth.continent_of_row[i] = str(continent_of[i])
        posts.append(
            Post(
                id=f"synth{i:0{id_width}d}",
                tags=frozenset(tag_sets[i]),
                geotag=geotag,
                likes=int(likes[i]),
                comments=int(comments[i]),
                row=i,
            )
        )

    corpus = Corpus(
        posts,
        FeatureMatrix(n=n, d=d, data=features),
        PosteriorMatrix(
            n=n,
            k=len(CLASS_NAMES),
            data=posteriors,
            class_names=CLASS_NAMES,
            class_roles=CLASS_ROLES,
        ),
    )
    return corpus, truth


def _build_posteriors(spec, rng, truth, distractor_rows, container_rows, food_rows):
    """Posterior rows: Dirichlet diffusion everywhere, overwritten with a
    confident class where the synthetic recognizer fires."""
    n = spec.n_posts
    k = len(CLASS_NAMES)
    data = rng.dirichlet(np.full(k, 5.0), size=n)

    def confident_row(class_name: str) -> np.ndarray:
        row = np.full(k, (1.0 - _CONFIDENT_P) / (k - 1))
        row[CLASS_NAMES.index(class_name)] = _CONFIDENT_P
        return row

    for row in container_rows:
        data[row] = confident_row("plate")
    for row in distractor_rows:
        data[row] = confident_row("web site")

    plain_food = np.setdiff1d(food_rows, container_rows, assume_unique=True)
    fires = plain_food[rng.random(plain_food.size) < spec.food_confident_rate]
    for row in fires:
        data[row] = confident_row(_FOOD_CLASSES[int(rng.integers(len(_FOOD_CLASSES)))])
    truth.food_confident_rows = np.sort(fires).astype(np.int64)

    plain_nonfood = np.setdiff1d(
        np.setdiff1d(np.arange(n), food_rows, assume_unique=False),
        distractor_rows,
        assume_unique=False,
    )
    fires = plain_nonfood[rng.random(plain_nonfood.size) < spec.nonfood_confident_rate]
    for row in fires:
        data[row] = confident_row(
            _PLAIN_OTHER_CLASSES[int(rng.integers(len(_PLAIN_OTHER_CLASSES)))]
        )
    truth.other_confident_rows = np.union1d(fires, distractor_rows).astype(np.int64)

    return data.astype(np.float32)


# ---------------------------------------------------------------------------
# Spec file parsing (plain key/value text, repeatable tag lines)


def load_spec(path: str | Path) -> SynthSpec:
    """Parse a spec file.

    Scalar lines are ``key = value``; repeatable lines are
    ``visual_tag = NAME SEPARATION PREVALENCE``,
    ``nonvisual_tag = NAME PREVALENCE``,
    ``cluster = TAG|TAG|... PREVALENCE CO_PROB [CONTINENT]`` and
    ``geo = CONTINENT WEIGHT`` (continent may be ``none``).
    """
    scalars: dict[str, str] = {}
    visual: list[VisualTag] = []
    nonvisual: list[NonvisualTag] = []
    clusters: list[TagCluster] = []
    geo: list[tuple[str, float]] = []

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            try:
                if key == "visual_tag":
                    tag, sep, prev = value.split()
                    visual.append(VisualTag(tag, float(sep), float(prev)))
                elif key == "nonvisual_tag":
                    tag, prev = value.split()
                    nonvisual.append(NonvisualTag(tag, float(prev)))
                elif key == "cluster":
                    parts = value.split()
                    if len(parts) == 3:
                        tags, prev, co = parts
                        continent = None
                    else:
                        tags, prev, co, *rest = parts
                        continent = " ".join(rest)
                    clusters.append(
                        TagCluster(
                            tuple(tags.split("|")), float(prev), float(co), continent
                        )
                    )
                elif key == "geo":
                    parts = value.split()
                    weight = float(parts[-1])
                    geo.append((" ".join(parts[:-1]), weight))
                else:
                    scalars[key] = value
            except (ValueError, IndexError) as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None

    def scalar(key, cast, default):
        if key not in scalars:
            return default
        raw = scalars.pop(key)
        if cast is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValidationError(f"{path}: {key} must be true/false")
        return cast(raw)

    spec = SynthSpec(
        n_posts=scalar("n_posts", int, 0),
        d=scalar("d", int, 64),
        visual_tags=tuple(visual),
        nonvisual_tags=tuple(nonvisual),
        clusters=tuple(clusters),
        false_positive_rate=scalar("false_positive_rate", float, 0.0),
        fp_on_distractors=scalar("fp_on_distractors", bool, False),
        container_fraction=scalar("container_fraction", float, 0.0),
        distractor_fraction=scalar("distractor_fraction", float, 0.0),
        food_confident_rate=scalar("food_confident_rate", float, 0.6),
        nonfood_confident_rate=scalar("nonfood_confident_rate", float, 0.5),
        geo_mixture=tuple(geo),
        seed=scalar("seed", int, 0),
    )
    if scalars:
        raise ValidationError(f"{path}: unknown keys {sorted(scalars)}")
    _validate(spec)
    return spec
