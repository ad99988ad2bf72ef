"""Corpus data model and ingestion.

A corpus is an immutable triple of (posts, feature matrix, optional
posterior matrix).  Posts come from a UTF-8 JSON-lines metadata file, one
record per line with fields ``id``/``tags``/``lat``/``lon``/``likes``/
``comments``; each non-blank line owns the matrix row with the same index,
so the number of non-blank metadata lines must equal the matrix row count.

Matrix files share one container format:

    magic  8 bytes  b"TSGM0001"
    n      u32 little-endian   row count
    d      u32 little-endian   column count
    data   n*d little-endian float32, row major
    [posterior files only] class table:
        count  u32
        per class: name_len u32, name UTF-8 bytes, role u8
                   (0 = other, 1 = food, 2 = container)
"""

from __future__ import annotations

import json
import struct
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import DataError, RejectedTagError, ValidationError

MATRIX_MAGIC = b"TSGM0001"
MAX_TAGS_PER_POST = 30

ROLE_OTHER = "other"
ROLE_FOOD = "food"
ROLE_CONTAINER = "container"
_ROLE_TO_BYTE = {ROLE_OTHER: 0, ROLE_FOOD: 1, ROLE_CONTAINER: 2}
_BYTE_TO_ROLE = {v: k for k, v in _ROLE_TO_BYTE.items()}


def normalize_tag(raw: str) -> str:
    """Canonicalize a raw hashtag: strip '#', lowercase, Unicode-compose.

    Raises RejectedTagError if nothing is left after normalization.
    """
    text = raw.strip()
    while text.startswith("#"):
        text = text[1:]
    text = unicodedata.normalize("NFC", text.lower())
    if not text:
        raise RejectedTagError(f"tag {raw!r} is empty after normalization")
    return text


@dataclass(frozen=True)
class Post:
    """One social-media post; ``row`` indexes the aligned matrices."""

    id: str
    tags: frozenset[str]
    geotag: tuple[float, float] | None  # (lat, lon), validated ranges
    likes: int
    comments: int
    row: int


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    n: int
    d: int
    data: np.ndarray  # (n, d) float32, read only

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, FeatureMatrix)
            and self.n == other.n
            and self.d == other.d
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True, eq=False)
class PosteriorMatrix:
    n: int
    k: int
    data: np.ndarray  # (n, k) float32, read only, rows sum to 1 +- 1e-3
    class_names: tuple[str, ...]
    class_roles: tuple[str, ...]  # each in {food, container, other}

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        for role in self.class_roles:
            if role not in _ROLE_TO_BYTE:
                raise ValidationError(f"unknown class role {role!r}")
        if len(self.class_names) != self.k or len(self.class_roles) != self.k:
            raise ValidationError("class table size must equal class count")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PosteriorMatrix)
            and self.n == other.n
            and self.k == other.k
            and np.array_equal(self.data, other.data)
            and self.class_names == other.class_names
            and self.class_roles == other.class_roles
        )

    def class_index(self, name: str) -> int:
        try:
            return self.class_names.index(name)
        except ValueError:
            raise ValidationError(f"unknown posterior class {name!r}") from None

    def role_codes(self) -> np.ndarray:
        """Role per class as an int array (0 other, 1 food, 2 container)."""
        return np.array([_ROLE_TO_BYTE[r] for r in self.class_roles], dtype=np.int8)


@dataclass
class IngestReport:
    """What happened while reading a metadata file."""

    lines_total: int = 0
    posts: int = 0
    malformed: int = 0
    duplicate_ids: int = 0
    invalid_geotags: int = 0
    rejected_tags: int = 0
    malformed_lines: list[int] = field(default_factory=list)  # 1-based, capped

    _LINE_CAP = 20

    def note_malformed(self, lineno: int) -> None:
        self.malformed += 1
        if len(self.malformed_lines) < self._LINE_CAP:
            self.malformed_lines.append(lineno)


class Corpus:
    """Immutable container for posts and their aligned matrices."""

    def __init__(
        self,
        posts: Sequence[Post],
        features: FeatureMatrix,
        posteriors: PosteriorMatrix | None = None,
    ):
        posts = tuple(posts)
        rows = [p.row for p in posts]
        if len(set(rows)) != len(rows):
            raise ValidationError("duplicate row index among posts")
        if rows and (min(rows) < 0 or max(rows) >= features.n):
            raise ValidationError("post row index outside matrix bounds")
        if posteriors is not None and posteriors.n != features.n:
            raise DataError(
                f"posterior rows ({posteriors.n}) != feature rows ({features.n})"
            )
        self._posts = posts
        self._features = features
        self._posteriors = posteriors
        self._by_row = {p.row: p for p in posts}
        self._by_id = {p.id: p for p in posts}

    @property
    def posts(self) -> tuple[Post, ...]:
        return self._posts

    @property
    def features(self) -> FeatureMatrix:
        return self._features

    @property
    def posteriors(self) -> PosteriorMatrix | None:
        return self._posteriors

    @property
    def n_rows(self) -> int:
        return self._features.n

    def __len__(self) -> int:
        return len(self._posts)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Corpus)
            and self._posts == other._posts
            and self._features == other._features
            and self._posteriors == other._posteriors
        )

    def post_for_row(self, row: int) -> Post | None:
        return self._by_row.get(row)

    def post_for_id(self, post_id: str) -> Post | None:
        return self._by_id.get(post_id)

    def full_view(self) -> "CorpusView":
        rows = np.array(sorted(self._by_row), dtype=np.int64)
        return CorpusView(self, rows)


@dataclass(frozen=True, eq=False)
class CorpusView:
    """A read-only row subset of a corpus; filters compose these cheaply."""

    corpus: Corpus
    rows: np.ndarray  # sorted unique int64

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    def __len__(self) -> int:
        return int(self.rows.size)

    def posts(self) -> Iterator[Post]:
        for row in self.rows:
            post = self.corpus.post_for_row(int(row))
            if post is not None:
                yield post

    def intersect(self, rows: np.ndarray) -> np.ndarray:
        """Rows of ``rows`` that are also in this view (both sorted)."""
        return np.intersect1d(self.rows, rows, assume_unique=True)

    def subset(self, rows: np.ndarray) -> "CorpusView":
        return CorpusView(self.corpus, self.intersect(rows))


def as_view(corpus_or_view: Corpus | CorpusView) -> CorpusView:
    if isinstance(corpus_or_view, CorpusView):
        return corpus_or_view
    return corpus_or_view.full_view()


# ---------------------------------------------------------------------------
# Matrix file IO


def save_matrix(
    path: str | Path,
    data: np.ndarray,
    class_names: Sequence[str] | None = None,
    class_roles: Sequence[str] | None = None,
) -> None:
    """Write a dense float32 matrix; append a class table when names given."""
    data = np.ascontiguousarray(data, dtype="<f4")
    if data.ndim != 2:
        raise ValidationError("matrix must be 2-dimensional")
    n, d = data.shape
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<II", n, d))
        fh.write(data.tobytes())
        if class_names is not None:
            if class_roles is None or len(class_roles) != len(class_names):
                raise ValidationError("class_roles must pair with class_names")
            if len(class_names) != d:
                raise ValidationError("class table size must equal column count")
            fh.write(struct.pack("<I", len(class_names)))
            for name, role in zip(class_names, class_roles):
                if role not in _ROLE_TO_BYTE:
                    raise ValidationError(f"unknown class role {role!r}")
                blob = name.encode("utf-8")
                fh.write(struct.pack("<I", len(blob)))
                fh.write(blob)
                fh.write(struct.pack("<B", _ROLE_TO_BYTE[role]))


def load_matrix(
    path: str | Path,
) -> tuple[np.ndarray, tuple[str, ...] | None, tuple[str, ...] | None]:
    """Read a matrix file; returns (data, class_names, class_roles).

    The class table entries are None when the file carries no table.
    """
    blob = Path(path).read_bytes()
    if len(blob) < len(MATRIX_MAGIC) + 8:
        raise DataError(f"{path}: truncated matrix file")
    if blob[: len(MATRIX_MAGIC)] != MATRIX_MAGIC:
        raise DataError(f"{path}: bad magic, not a matrix file")
    n, d = struct.unpack_from("<II", blob, len(MATRIX_MAGIC))
    offset = len(MATRIX_MAGIC) + 8
    nbytes = n * d * 4
    if len(blob) < offset + nbytes:
        raise DataError(f"{path}: matrix data truncated")
    data = np.frombuffer(blob, dtype="<f4", count=n * d, offset=offset)
    data = data.reshape(n, d).copy()
    data.setflags(write=False)
    offset += nbytes
    if offset == len(blob):
        return data, None, None

    (count,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    names: list[str] = []
    roles: list[str] = []
    for _ in range(count):
        if offset + 4 > len(blob):
            raise DataError(f"{path}: class table truncated")
        (name_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        if offset + name_len + 1 > len(blob):
            raise DataError(f"{path}: class table truncated")
        names.append(blob[offset : offset + name_len].decode("utf-8"))
        offset += name_len
        role_byte = blob[offset]
        offset += 1
        if role_byte not in _BYTE_TO_ROLE:
            raise DataError(f"{path}: unknown class role byte {role_byte}")
        roles.append(_BYTE_TO_ROLE[role_byte])
    if offset != len(blob):
        raise DataError(f"{path}: trailing bytes after class table")
    return data, tuple(names), tuple(roles)


# ---------------------------------------------------------------------------
# Metadata IO


def _parse_record(line: str, row: int) -> tuple[Post, int, bool] | None:
    """Parse one metadata line.

    Returns (post, rejected_tag_count, geotag_was_invalid), or None when the
    record is malformed.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError:
        return None
    if not isinstance(obj, dict):
        return None
    post_id = obj.get("id")
    raw_tags = obj.get("tags")
    if not isinstance(post_id, str) or not post_id or not isinstance(raw_tags, list):
        return None
    likes = obj.get("likes", 0)
    comments = obj.get("comments", 0)
    if not isinstance(likes, int) or not isinstance(comments, int):
        return None
    if likes < 0 or comments < 0:
        return None
    if not all(isinstance(t, str) for t in raw_tags):
        return None

    tags: set[str] = set()
    rejected = 0
    for raw in raw_tags:
        try:
            tags.add(normalize_tag(raw))
        except RejectedTagError:
            rejected += 1
    if len(tags) > MAX_TAGS_PER_POST:
        return None

    lat = obj.get("lat")
    lon = obj.get("lon")
    geotag: tuple[float, float] | None = None
    geotag_invalid = False
    if lat is not None and lon is not None:
        if (
            isinstance(lat, (int, float))
            and isinstance(lon, (int, float))
            and -90.0 <= lat <= 90.0
            and -180.0 <= lon <= 180.0
        ):
            geotag = (float(lat), float(lon))
        else:
            geotag_invalid = True
    elif lat is not None or lon is not None:
        geotag_invalid = True

    post = Post(
        id=post_id,
        tags=frozenset(tags),
        geotag=geotag,
        likes=likes,
        comments=comments,
        row=row,
    )
    return post, rejected, geotag_invalid


def read_metadata(path: str | Path) -> tuple[list[Post], IngestReport]:
    """Read metadata lines into posts; malformed lines keep their row slot."""
    report = IngestReport()
    posts: list[Post] = []
    seen_ids: set[str] = set()
    row = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            report.lines_total += 1
            parsed = _parse_record(line, row)
            row += 1
            if parsed is None:
                report.note_malformed(lineno)
                continue
            post, rejected, geotag_invalid = parsed
            report.rejected_tags += rejected
            if geotag_invalid:
                report.invalid_geotags += 1
            if post.id in seen_ids:
                report.duplicate_ids += 1
                continue
            seen_ids.add(post.id)
            posts.append(post)
    report.posts = len(posts)
    return posts, report


def save_metadata(posts: Iterable[Post], path: str | Path) -> None:
    """Write posts as JSON lines in row order, compacting row indices.

    The output reads back as an identical corpus when the source had no
    skipped lines; otherwise rows are renumbered 0..n-1.
    """
    ordered = sorted(posts, key=lambda p: p.row)
    with open(path, "w", encoding="utf-8") as fh:
        for post in ordered:
            record: dict = {"id": post.id, "tags": sorted(post.tags)}
            if post.geotag is not None:
                record["lat"] = post.geotag[0]
                record["lon"] = post.geotag[1]
            record["likes"] = post.likes
            record["comments"] = post.comments
            fh.write(json.dumps(record, ensure_ascii=False, separators=(",", ":")))
            fh.write("\n")


# ---------------------------------------------------------------------------
# Ingestion


def _validate_features(data: np.ndarray, path) -> FeatureMatrix:
    if not np.isfinite(data).all():
        raise DataError(f"{path}: non-finite feature values")
    return FeatureMatrix(n=data.shape[0], d=data.shape[1], data=data)


def _validate_posteriors(
    data: np.ndarray,
    names: tuple[str, ...] | None,
    roles: tuple[str, ...] | None,
    path,
) -> PosteriorMatrix:
    if names is None or roles is None:
        raise DataError(f"{path}: posterior file lacks its class table")
    if not np.isfinite(data).all():
        raise DataError(f"{path}: non-finite posterior values")
    if data.size and (data.min() < 0.0 or data.max() > 1.0):
        raise DataError(f"{path}: posterior entries outside [0, 1]")
    sums = data.sum(axis=1, dtype=np.float64)
    if data.size and np.abs(sums - 1.0).max() > 1e-3:
        bad = int(np.abs(sums - 1.0).argmax())
        raise DataError(f"{path}: posterior row {bad} sums to {sums[bad]:.6f}")
    return PosteriorMatrix(
        n=data.shape[0],
        k=data.shape[1],
        data=data,
        class_names=names,
        class_roles=roles,
    )


def ingest(
    metadata_path: str | Path,
    feature_path: str | Path,
    posterior_path: str | Path | None = None,
) -> tuple[Corpus, IngestReport]:
    """Load and validate a corpus from its three files.

    Row counts must line up exactly: every non-blank metadata line owns one
    matrix row, malformed lines included (their rows simply go unreferenced).
    """
    posts, report = read_metadata(metadata_path)

    fdata, fnames, _froles = load_matrix(feature_path)
    if fnames is not None:
        raise DataError(f"{feature_path}: unexpected class table in feature file")
    if fdata.shape[0] != report.lines_total:
        raise DataError(
            f"row count mismatch: {report.lines_total} metadata records vs "
            f"{fdata.shape[0]} feature rows"
        )
    features = _validate_features(fdata, feature_path)

    posteriors = None
    if posterior_path is not None:
        pdata, pnames, proles = load_matrix(posterior_path)
        if pdata.shape[0] != features.n:
            raise DataError(
                f"row count mismatch: {features.n} feature rows vs "
                f"{pdata.shape[0]} posterior rows"
            )
        posteriors = _validate_posteriors(pdata, pnames, proles, posterior_path)

    return Corpus(posts, features, posteriors), report


# ---------------------------------------------------------------------------
# Tag index


@dataclass(frozen=True, eq=False)
class TagIndex:
    """Posting lists and frequency ranks for the most common tags."""

    postings: Mapping[str, np.ndarray]  # tag -> sorted row indices
    frequencies: Mapping[str, int]
    ranked: tuple[str, ...]  # ranked[0] is the most frequent tag

    def __contains__(self, tag: str) -> bool:
        return tag in self.postings

    def __len__(self) -> int:
        return len(self.ranked)

    @property
    def tags(self) -> tuple[str, ...]:
        return self.ranked

    def posting(self, tag: str) -> np.ndarray:
        if tag not in self.postings:
            raise ValidationError(f"tag {tag!r} not in index")
        return self.postings[tag]

    def frequency(self, tag: str) -> int:
        if tag not in self.frequencies:
            raise ValidationError(f"tag {tag!r} not in index")
        return self.frequencies[tag]

    def freq_rank(self, tag: str) -> int:
        """1-based frequency rank (rank 1 = most frequent)."""
        try:
            return self.ranked.index(tag) + 1
        except ValueError:
            raise ValidationError(f"tag {tag!r} not in index") from None


def build_tag_index(corpus: Corpus, top_k: int) -> TagIndex:
    """Index the top_k most frequent tags (ties broken lexicographically)."""
    if len(corpus) == 0:
        raise ValidationError("cannot index an empty corpus")
    if top_k < 1:
        raise ValidationError("top_k must be >= 1")

    counts: dict[str, int] = {}
    rows: dict[str, list[int]] = {}
    for post in corpus.posts:
        for tag in post.tags:
            counts[tag] = counts.get(tag, 0) + 1
            rows.setdefault(tag, []).append(post.row)

    ranked_all = sorted(counts, key=lambda t: (-counts[t], t))
    kept = tuple(ranked_all[:top_k])
    postings = {}
    for tag in kept:
        posting = np.array(sorted(rows[tag]), dtype=np.int64)
        posting.setflags(write=False)
        postings[tag] = posting
    frequencies = {tag: counts[tag] for tag in kept}
    return TagIndex(postings=postings, frequencies=frequencies, ranked=kept)
