"""Offline reverse geocoding against a bundled low-resolution country atlas.

Containment uses the even-odd (ray crossing) rule on lon/lat treated as
planar coordinates, with polygons that span the antimeridian unwrapped
onto a continuous longitude range first.  Points contained by no polygon
fall back to the nearest polygon boundary by great-circle distance when it
lies within ``coastal_km`` (the paper-era geocoders lost coastal points to
the sea; this replaces their online fallback with a deterministic rule).

Atlas file format: header line "TSATLAS 1"; then, per polygon, a line
"CC Continent VertexCount" (country code first, vertex count last, the
continent name between, spaces allowed) followed by VertexCount lines of
"lon lat".  Rings are closed: first vertex equals last.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import Corpus, CorpusView, as_view
from .errors import DataError, MissingDataError, ValidationError

ATLAS_HEADER = "TSATLAS 1"
CONTINENTS = (
    "Africa",
    "Asia",
    "Australia",
    "Europe",
    "N. America",
    "S. America",
    "Antarctica",
)
DEFAULT_COASTAL_KM = 25.0
EARTH_RADIUS_KM = 6371.0088

RES_DIRECT = "direct"
RES_COASTAL = "coastal-fallback"
RES_UNRESOLVED = "unresolved"


@dataclass(frozen=True)
class CountryPolygon:
    country: str
    continent: str
    lons: tuple[float, ...]  # closed ring: first == last
    lats: tuple[float, ...]
    shifted: bool  # ring crosses the antimeridian; negative lons got +360

    @property
    def n_vertices(self) -> int:
        return len(self.lons)


@dataclass(frozen=True)
class CountryAtlas:
    polygons: tuple[CountryPolygon, ...]
    continent_of: Mapping[str, str]


@dataclass(frozen=True)
class GeoRecord:
    lat: float
    lon: float
    country: str | None
    continent: str | None
    resolution: str  # direct | coastal-fallback | unresolved


def _unwrap_ring(lons: Sequence[float]) -> tuple[tuple[float, ...], bool]:
    """Shift negative longitudes by +360 when the ring crosses the antimeridian."""
    crosses = any(
        abs(lons[i + 1] - lons[i]) > 180.0 for i in range(len(lons) - 1)
    )
    if not crosses:
        return tuple(lons), False
    return tuple(lon + 360.0 if lon < 0 else lon for lon in lons), True


def make_polygon(
    country: str, continent: str, vertices: Iterable[tuple[float, float]]
) -> CountryPolygon:
    """Build a validated polygon from (lon, lat) vertices."""
    verts = list(vertices)
    if len(verts) < 4:
        raise ValidationError(f"{country}: a closed ring needs >= 4 vertices")
    if verts[0] != verts[-1]:
        raise ValidationError(f"{country}: ring is not closed (first != last)")
    if continent not in CONTINENTS:
        raise ValidationError(f"{country}: unknown continent {continent!r}")
    for lon, lat in verts:
        if not (-180.0 <= lon <= 180.0 and -90.0 <= lat <= 90.0):
            raise ValidationError(f"{country}: vertex ({lon}, {lat}) out of range")
    lons, shifted = _unwrap_ring([v[0] for v in verts])
    lats = tuple(v[1] for v in verts)
    return CountryPolygon(country, continent, lons, lats, shifted)


def build_atlas(polygons: Iterable[CountryPolygon]) -> CountryAtlas:
    polys = tuple(polygons)
    continent_of: dict[str, str] = {}
    for poly in polys:
        known = continent_of.get(poly.country)
        if known is not None and known != poly.continent:
            raise DataError(
                f"{poly.country} mapped to both {known} and {poly.continent}"
            )
        continent_of[poly.country] = poly.continent
    return CountryAtlas(polygons=polys, continent_of=continent_of)


def load_atlas(path: str | Path | None = None) -> CountryAtlas:
    """Load an atlas file; None loads the bundled world atlas."""
    if path is None:
        ref = resources.files("tagsight.data").joinpath("atlas.txt")
        text = ref.read_text(encoding="utf-8")
        source = "bundled atlas"
    else:
        text = Path(path).read_text(encoding="utf-8")
        source = str(path)
    lines = [ln.rstrip("\n") for ln in text.splitlines()]
    lines = [ln for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines or lines[0].strip() != ATLAS_HEADER:
        raise DataError(f"{source}: missing '{ATLAS_HEADER}' header")

    polygons = []
    i = 1
    while i < len(lines):
        parts = lines[i].split()
        if len(parts) < 3:
            raise DataError(f"{source}: bad polygon header {lines[i]!r}")
        country = parts[0]
        continent = " ".join(parts[1:-1])
        try:
            count = int(parts[-1])
        except ValueError:
            raise DataError(f"{source}: bad vertex count in {lines[i]!r}") from None
        i += 1
        if count < 4 or i + count > len(lines):
            raise DataError(f"{source}: polygon {country} truncated")
        vertices = []
        for j in range(count):
            try:
                lon_s, lat_s = lines[i + j].split()
                vertices.append((float(lon_s), float(lat_s)))
            except ValueError:
                raise DataError(
                    f"{source}: bad vertex line {lines[i + j]!r}"
                ) from None
        i += count
        try:
            polygons.append(make_polygon(country, continent, vertices))
        except ValidationError as exc:
            raise DataError(f"{source}: {exc}") from None
    return build_atlas(polygons)


def save_atlas(atlas: CountryAtlas, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(ATLAS_HEADER + "\n")
        for poly in atlas.polygons:
            fh.write(f"{poly.country} {poly.continent} {poly.n_vertices}\n")
            for lon, lat in zip(poly.lons, poly.lats):
                out_lon = lon - 360.0 if poly.shifted and lon > 180.0 else lon
                fh.write(f"{out_lon:.6f} {lat:.6f}\n")


# ---------------------------------------------------------------------------
# Geometry


def point_in_polygon(lat: float, lon: float, poly: CountryPolygon) -> bool:
    """Even-odd ray-crossing containment test (antimeridian aware)."""
    px = lon
    if poly.shifted and px < 0:
        px += 360.0
    py = lat
    inside = False
    lons, lats = poly.lons, poly.lats
    for i in range(len(lons) - 1):
        y1, y2 = lats[i], lats[i + 1]
        if (y1 > py) == (y2 > py):
            continue
        x_cross = lons[i] + (py - y1) * (lons[i + 1] - lons[i]) / (y2 - y1)
        if px < x_cross:
            inside = not inside
    return inside


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance between two points, in kilometers."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(a)))


def _bearing(lat1, lon1, lat2, lon2) -> float:
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dl = math.radians(lon2 - lon1)
    x = math.sin(dl) * math.cos(p2)
    y = math.cos(p1) * math.sin(p2) - math.sin(p1) * math.cos(p2) * math.cos(dl)
    return math.atan2(x, y)


def point_segment_km(
    lat: float, lon: float, lat1: float, lon1: float, lat2: float, lon2: float
) -> float:
    """Great-circle distance from a point to a segment between two vertices."""
    d12 = haversine_km(lat1, lon1, lat2, lon2)
    d1p = haversine_km(lat1, lon1, lat, lon)
    if d12 < 1e-9:
        return d1p
    theta12 = _bearing(lat1, lon1, lat2, lon2)
    theta1p = _bearing(lat1, lon1, lat, lon)
    delta1p = d1p / EARTH_RADIUS_KM
    sin_xt = math.sin(delta1p) * math.sin(theta1p - theta12)
    sin_xt = max(-1.0, min(1.0, sin_xt))
    cross_track = abs(math.asin(sin_xt)) * EARTH_RADIUS_KM
    # Along-track position decides whether the perpendicular foot is inside.
    cos_delta = math.cos(delta1p)
    cos_xt = math.cos(cross_track / EARTH_RADIUS_KM)
    if abs(cos_xt) < 1e-12:
        return min(d1p, haversine_km(lat2, lon2, lat, lon))
    ratio = max(-1.0, min(1.0, cos_delta / cos_xt))
    along = math.acos(ratio) * EARTH_RADIUS_KM
    if math.cos(theta1p - theta12) < 0.0:
        along = -along
    if 0.0 <= along <= d12:
        return cross_track
    return min(d1p, haversine_km(lat2, lon2, lat, lon))


def distance_to_boundary_km(lat: float, lon: float, poly: CountryPolygon) -> float:
    """Minimum great-circle distance from a point to the polygon's boundary."""
    best = math.inf
    lons, lats = poly.lons, poly.lats
    for i in range(len(lons) - 1):
        lon1 = lons[i] - 360.0 if poly.shifted and lons[i] > 180.0 else lons[i]
        lon2 = lons[i + 1] - 360.0 if poly.shifted and lons[i + 1] > 180.0 else lons[i + 1]
        d = point_segment_km(lat, lon, lats[i], lon1, lats[i + 1], lon2)
        if d < best:
            best = d
    return best


# ---------------------------------------------------------------------------
# Reverse geocoding


def reverse_geocode(
    lat: float,
    lon: float,
    atlas: CountryAtlas,
    coastal_km: float = DEFAULT_COASTAL_KM,
) -> GeoRecord:
    """Resolve one coordinate to a country/continent.

    coastal_km = 0 disables the fallback entirely.
    """
    if not (-90.0 <= lat <= 90.0):
        raise ValidationError(f"latitude {lat} out of range")
    if not (-180.0 <= lon <= 180.0):
        raise ValidationError(f"longitude {lon} out of range")
    for poly in atlas.polygons:
        if point_in_polygon(lat, lon, poly):
            return GeoRecord(lat, lon, poly.country, poly.continent, RES_DIRECT)
    if coastal_km > 0.0:
        best_poly = None
        best_km = math.inf
        for poly in atlas.polygons:
            d = distance_to_boundary_km(lat, lon, poly)
            if d < best_km:
                best_km = d
                best_poly = poly
        if best_poly is not None and best_km <= coastal_km:
            return GeoRecord(
                lat, lon, best_poly.country, best_poly.continent, RES_COASTAL
            )
    return GeoRecord(lat, lon, None, None, RES_UNRESOLVED)


@dataclass(frozen=True)
class GeoStats:
    records: Mapping[int, GeoRecord]  # corpus row -> record (geotagged posts only)
    n_posts: int
    n_geotagged: int
    n_resolved: int
    country_counts: Mapping[str, int]
    continent_counts: Mapping[str, int]

    @property
    def geotagged_fraction(self) -> float:
        return self.n_geotagged / self.n_posts if self.n_posts else 0.0

    @property
    def resolved_fraction(self) -> float:
        """Fraction of geotagged posts that resolved to a country."""
        return self.n_resolved / self.n_geotagged if self.n_geotagged else 0.0

    def continent_of_row(self, row: int) -> str | None:
        record = self.records.get(row)
        return record.continent if record else None


def geocode_corpus(
    corpus_or_view: Corpus | CorpusView,
    atlas: CountryAtlas,
    coastal_km: float = DEFAULT_COASTAL_KM,
) -> GeoStats:
    """Reverse geocode every geotagged post; failures become unresolved."""
    view = as_view(corpus_or_view)
    records: dict[int, GeoRecord] = {}
    country_counts: dict[str, int] = {}
    continent_counts: dict[str, int] = {}
    n_resolved = 0
    for post in view.posts():
        if post.geotag is None:
            continue
        record = reverse_geocode(post.geotag[0], post.geotag[1], atlas, coastal_km)
        records[post.row] = record
        if record.country is not None:
            n_resolved += 1
            country_counts[record.country] = country_counts.get(record.country, 0) + 1
            continent_counts[record.continent] = (
                continent_counts.get(record.continent, 0) + 1
            )
    return GeoStats(
        records=records,
        n_posts=len(view),
        n_geotagged=len(records),
        n_resolved=n_resolved,
        country_counts=dict(sorted(country_counts.items())),
        continent_counts=dict(sorted(continent_counts.items())),
    )


# ---------------------------------------------------------------------------
# Continental breakdown

LABEL_SOURCE_POSTERIOR = "confident-posterior-class"
LABEL_SOURCE_VISUAL_TAGS = "visual-tag-set"
OVERALL = "Overall"


def continent_breakdown(
    corpus_or_view: Corpus | CorpusView,
    geostats: GeoStats,
    label_source: str,
    top_n: int,
    visual_tags: Sequence[str] | None = None,
    threshold: float = 0.5,
) -> dict[str, list[tuple[str, int]]]:
    """Top labels per continent (plus Overall), ties broken lexicographically.

    label_source "confident-posterior-class" counts confidently recognized
    food classes; "visual-tag-set" counts membership in the supplied tag
    list.
    """
    view = as_view(corpus_or_view)
    if label_source not in (LABEL_SOURCE_POSTERIOR, LABEL_SOURCE_VISUAL_TAGS):
        raise ValidationError(f"unknown label source {label_source!r}")
    if top_n < 1:
        raise ValidationError("top_n must be >= 1")

    counts: dict[str, dict[str, int]] = {OVERALL: {}}

    def bump(continent: str | None, label: str) -> None:
        for key in (OVERALL, continent) if continent else (OVERALL,):
            bucket = counts.setdefault(key, {})
            bucket[label] = bucket.get(label, 0) + 1

    if label_source == LABEL_SOURCE_POSTERIOR:
        posteriors = view.corpus.posteriors
        if posteriors is None:
            raise MissingDataError("corpus has no posterior matrix")
        role_codes = posteriors.role_codes()
        data = posteriors.data
        for post in view.posts():
            row = post.row
            idx = int(data[row].argmax())
            if data[row, idx] > threshold and role_codes[idx] == 1:
                bump(geostats.continent_of_row(row), posteriors.class_names[idx])
    else:
        if visual_tags is None:
            raise MissingDataError("visual-tag-set source needs a tag list")
        wanted = set(visual_tags)
        for post in view.posts():
            continent = geostats.continent_of_row(post.row)
            for tag in sorted(post.tags & wanted):
                bump(continent, tag)

    table: dict[str, list[tuple[str, int]]] = {}
    for continent, bucket in counts.items():
        ranked = sorted(bucket.items(), key=lambda kv: (-kv[1], kv[0]))
        table[continent] = ranked[:top_n]
    order = [OVERALL] + [c for c in CONTINENTS if c in table and c != OVERALL]
    return {key: table[key] for key in order}
