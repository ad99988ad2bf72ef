"""SVG renderings of the pipeline's tables.

The CSVs are the contract; these plots are a convenience layer over the
same data and are exempt from byte-for-byte reproducibility.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

from .corr import CorrelationMatrix
from .geo import GeoRecord
from .visualness import UNLABELED, VisualnessReport

_CATEGORY_COLORS = {
    "concrete-food": "#d62728",
    "food-related": "#1f77b4",
    "non-food": "#2ca02c",
    UNLABELED: "#7f7f7f",
}


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def visualness_distribution(report: VisualnessReport, path: str | Path) -> None:
    """Accuracy of every evaluated tag, best first, colored by category."""
    plt = _pyplot()
    accs = [r.balanced_accuracy for r in report.results]
    colors = [_CATEGORY_COLORS.get(r.category, "#7f7f7f") for r in report.results]
    fig, ax = plt.subplots(figsize=(max(6, len(accs) * 0.12), 4))
    ax.bar(range(len(accs)), accs, color=colors, width=0.9)
    ax.axhline(0.5, color="black", linewidth=0.8, linestyle="--")
    ax.set_xlabel("tag (sorted by visualness)")
    ax.set_ylabel("balanced accuracy")
    ax.set_ylim(0.0, 1.0)
    handles = [plt.Rectangle((0, 0), 1, 1, color=c) for c in _CATEGORY_COLORS.values()]
    ax.legend(handles, list(_CATEGORY_COLORS), fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def geo_scatter(records: Sequence[GeoRecord], path: str | Path) -> None:
    """World scatter of geotagged posts (resolved in color, rest gray)."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 4.5))
    resolved = [(r.lon, r.lat) for r in records if r.country is not None]
    unresolved = [(r.lon, r.lat) for r in records if r.country is None]
    if unresolved:
        xs, ys = zip(*unresolved)
        ax.scatter(xs, ys, s=3, color="#bbbbbb", label="unresolved")
    if resolved:
        xs, ys = zip(*resolved)
        ax.scatter(xs, ys, s=3, color="#1f77b4", label="resolved")
    ax.set_xlim(-180, 180)
    ax.set_ylim(-90, 90)
    ax.set_xlabel("longitude")
    ax.set_ylabel("latitude")
    ax.legend(fontsize=8, loc="lower left")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def correlation_heatmap(matrix: CorrelationMatrix, path: str | Path) -> None:
    """Symmetric phi heat map with tag labels; undefined cells stay blank."""
    plt = _pyplot()
    t = len(matrix.tags)
    fig, ax = plt.subplots(figsize=(max(4, t * 0.45), max(3.5, t * 0.45)))
    image = ax.imshow(matrix.values, vmin=-1.0, vmax=1.0, cmap="RdBu_r")
    ax.set_xticks(range(t), matrix.tags, rotation=90, fontsize=7)
    ax.set_yticks(range(t), matrix.tags, fontsize=7)
    fig.colorbar(image, ax=ax, shrink=0.8, label="phi")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
