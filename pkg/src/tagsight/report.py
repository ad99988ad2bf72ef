"""Raw-versus-filtered comparison of tag visualness.

Evaluates the same tag list (from one shared tag index, under one global
seed) on the unfiltered corpus and on a filtered view, then reports
per-tag accuracy deltas and the mean accuracy of each condition's top
tags.  Negatives are re-sampled inside the filtered view, so an identity
filter reproduces the raw condition exactly.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from ._util import fmt
from .corpus import Corpus, TagIndex
from .errors import EmptyReportError
from .noise import FilterSpec
from .visualness import ExperimentConfig, VisualnessReport, rank_visualness

DEFAULT_TOP_N = 20

COMPARISON_COLUMNS = ("tag", "acc_raw", "acc_filtered", "delta")


@dataclass(frozen=True)
class TagComparison:
    tag: str
    acc_raw: float
    acc_filtered: float

    @property
    def delta(self) -> float:
        return self.acc_filtered - self.acc_raw


@dataclass(frozen=True)
class ComparisonReport:
    common: tuple[TagComparison, ...]  # evaluable in both conditions
    raw_only: tuple[str, ...]
    filtered_only: tuple[str, ...]
    filter_desc: str
    top_n: int
    raw_report: VisualnessReport
    filtered_report: VisualnessReport

    def top_mean(self, n: int, condition: str) -> float:
        """Mean accuracy of the condition's n best common tags."""
        if condition == "raw":
            accs = sorted((c.acc_raw for c in self.common), reverse=True)
        elif condition == "filtered":
            accs = sorted((c.acc_filtered for c in self.common), reverse=True)
        else:
            raise ValueError("condition must be 'raw' or 'filtered'")
        return float(np.mean(accs[:n]))

    @property
    def top_means(self) -> tuple[float, float]:
        return self.top_mean(self.top_n, "raw"), self.top_mean(self.top_n, "filtered")

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(",".join(COMPARISON_COLUMNS) + "\n")
        for row in self.common:
            out.write(
                f"{row.tag},{fmt(row.acc_raw)},{fmt(row.acc_filtered)},{fmt(row.delta)}\n"
            )
        raw_mean, filtered_mean = self.top_means
        out.write(f"# filter: {self.filter_desc}\n")
        out.write(f"# top{self.top_n}_mean_raw: {fmt(raw_mean)}\n")
        out.write(f"# top{self.top_n}_mean_filtered: {fmt(filtered_mean)}\n")
        if self.raw_only:
            out.write(f"# evaluable_raw_only: {' '.join(self.raw_only)}\n")
        if self.filtered_only:
            out.write(f"# evaluable_filtered_only: {' '.join(self.filtered_only)}\n")
        return out.getvalue()


def compare_conditions(
    corpus: Corpus,
    filter_spec: FilterSpec,
    tag_index: TagIndex,
    tags: Iterable[str],
    config: ExperimentConfig,
    top_n: int = DEFAULT_TOP_N,
    workers: int = 1,
) -> ComparisonReport:
    """Run the visualness ranking on raw and filtered views of the corpus.

    Both conditions share the tag index and the global seed; tags evaluable
    in only one condition are listed separately rather than compared.
    """
    tags = list(dict.fromkeys(tags))
    raw_view = corpus.full_view()
    filtered_view = filter_spec.apply(corpus)

    raw_report = rank_visualness(raw_view, tag_index, tags, config, workers=workers)
    filtered_report = rank_visualness(
        filtered_view, tag_index, tags, config, workers=workers
    )

    raw_acc = {r.tag: r.balanced_accuracy for r in raw_report.results}
    filtered_acc = {r.tag: r.balanced_accuracy for r in filtered_report.results}
    common_tags = sorted(set(raw_acc) & set(filtered_acc))
    if not common_tags:
        raise EmptyReportError("no tag is evaluable in both conditions")

    common = tuple(
        TagComparison(tag=t, acc_raw=raw_acc[t], acc_filtered=filtered_acc[t])
        for t in common_tags
    )
    return ComparisonReport(
        common=common,
        raw_only=tuple(sorted(set(raw_acc) - set(filtered_acc))),
        filtered_only=tuple(sorted(set(filtered_acc) - set(raw_acc))),
        filter_desc=filter_spec.describe(),
        top_n=top_n,
        raw_report=raw_report,
        filtered_report=filtered_report,
    )
