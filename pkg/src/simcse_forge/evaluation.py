"""Metrics and report emission.

Accuracy for the classification tasks, Pearson correlation for similarity,
a joint true-vs-predicted score histogram (CSV, for external plotting), and
tabular reports with one row per (model, task, metric) plus a per-model
overall row (the plain mean of its task metrics, labeled as such).
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger("simcse_forge.evaluation")


class UndefinedMetricError(ValueError):
    """Correlation of a zero-variance sequence is undefined."""


def accuracy(preds, labels) -> float:
    preds = list(preds)
    labels = list(labels)
    if not preds:
        raise ValueError("accuracy of an empty prediction list is undefined")
    if len(preds) != len(labels):
        raise ValueError(f"length mismatch: {len(preds)} predictions, {len(labels)} labels")
    return sum(p == l for p, l in zip(preds, labels)) / len(preds)


def pearson(x, y) -> float:
    """Two-pass sample correlation: sum((x-mx)(y-my)) / sqrt(ssx * ssy)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"pearson needs two equal-length vectors, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise ValueError("pearson needs at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    ssx = float(dx @ dx)
    ssy = float(dy @ dy)
    if ssx == 0.0 or ssy == 0.0:
        raise UndefinedMetricError(
            "pearson is undefined for a constant input (zero variance)")
    return float((dx @ dy) / np.sqrt(ssx * ssy))


# -- heatmap ---------------------------------------------------------------------

def _bin_indices(values: np.ndarray, bins: int, lo: float, hi: float) -> np.ndarray:
    clipped = np.clip(values, lo, hi)
    if np.any(values != clipped):
        logger.warning("heatmap: %d scores outside [%g, %g] clamped",
                       int(np.sum(values != clipped)), lo, hi)
    idx = np.floor((clipped - lo) / (hi - lo) * bins).astype(int)
    return np.minimum(idx, bins - 1)   # hi lands in the top bin


def score_histogram(values, bins: int = 6, lo: float = 0.0, hi: float = 5.0) -> np.ndarray:
    """1D count histogram over equal-width bins (top edge inclusive)."""
    idx = _bin_indices(np.asarray(values, dtype=np.float64), bins, lo, hi)
    return np.bincount(idx, minlength=bins)


def similarity_heatmap(true_scores, pred_scores, bins: int = 6,
                       lo: float = 0.0, hi: float = 5.0) -> tuple[np.ndarray, str]:
    """Joint histogram of true (rows) vs predicted (columns) scores.

    Returns (grid, csv). The CSV carries bin edges in the header row and
    first column so the grid is self-describing.
    """
    t = np.asarray(true_scores, dtype=np.float64)
    p = np.asarray(pred_scores, dtype=np.float64)
    if t.shape != p.shape or t.ndim != 1:
        raise ValueError("true and predicted score vectors must have equal length")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    ti = _bin_indices(t, bins, lo, hi)
    pi = _bin_indices(p, bins, lo, hi)
    grid = np.zeros((bins, bins), dtype=np.int64)
    np.add.at(grid, (ti, pi), 1)

    edges = np.linspace(lo, hi, bins + 1)
    labels = [f"{edges[i]:.3f}-{edges[i + 1]:.3f}" for i in range(bins)]
    out = io.StringIO()
    out.write("true\\pred," + ",".join(labels) + "\n")
    for i in range(bins):
        out.write(labels[i] + "," + ",".join(str(c) for c in grid[i]) + "\n")
    return grid, out.getvalue()


# -- reports ---------------------------------------------------------------------

METRIC_RANGES = {"accuracy": (0.0, 1.0), "pearson": (-1.0, 1.0),
                 "alignment": (-1.0, 1.0), "mean": (-1.0, 1.0)}


@dataclass
class MetricReport:
    model: str
    task: str
    metric: str
    value: float
    n_examples: int
    stage: str = "baseline"

    def __post_init__(self):
        self.value = float(self.value)
        self.n_examples = int(self.n_examples)
        if self.metric not in METRIC_RANGES:
            raise ValueError(f"unknown metric {self.metric!r}")
        lo, hi = METRIC_RANGES[self.metric]
        if not lo - 1e-12 <= self.value <= hi + 1e-12:
            raise ValueError(
                f"{self.metric} value {self.value} outside [{lo}, {hi}]")
        if self.n_examples < 1:
            raise ValueError("n_examples must be positive")


def _with_overall(reports) -> list[MetricReport]:
    out = list(reports)
    groups: dict[tuple[str, str], list[MetricReport]] = {}
    for r in reports:
        groups.setdefault((r.model, r.stage), []).append(r)
    for (model, stage), rs in groups.items():
        if len(rs) < 2:
            continue
        out.append(MetricReport(model, "overall", "mean",
                                float(np.mean([r.value for r in rs])),
                                sum(r.n_examples for r in rs), stage))
    return out


def emit_report(reports, format: str = "tsv") -> str:
    """One row per (model, task, metric); models with several task metrics
    get an extra overall row holding their plain mean."""
    rows = _with_overall(reports)
    if format == "tsv":
        lines = ["model\ttask\tmetric\tvalue\tn\tstage"]
        for r in rows:
            lines.append(f"{r.model}\t{r.task}\t{r.metric}\t{r.value!r}"
                         f"\t{r.n_examples}\t{r.stage}")
        return "\n".join(lines) + "\n"
    if format == "pretty":
        header = (f"{'model':<24} {'task':<12} {'metric':<9} "
                  f"{'value':>8} {'n':>6}  stage")
        lines = [header, "-" * len(header)]
        for r in rows:
            lines.append(f"{r.model:<24} {r.task:<12} {r.metric:<9} "
                         f"{r.value:>8.4f} {r.n_examples:>6}  {r.stage}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {format!r}")


def parse_report_tsv(text: str) -> list[MetricReport]:
    """Inverse of emit_report(..., 'tsv'), minus the synthesized overall rows."""
    lines = [l for l in text.splitlines() if l]
    out = []
    for line in lines[1:]:
        model, task, metric, value, n, stage = line.split("\t")
        if task == "overall":
            continue
        out.append(MetricReport(model, task, metric, float(value), int(n), stage))
    return out
