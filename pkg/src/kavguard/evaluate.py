"""Detection-quality metrics and report emission.

The authoritative AUROC is the rank (Mann-Whitney) statistic with average
ranks for ties; the emitted curve comes from a threshold sweep over the
union of scores and integrates to the same number. Counting metrics are
exact integer ratios. Reports are plot-ready data files, never images.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .decision import Category, Verdict
from .errors import UsageError


@dataclass(frozen=True)
class RocCurve:
    """Threshold-sweep ROC points from (0,0) to (1,1) plus the rank AUROC."""

    points: list[tuple[float, float]]  # (fpr, tpr)
    auroc: float


@dataclass(frozen=True)
class SweepLevel:
    noise_level: float
    mean_confidence: float
    auc: float  # NaN when no reference score set was supplied


@dataclass(frozen=True)
class SweepReport:
    """Per-noise-level confidence and detection quality, ascending levels."""

    levels: list[SweepLevel]


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank range."""
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    change = np.r_[True, sorted_vals[1:] != sorted_vals[:-1]]
    group = np.cumsum(change) - 1
    counts = np.bincount(group)
    ends = np.cumsum(counts)
    starts = ends - counts + 1
    avg = (starts + ends) / 2.0
    ranks = np.empty(len(values), dtype=np.float64)
    ranks[order] = avg[group]
    return ranks


def _check_scores(scores, side: str) -> np.ndarray:
    arr = np.asarray(list(scores), dtype=np.float64)
    if arr.size == 0:
        raise UsageError(f"{side} score set is empty")
    if not np.all(np.isfinite(arr)):
        raise UsageError(f"{side} score set contains non-finite values")
    return arr


def auroc(positives: Iterable[float], negatives: Iterable[float]) -> RocCurve:
    """Probability that a random positive outscores a random negative
    (ties count half), plus the matching ROC curve."""
    pos = _check_scores(positives, "positive")
    neg = _check_scores(negatives, "negative")
    n_pos, n_neg = len(pos), len(neg)

    ranks = _average_ranks(np.concatenate([pos, neg]))
    u_pos = float(np.sum(ranks[:n_pos])) - n_pos * (n_pos + 1) / 2.0
    area = u_pos / (n_pos * n_neg)

    pos_sorted = np.sort(pos)
    neg_sorted = np.sort(neg)
    thresholds = np.unique(np.concatenate([pos, neg]))[::-1]
    points = [(0.0, 0.0)]
    for t in thresholds:
        tpr = (n_pos - np.searchsorted(pos_sorted, t, side="left")) / n_pos
        fpr = (n_neg - np.searchsorted(neg_sorted, t, side="left")) / n_neg
        points.append((float(fpr), float(tpr)))
    return RocCurve(points=points, auroc=area)


def trapezoid_area(points: Sequence[tuple[float, float]]) -> float:
    """Area under a piecewise-linear (fpr, tpr) curve."""
    area = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


def outlier_rate(verdicts: Iterable[Verdict]) -> float:
    """Fraction of verdicts labeled Outlier."""
    total = 0
    outliers = 0
    for v in verdicts:
        total += 1
        if v.category == Category.OUTLIER:
            outliers += 1
    if total == 0:
        raise UsageError("no verdicts to rate")
    return outliers / total


def accuracy(verdicts: Sequence[Verdict], truth: Sequence[int]
             ) -> tuple[float, float, float]:
    """(overall top-1 accuracy, accuracy among Certain verdicts,
    fraction abstained as Uncertain or Outlier).

    The certain-only accuracy is NaN when nothing was Certain.
    """
    if len(verdicts) != len(truth):
        raise UsageError(
            f"{len(verdicts)} verdicts vs {len(truth)} labels")
    if not verdicts:
        raise UsageError("no verdicts to score")
    correct = 0
    certain = 0
    certain_correct = 0
    abstained = 0
    for v, label in zip(verdicts, truth):
        hit = v.top1 == label
        correct += hit
        if v.category == Category.CERTAIN:
            certain += 1
            certain_correct += hit
        else:
            abstained += 1
    certain_acc = certain_correct / certain if certain else math.nan
    return correct / len(verdicts), certain_acc, abstained / len(verdicts)


def sweep_report(per_level_verdicts: Mapping[float, Iterable[Verdict]],
                 baseline: Iterable[float] | None = None) -> SweepReport:
    """Aggregate verdict streams per noise level.

    With a ``baseline`` (clean / in-distribution) confidence set, each
    level also gets the AUROC of baseline-vs-level confidences; without
    one the AUC column is NaN.
    """
    per_level = {float(lvl): [v.confidence for v in vs]
                 for lvl, vs in per_level_verdicts.items()}
    return sweep_report_from_scores(per_level, baseline)


def sweep_report_from_scores(per_level: Mapping[float, Sequence[float]],
                             baseline: Iterable[float] | None = None
                             ) -> SweepReport:
    if len(per_level) < 2:
        raise UsageError(f"sweep needs at least 2 levels, got {len(per_level)}")
    base = None if baseline is None else list(baseline)
    levels = []
    for lvl in sorted(per_level):
        scores = _check_scores(per_level[lvl], f"level {lvl}")
        auc = math.nan if base is None else auroc(base, scores).auroc
        levels.append(SweepLevel(noise_level=lvl,
                                 mean_confidence=float(np.mean(scores)),
                                 auc=auc))
    return SweepReport(levels=levels)


def softmax_scores(logit_rows: Iterable[np.ndarray]) -> list[float]:
    """Max-softmax confidence per row; the classical baseline score fed
    to the same AUROC harness when logits are available."""
    out = []
    for logits in logit_rows:
        if logits is None:
            raise UsageError("record has no logits for softmax scoring")
        z = np.asarray(logits, dtype=np.float64)
        z = z - z.max()
        p = np.exp(z)
        out.append(float(p.max() / p.sum()))
    return out


def write_roc_report(curve: RocCurve, destination) -> None:
    """JSON report: {"auroc": ..., "curve": [[fpr, tpr], ...]}."""
    doc = {"auroc": curve.auroc, "curve": [[x, y] for x, y in curve.points]}
    if hasattr(destination, "write"):
        json.dump(doc, destination)
    else:
        with open(destination, "w") as stream:
            json.dump(doc, stream)


def write_curve_csv(curve: RocCurve, destination) -> None:
    """Plot-ready curve CSV: fpr,tpr."""
    if hasattr(destination, "write"):
        _write_curve_stream(curve, destination)
    else:
        with open(destination, "w", newline="") as stream:
            _write_curve_stream(curve, stream)


def _write_curve_stream(curve: RocCurve, stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["fpr", "tpr"])
    for x, y in curve.points:
        writer.writerow([repr(x), repr(y)])


def write_sweep_csv(report: SweepReport, destination) -> None:
    """Sweep CSV: noise_level,mean_confidence,auc."""
    if hasattr(destination, "write"):
        _write_sweep_stream(report, destination)
    else:
        with open(destination, "w", newline="") as stream:
            _write_sweep_stream(report, stream)


def _write_sweep_stream(report: SweepReport, stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["noise_level", "mean_confidence", "auc"])
    for level in report.levels:
        writer.writerow([repr(level.noise_level), repr(level.mean_confidence),
                         repr(level.auc)])
