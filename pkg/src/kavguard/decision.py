"""Hierarchical three-way uncertainty verdicts.

For each test vector: pick the top-2 candidate classes, test the squared
distance from their joint distribution against the chi-square normal
cut (outlier step), and if the point survives, compare the two class
distances under the k% closeness rule (uncertain step). Whatever remains
is certain with the top class as the prediction.

The literal outlier rule labels points *inside* the cut as outliers; the
surrounding prose implies the opposite direction. Both readings ship as
an explicit configuration switch rather than a silent resolution.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Sequence, TextIO

from . import geometry
from .errors import FormatError, KavError, UsageError
from .stats import FittedModel
from .store import KavDataset, KavRecord


class Category(Enum):
    CERTAIN = "Certain"
    UNCERTAIN = "Uncertain"
    OUTLIER = "Outlier"


class Orientation(Enum):
    """Direction of the outlier cut on the squared joint distance."""

    AS_WRITTEN_BELOW = "below"  # outlier iff d_joint^2 <= threshold
    PROSE_ABOVE = "above"       # outlier iff d_joint^2 >  threshold


class Top2Source(Enum):
    LOGITS = "logits"
    MIN_DISTANCE = "distance"


@dataclass(frozen=True)
class DecisionConfig:
    """Knobs of the decision layer.

    ``top2_source=None`` selects logits when a record carries them and
    falls back to minimum distance otherwise. ``df=None`` uses the model
    dimension, which is the distribution's degrees of freedom.
    """

    k_percent: float = 0.10
    orientation: Orientation = Orientation.AS_WRITTEN_BELOW
    top2_source: Top2Source | None = None
    df: int | None = None

    def __post_init__(self):
        if not math.isfinite(self.k_percent) or not 0.0 <= self.k_percent <= 1.0:
            raise UsageError(f"k_percent must be in [0, 1], got {self.k_percent}")
        if self.df is not None and self.df < 1:
            raise UsageError(f"df must be >= 1, got {self.df}")


@dataclass(frozen=True)
class Verdict:
    """One decision with all the evidence that produced it."""

    record_index: int
    category: Category
    top1: int
    top2: int
    d1: float
    d2: float
    d_joint_sq: float
    threshold: float
    confidence: float  # always -d1


def _resolve_source(record: KavRecord, config: DecisionConfig) -> Top2Source:
    if config.top2_source is not None:
        return config.top2_source
    return Top2Source.LOGITS if record.logits is not None else Top2Source.MIN_DISTANCE


def select_top2(record: KavRecord, model: FittedModel,
                config: DecisionConfig = DecisionConfig()) -> tuple[int, int]:
    """The two candidate classes: largest logits, or smallest distances
    when logits are unavailable. Ties go to the lower class id."""
    if len(model.classes) < 2:
        raise UsageError(f"need at least 2 fitted classes, got {len(model.classes)}")
    source = _resolve_source(record, config)
    if source == Top2Source.LOGITS:
        if record.logits is None:
            raise UsageError(
                f"record {record.record_index}: top-2 by logits requested "
                "but the record has none")
        ranked = sorted(range(len(record.logits)),
                        key=lambda c: (-float(record.logits[c]), c))
    else:
        dists = {cid: geometry.mahalanobis_diag(record.kav, stats)
                 for cid, stats in model.classes.items()}
        ranked = sorted(dists, key=lambda c: (dists[c], c))
    return ranked[0], ranked[1]


def decide(record: KavRecord, model: FittedModel,
           config: DecisionConfig = DecisionConfig()) -> Verdict:
    """Classify one record as Certain, Uncertain, or Outlier."""
    top1, top2 = select_top2(record, model, config)
    try:
        s1 = model.classes[top1]
        s2 = model.classes[top2]
    except KeyError as exc:
        raise UsageError(
            f"record {record.record_index}: class {exc.args[0]} not in model")
    d1 = geometry.mahalanobis_diag(record.kav, s1)
    d2 = geometry.mahalanobis_diag(record.kav, s2)
    d_joint = geometry.joint_distance(record.kav, geometry.joint_stats(s1, s2))
    d_joint_sq = d_joint * d_joint
    df = config.df if config.df is not None else model.dim
    threshold = geometry.outlier_threshold(df)

    if config.orientation == Orientation.AS_WRITTEN_BELOW:
        is_outlier = d_joint_sq <= threshold
    else:
        is_outlier = d_joint_sq > threshold

    if is_outlier:
        category = Category.OUTLIER
    elif closeness_ratio(d1, d2) <= config.k_percent:
        category = Category.UNCERTAIN
    else:
        category = Category.CERTAIN
    return Verdict(record_index=record.record_index, category=category,
                   top1=top1, top2=top2, d1=d1, d2=d2,
                   d_joint_sq=d_joint_sq, threshold=threshold,
                   confidence=-d1)


def closeness_ratio(d1: float, d2: float) -> float:
    """|d1 - d2| / max(d1, d2); symmetric, in [0, 1]. Both zero -> 0
    (the point sits on both class means, maximally ambiguous)."""
    largest = max(d1, d2)
    if largest == 0.0:
        return 0.0
    return abs(d1 - d2) / largest


def decide_batch(dataset: KavDataset | Iterable[KavRecord], model: FittedModel,
                 config: DecisionConfig = DecisionConfig()) -> Iterator[Verdict]:
    """Apply :func:`decide` to every record, preserving order; the first
    record-level error aborts the stream naming the record."""
    for rec in dataset:
        try:
            yield decide(rec, model, config)
        except KavError as exc:
            raise type(exc)(f"record {rec.record_index}: {exc}") from exc


def write_verdicts(verdicts: Iterable[Verdict], destination) -> None:
    """Verdict CSV: record_index,category,top1,top2,d1,d2,d_joint_sq,
    threshold,confidence."""
    if hasattr(destination, "write"):
        _write_verdicts_stream(verdicts, destination)
    else:
        with open(destination, "w", newline="") as stream:
            _write_verdicts_stream(verdicts, stream)


_VERDICT_HEADER = ["record_index", "category", "top1", "top2", "d1", "d2",
                   "d_joint_sq", "threshold", "confidence"]


def _write_verdicts_stream(verdicts: Iterable[Verdict], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(_VERDICT_HEADER)
    for v in verdicts:
        writer.writerow([v.record_index, v.category.value, v.top1, v.top2,
                         repr(v.d1), repr(v.d2), repr(v.d_joint_sq),
                         repr(v.threshold), repr(v.confidence)])


def read_verdicts(source) -> list[Verdict]:
    """Read a verdict CSV written by :func:`write_verdicts`."""
    if hasattr(source, "read"):
        return _read_verdicts_stream(source)
    with open(source, "r", newline="") as stream:
        return _read_verdicts_stream(stream)


def _read_verdicts_stream(stream: TextIO) -> list[Verdict]:
    rows = csv.reader(stream)
    try:
        header = next(rows)
    except StopIteration:
        raise FormatError("empty verdict file: missing header row") from None
    if header != _VERDICT_HEADER:
        raise FormatError(f"line 1: unexpected verdict header {header!r}")
    out = []
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(_VERDICT_HEADER):
            raise FormatError(
                f"line {lineno}: expected {len(_VERDICT_HEADER)} values, "
                f"got {len(row)}")
        try:
            out.append(Verdict(
                record_index=int(row[0]), category=Category(row[1]),
                top1=int(row[2]), top2=int(row[3]), d1=float(row[4]),
                d2=float(row[5]), d_joint_sq=float(row[6]),
                threshold=float(row[7]), confidence=float(row[8])))
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
    return out


def category_counts(verdicts: Sequence[Verdict]) -> dict[Category, int]:
    counts = {c: 0 for c in Category}
    for v in verdicts:
        counts[v.category] += 1
    return counts
