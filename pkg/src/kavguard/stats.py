"""One-pass per-class moment accumulation and the fitted diagonal model.

Each class keeps running sums of its vectors and their squares in 64-bit;
finalizing divides by the member count (population variance) and floors
the variance so downstream divisions and logs stay defined. Accumulators
from disjoint shards merge by plain addition, which makes parallel or
incremental fitting equivalent to a single sequential scan up to
floating-point reassociation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import geometry
from .errors import FormatError, UsageError
from .store import UNLABELED, KavDataset, KavRecord, dump_json, load_json

DEFAULT_VARIANCE_FLOOR = 1e-12
DEFAULT_MEMBERS = 25

STATS_FORMAT = "kav-stats/1"
MEMBERS_FORMAT = "kav-members/1"


@dataclass
class MomentAccumulator:
    """Running count / sum / sum-of-squares for one class."""

    class_id: int
    dim: int
    count: int = 0
    sum: np.ndarray = None
    sum_sq: np.ndarray = None

    def __post_init__(self):
        if self.sum is None:
            self.sum = np.zeros(self.dim, dtype=np.float64)
        if self.sum_sq is None:
            self.sum_sq = np.zeros(self.dim, dtype=np.float64)


@dataclass(frozen=True)
class ClassStats:
    """Finalized per-class statistics of the fitted diagonal Gaussian."""

    class_id: int
    count: int
    mean: np.ndarray      # float64, length dim
    variance: np.ndarray  # float64, elementwise >= variance_floor
    variance_floor: float


@dataclass(frozen=True)
class FittedModel:
    """All fitted classes sharing one dimension and variance floor."""

    dim: int
    classes: dict[int, ClassStats]
    variance_floor: float


@dataclass(frozen=True)
class MemberStore:
    """Per class: up to M (record_index, distance) pairs, ascending by
    distance, ties broken by ascending record index."""

    M: int
    members: dict[int, list[tuple[int, float]]]
    source_file: str = ""


def accumulate(acc: MomentAccumulator, record: KavRecord) -> MomentAccumulator:
    """Fold one record into the accumulator (mutates and returns it)."""
    if record.label != acc.class_id:
        raise UsageError(
            f"record {record.record_index}: label {record.label} "
            f"does not match accumulator class {acc.class_id}")
    if record.kav.shape != (acc.dim,):
        raise FormatError(
            f"record {record.record_index}: kav length {record.kav.shape[0]} "
            f"!= dim {acc.dim}")
    x = record.kav.astype(np.float64)
    acc.count += 1
    acc.sum += x
    acc.sum_sq += x * x
    return acc


def merge(a: MomentAccumulator, b: MomentAccumulator) -> MomentAccumulator:
    """Combine two accumulators of the same class; commutative and
    associative up to floating-point reassociation."""
    if a.class_id != b.class_id:
        raise UsageError(f"class mismatch: {a.class_id} vs {b.class_id}")
    if a.dim != b.dim:
        raise UsageError(f"dim mismatch: {a.dim} vs {b.dim}")
    return MomentAccumulator(class_id=a.class_id, dim=a.dim,
                             count=a.count + b.count,
                             sum=a.sum + b.sum,
                             sum_sq=a.sum_sq + b.sum_sq)


def finalize(acc: MomentAccumulator, variance_floor: float = DEFAULT_VARIANCE_FLOOR
             ) -> ClassStats:
    """Turn raw moments into mean and floored population variance."""
    if acc.count == 0:
        raise UsageError(f"empty class {acc.class_id}")
    if variance_floor <= 0:
        raise UsageError(f"variance_floor must be > 0, got {variance_floor}")
    mean = acc.sum / acc.count
    variance = np.maximum(acc.sum_sq / acc.count - mean * mean, variance_floor)
    return ClassStats(class_id=acc.class_id, count=acc.count, mean=mean,
                      variance=variance, variance_floor=variance_floor)


def fit(training: KavDataset | Iterable[KavRecord],
        variance_floor: float = DEFAULT_VARIANCE_FLOOR) -> FittedModel:
    """Fit per-class statistics in exactly one pass over the records.

    ``training`` may be an in-memory dataset or any record iterator (for
    example a streaming file reader). Every record must be labeled;
    classes that never appear are absent from the model.
    """
    if isinstance(training, KavDataset):
        dim = training.dim
        records = training.records
    else:
        dim = None
        records = training
    accs: dict[int, MomentAccumulator] = {}
    for rec in records:
        if rec.label == UNLABELED:
            raise UsageError(f"record {rec.record_index} is unlabeled")
        if dim is None:
            dim = rec.kav.shape[0]
        acc = accs.get(rec.label)
        if acc is None:
            acc = accs[rec.label] = MomentAccumulator(rec.label, dim)
        accumulate(acc, rec)
    if dim is None:
        raise UsageError("cannot fit an empty record stream")
    classes = {cid: finalize(acc, variance_floor)
               for cid, acc in sorted(accs.items())}
    return FittedModel(dim=dim, classes=classes, variance_floor=variance_floor)


def build_member_store(training: KavDataset, model: FittedModel,
                       M: int = DEFAULT_MEMBERS, source_file: str = ""
                       ) -> MemberStore:
    """For each class, the M training records nearest their own class
    statistics under the diagonal Mahalanobis distance."""
    if M == 0:
        raise UsageError("M must be >= 1")
    per_class: dict[int, list[tuple[float, int]]] = {c: [] for c in model.classes}
    for rec in training:
        if rec.label == UNLABELED:
            continue
        stats = model.classes.get(rec.label)
        if stats is None:
            raise UsageError(
                f"record {rec.record_index}: class {rec.label} not in model")
        d = geometry.mahalanobis_diag(rec.kav, stats)
        per_class[rec.label].append((d, rec.record_index))
    members = {}
    for cid, entries in per_class.items():
        entries.sort()  # by distance, ties by record index
        members[cid] = [(idx, d) for d, idx in entries[:M]]
    return MemberStore(M=M, members=members, source_file=source_file)


def retrieve_members(store: MemberStore, class_id: int, m: int) -> list[int]:
    """First ``m`` stored record indices for a class, nearest first."""
    if class_id not in store.members:
        raise UsageError(f"unknown class {class_id}")
    if m < 1:
        raise UsageError(f"m must be >= 1, got {m}")
    if m > store.M:
        raise UsageError(f"m {m} exceeds store capacity M={store.M}")
    return [idx for idx, _ in store.members[class_id][:m]]


def accumulator_from_stats(stats: ClassStats) -> MomentAccumulator:
    """Reconstruct raw moments from finalized statistics.

    Exact up to round-off unless the variance floor was binding for some
    dimension, in which case the floored value stands in for the true
    (smaller) raw moment.
    """
    return MomentAccumulator(
        class_id=stats.class_id, dim=len(stats.mean), count=stats.count,
        sum=stats.mean * stats.count,
        sum_sq=(stats.variance + stats.mean * stats.mean) * stats.count)


def merge_models(models: Iterable[FittedModel]) -> FittedModel:
    """Merge shard fits into one model (ascending shard order is applied
    as given; merge itself is order-insensitive up to round-off)."""
    models = list(models)
    if not models:
        raise UsageError("no models to merge")
    dim = models[0].dim
    floor = models[0].variance_floor
    for m in models[1:]:
        if m.dim != dim:
            raise UsageError(f"dim mismatch across models: {m.dim} vs {dim}")
        if m.variance_floor != floor:
            raise UsageError("variance_floor differs across models")
    accs: dict[int, MomentAccumulator] = {}
    for m in models:
        for cid, stats in m.classes.items():
            acc = accumulator_from_stats(stats)
            accs[cid] = merge(accs[cid], acc) if cid in accs else acc
    classes = {cid: finalize(acc, floor) for cid, acc in sorted(accs.items())}
    return FittedModel(dim=dim, classes=classes, variance_floor=floor)


def save_stats(model: FittedModel, destination) -> None:
    """Write the stats file (JSON); floats use Python's shortest
    round-trip representation, so 64-bit values survive losslessly."""
    doc = {
        "format": STATS_FORMAT,
        "dim": model.dim,
        "variance_floor": model.variance_floor,
        "classes": [
            {
                "id": cid,
                "count": stats.count,
                "mean": [float(v) for v in stats.mean],
                "variance": [float(v) for v in stats.variance],
            }
            for cid, stats in sorted(model.classes.items())
        ],
    }
    dump_json(doc, destination)


def load_stats(source) -> FittedModel:
    """Read a stats file back into a model."""
    doc = load_json(source)
    if doc.get("format") != STATS_FORMAT:
        raise FormatError(f"not a stats file: format={doc.get('format')!r}")
    dim = int(doc["dim"])
    floor = float(doc["variance_floor"])
    classes = {}
    for entry in doc["classes"]:
        cid = int(entry["id"])
        mean = np.asarray(entry["mean"], dtype=np.float64)
        variance = np.asarray(entry["variance"], dtype=np.float64)
        if mean.shape != (dim,) or variance.shape != (dim,):
            raise FormatError(f"class {cid}: vector length does not match dim {dim}")
        classes[cid] = ClassStats(class_id=cid, count=int(entry["count"]),
                                  mean=mean, variance=variance,
                                  variance_floor=floor)
    return FittedModel(dim=dim, classes=classes, variance_floor=floor)


def save_members(store: MemberStore, destination) -> None:
    """Write the member-store sidecar (JSON)."""
    doc = {
        "format": MEMBERS_FORMAT,
        "M": store.M,
        "source_file": store.source_file,
        "classes": {
            str(cid): [[idx, float(d)] for idx, d in entries]
            for cid, entries in sorted(store.members.items())
        },
    }
    dump_json(doc, destination)


def load_members(source) -> MemberStore:
    """Read a member-store sidecar back."""
    doc = load_json(source)
    if doc.get("format") != MEMBERS_FORMAT:
        raise FormatError(f"not a member store: format={doc.get('format')!r}")
    members = {
        int(cid): [(int(idx), float(d)) for idx, d in entries]
        for cid, entries in doc["classes"].items()
    }
    return MemberStore(M=int(doc["M"]), members=members,
                       source_file=doc.get("source_file", ""))
