"""Activation-vector dataset model and every on-disk format.

A dataset is an ordered sequence of records, each carrying one activation
vector (``kav``), an optional integer class label (-1 = unlabeled) and,
optionally, the pre-softmax logits of the network that produced it.

Binary layout (little-endian)::

    magic b"KAVF" | version u16 = 1 | flags u16 (bit 0: has_logits)
    dim u32 | num_classes u32 | count u64
    count records, each: label i32 | [logits num_classes x f32] | kav dim x f32

Vectors are stored as 32-bit floats (matching typical activation
precision); everything downstream computes in 64-bit. A CSV fallback
without logits and the score-file CSV used by the evaluation tools also
live here so that all serialization shares one home.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Iterator, TextIO

import numpy as np

from .errors import FormatError, UsageError

MAGIC = b"KAVF"
VERSION = 1
UNLABELED = -1

_HEADER = struct.Struct("<4sHHIIQ")
HEADER_SIZE = _HEADER.size  # 24 bytes


def record_nbytes(dim: int, num_classes: int, has_logits: bool) -> int:
    """Size in bytes of one serialized record."""
    n = 4 + 4 * dim
    if has_logits:
        n += 4 * num_classes
    return n


def file_nbytes(dim: int, num_classes: int, has_logits: bool, count: int) -> int:
    """Exact size in bytes of a file with the given header parameters."""
    return HEADER_SIZE + count * record_nbytes(dim, num_classes, has_logits)


def _as_f32(values, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 1:
        raise UsageError(f"{what} must be a 1-D vector, got shape {arr.shape}")
    return arr


@dataclass(eq=False)
class KavRecord:
    """One activation vector with optional label and logits."""

    record_index: int
    label: int
    kav: np.ndarray
    logits: np.ndarray | None = None

    def __post_init__(self):
        self.kav = _as_f32(self.kav, "kav")
        if self.logits is not None:
            self.logits = _as_f32(self.logits, "logits")

    def __eq__(self, other) -> bool:
        if not isinstance(other, KavRecord):
            return NotImplemented
        if (self.record_index, self.label) != (other.record_index, other.label):
            return False
        if (self.logits is None) != (other.logits is None):
            return False
        if self.kav.tobytes() != other.kav.tobytes():
            return False
        return self.logits is None or self.logits.tobytes() == other.logits.tobytes()


@dataclass(eq=False)
class KavDataset:
    """Ordered collection of records under one header (dim, num_classes)."""

    dim: int
    num_classes: int
    has_logits: bool = False
    records: list[KavRecord] = field(default_factory=list)

    @classmethod
    def from_arrays(cls, kavs, labels=None, logits=None, num_classes: int | None = None
                    ) -> "KavDataset":
        """Build a dataset from an (n, dim) array, optional labels and logits."""
        kavs = np.atleast_2d(np.asarray(kavs, dtype=np.float32))
        n, dim = kavs.shape
        if labels is None:
            labels = [UNLABELED] * n
        if logits is not None:
            logits = np.atleast_2d(np.asarray(logits, dtype=np.float32))
            if num_classes is None:
                num_classes = logits.shape[1]
        if num_classes is None:
            num_classes = int(max((l for l in labels if l >= 0), default=0)) + 1
        records = [
            KavRecord(i, int(labels[i]), kavs[i],
                      None if logits is None else logits[i])
            for i in range(n)
        ]
        return cls(dim=dim, num_classes=num_classes,
                   has_logits=logits is not None, records=records)

    def validate(self) -> None:
        """Check every dataset invariant; raise FormatError naming the record."""
        if self.dim <= 0:
            raise FormatError(f"dim must be positive, got {self.dim}")
        if self.num_classes <= 0:
            raise FormatError(f"num_classes must be positive, got {self.num_classes}")
        for i, rec in enumerate(self.records):
            if rec.record_index != i:
                raise FormatError(
                    f"record {i}: record_index {rec.record_index} out of file order")
            if rec.kav.shape != (self.dim,):
                raise FormatError(
                    f"record {i}: kav length {rec.kav.shape[0]} != dim {self.dim}")
            if self.has_logits:
                if rec.logits is None:
                    raise FormatError(f"record {i}: missing logits (header flag set)")
                if rec.logits.shape != (self.num_classes,):
                    raise FormatError(
                        f"record {i}: logits length {rec.logits.shape[0]} "
                        f"!= num_classes {self.num_classes}")
            elif rec.logits is not None:
                raise FormatError(f"record {i}: logits present but header flag unset")
            if not (rec.label == UNLABELED or 0 <= rec.label < self.num_classes):
                raise FormatError(
                    f"record {i}: label {rec.label} outside [0, {self.num_classes})")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[KavRecord]:
        return iter(self.records)

    def __eq__(self, other) -> bool:
        if not isinstance(other, KavDataset):
            return NotImplemented
        return (self.dim == other.dim
                and self.num_classes == other.num_classes
                and self.has_logits == other.has_logits
                and self.records == other.records)


@dataclass(frozen=True)
class ScoreRow:
    """One scored test point: higher score = more in-distribution confident."""

    id: int
    score: float
    label: int  # 1 = positive/in-distribution set, 0 = negative set


def _record_dtype(dim: int, num_classes: int, has_logits: bool) -> np.dtype:
    fields = [("label", "<i4")]
    if has_logits:
        fields.append(("logits", "<f4", (num_classes,)))
    fields.append(("kav", "<f4", (dim,)))
    return np.dtype(fields)


def write_kav(dataset: KavDataset, destination) -> int:
    """Serialize a dataset to the binary format.

    ``destination`` is a binary file object or a path. Returns the number
    of bytes written; identical datasets produce identical bytes.
    """
    dataset.validate()
    if hasattr(destination, "write"):
        return _write_kav_stream(dataset, destination)
    with open(destination, "wb") as sink:
        return _write_kav_stream(dataset, sink)


def _write_kav_stream(dataset: KavDataset, sink: BinaryIO) -> int:
    flags = 1 if dataset.has_logits else 0
    written = sink.write(_HEADER.pack(MAGIC, VERSION, flags, dataset.dim,
                                      dataset.num_classes, len(dataset.records)))
    dtype = _record_dtype(dataset.dim, dataset.num_classes, dataset.has_logits)
    buf = np.empty(1, dtype=dtype)
    for rec in dataset.records:
        buf["label"][0] = rec.label
        if dataset.has_logits:
            buf["logits"][0] = rec.logits
        buf["kav"][0] = rec.kav
        written += sink.write(buf.tobytes())
    return written


class KavReader:
    """Streaming reader: header fields up front, records on demand.

    Usable as a context manager and as an iterator; records are decoded
    one at a time so arbitrarily large files never load whole.
    """

    def __init__(self, source: BinaryIO, close: bool = False):
        self._stream = source
        self._close = close
        header = source.read(HEADER_SIZE)
        if len(header) < HEADER_SIZE:
            raise FormatError(
                f"truncated header: got {len(header)} of {HEADER_SIZE} bytes")
        magic, version, flags, dim, num_classes, count = _HEADER.unpack(header)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r} at byte offset 0")
        if version != VERSION:
            raise FormatError(f"unsupported version {version} at byte offset 4")
        if dim == 0:
            raise FormatError("dim is 0 at byte offset 8")
        if num_classes == 0:
            raise FormatError("num_classes is 0 at byte offset 12")
        self.dim = dim
        self.num_classes = num_classes
        self.has_logits = bool(flags & 1)
        self.count = count
        self._dtype = _record_dtype(dim, num_classes, self.has_logits)
        self._next_index = 0
        self._offset = HEADER_SIZE

    @classmethod
    def open(cls, path) -> "KavReader":
        return cls(open(path, "rb"), close=True)

    def __enter__(self) -> "KavReader":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        if self._close:
            self._stream.close()

    def __iter__(self) -> Iterator[KavRecord]:
        return self

    def __next__(self) -> KavRecord:
        if self._next_index >= self.count:
            raise StopIteration
        raw = self._stream.read(self._dtype.itemsize)
        if len(raw) < self._dtype.itemsize:
            raise FormatError(
                f"truncated record {self._next_index} at byte offset {self._offset}: "
                f"got {len(raw)} of {self._dtype.itemsize} bytes")
        row = np.frombuffer(raw, dtype=self._dtype)[0]
        label = int(row["label"])
        if not (label == UNLABELED or 0 <= label < self.num_classes):
            raise FormatError(
                f"record {self._next_index} at byte offset {self._offset}: "
                f"label {label} outside [0, {self.num_classes})")
        rec = KavRecord(
            record_index=self._next_index,
            label=label,
            kav=row["kav"].copy(),
            logits=row["logits"].copy() if self.has_logits else None,
        )
        self._next_index += 1
        self._offset += self._dtype.itemsize
        return rec


def read_kav(source) -> KavDataset:
    """Read a whole binary file into memory. ``source`` is a stream or path."""
    if hasattr(source, "read"):
        reader = KavReader(source)
    else:
        reader = KavReader.open(source)
    with reader:
        return KavDataset(dim=reader.dim, num_classes=reader.num_classes,
                          has_logits=reader.has_logits, records=list(reader))


def read_kav_csv(source, num_classes: int) -> KavDataset:
    """Read the CSV fallback: header ``label,v0,v1,...``, no logits."""
    if hasattr(source, "read"):
        return _read_kav_csv_stream(source, num_classes)
    with open(source, "r", newline="") as stream:
        return _read_kav_csv_stream(stream, num_classes)


def _read_kav_csv_stream(stream: TextIO, num_classes: int) -> KavDataset:
    rows = csv.reader(stream)
    try:
        header = next(rows)
    except StopIteration:
        raise FormatError("empty CSV: missing header row") from None
    if not header or header[0] != "label" or len(header) < 2:
        raise FormatError(f"line 1: expected header 'label,v0,...', got {header!r}")
    dim = len(header) - 1
    records = []
    for lineno, row in enumerate(rows, start=2):
        if len(row) != dim + 1:
            raise FormatError(
                f"line {lineno}: expected {dim + 1} values, got {len(row)}")
        try:
            label = int(row[0])
            values = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
        records.append(KavRecord(lineno - 2, label, values))
    dataset = KavDataset(dim=dim, num_classes=num_classes, has_logits=False,
                         records=records)
    dataset.validate()
    return dataset


def write_kav_csv(dataset: KavDataset, destination) -> None:
    """Write the CSV fallback; logit-bearing datasets are rejected."""
    if dataset.has_logits:
        raise UsageError("CSV form does not carry logits; use the binary format")
    dataset.validate()
    if hasattr(destination, "write"):
        _write_kav_csv_stream(dataset, destination)
    else:
        with open(destination, "w", newline="") as stream:
            _write_kav_csv_stream(dataset, stream)


def _write_kav_csv_stream(dataset: KavDataset, stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["label"] + [f"v{i}" for i in range(dataset.dim)])
    for rec in dataset.records:
        writer.writerow([rec.label] + [repr(float(v)) for v in rec.kav])


def write_scores(rows: Iterable[ScoreRow], destination) -> None:
    """Write a score file: CSV ``id,score,label``."""
    if hasattr(destination, "write"):
        _write_scores_stream(rows, destination)
    else:
        with open(destination, "w", newline="") as stream:
            _write_scores_stream(rows, stream)


def _write_scores_stream(rows: Iterable[ScoreRow], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["id", "score", "label"])
    for row in rows:
        if not np.isfinite(row.score):
            raise FormatError(f"score row {row.id}: score {row.score} "
                              "is not finite")
        writer.writerow([row.id, repr(float(row.score)), row.label])


def read_scores(source) -> list[ScoreRow]:
    """Read a score file written by :func:`write_scores`."""
    if hasattr(source, "read"):
        return _read_scores_stream(source)
    with open(source, "r", newline="") as stream:
        return _read_scores_stream(stream)


def _read_scores_stream(stream: TextIO) -> list[ScoreRow]:
    rows = csv.reader(stream)
    try:
        header = next(rows)
    except StopIteration:
        raise FormatError("empty score file: missing header row") from None
    if header != ["id", "score", "label"]:
        raise FormatError(f"line 1: expected header 'id,score,label', got {header!r}")
    out = []
    for lineno, row in enumerate(rows, start=2):
        if len(row) != 3:
            raise FormatError(f"line {lineno}: expected 3 values, got {len(row)}")
        try:
            parsed = ScoreRow(id=int(row[0]), score=float(row[1]), label=int(row[2]))
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
        if not np.isfinite(parsed.score):
            raise FormatError(f"line {lineno}: score {row[1]} is not finite")
        out.append(parsed)
    return out


def dataset_to_bytes(dataset: KavDataset) -> bytes:
    """Serialize to an in-memory byte string (convenience for tests/tools)."""
    sink = io.BytesIO()
    write_kav(dataset, sink)
    return sink.getvalue()


def dump_json(doc, destination) -> None:
    """JSON writer shared by the sidecar formats (stats, member store).

    Floats serialize with Python's shortest round-trip representation
    (at most 17 significant digits), so 64-bit values survive losslessly.
    """
    if hasattr(destination, "write"):
        json.dump(doc, destination)
    else:
        with open(destination, "w") as stream:
            json.dump(doc, stream)


def load_json(source):
    """JSON reader counterpart of :func:`dump_json`."""
    try:
        if hasattr(source, "read"):
            return json.load(source)
        with open(source, "r") as stream:
            return json.load(stream)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc}") from None
