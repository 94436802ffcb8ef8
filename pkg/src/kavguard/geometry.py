"""Distance mathematics over diagonal-Gaussian class statistics.

Everything here is a pure function of immutable inputs and computes in
64-bit regardless of how vectors were stored. The Bhattacharyya log-det
term is evaluated as a sum of per-dimension logs, never as a product of
variances, so it stays finite at tens of thousands of dimensions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import UsageError

if TYPE_CHECKING:  # avoids a runtime cycle with the fitting module
    from .stats import ClassStats, FittedModel


@dataclass(frozen=True)
class JointStats:
    """Sum distribution of two independent diagonal Gaussians."""

    mean: np.ndarray      # mu_a + mu_b
    variance: np.ndarray  # sigma_a^2 + sigma_b^2


@dataclass(frozen=True)
class OverlapMatrix:
    """Symmetric pairwise Bhattacharyya distances, zero diagonal."""

    class_ids: list[int]
    values: np.ndarray  # (k, k) float64


def _check_vector(kav, dim: int) -> np.ndarray:
    x = np.asarray(kav, dtype=np.float64)
    if x.shape != (dim,):
        raise UsageError(f"vector length {x.shape} does not match dim {dim}")
    if not np.all(np.isfinite(x)):
        raise UsageError("vector contains non-finite values")
    return x


def standardize(kav, stats: "ClassStats") -> np.ndarray:
    """Per-class standardized vector: (kav - mean) / std, elementwise."""
    x = _check_vector(kav, len(stats.mean))
    return (x - stats.mean) / np.sqrt(stats.variance)


def mahalanobis_diag(kav, stats: "ClassStats") -> float:
    """Diagonal-covariance Mahalanobis distance of ``kav`` from a class.

    Equals the Euclidean norm of the standardized vector; the variance
    floor applied at fit time keeps every denominator positive.
    """
    x = _check_vector(kav, len(stats.mean))
    diff = x - stats.mean
    return math.sqrt(float(np.sum(diff * diff / stats.variance)))


def joint_stats(a: "ClassStats", b: "ClassStats") -> JointStats:
    """Parameters of the joint (sum) distribution of two classes."""
    if len(a.mean) != len(b.mean):
        raise UsageError(f"dim mismatch: {len(a.mean)} vs {len(b.mean)}")
    return JointStats(mean=a.mean + b.mean, variance=a.variance + b.variance)


def joint_distance(kav, joint: JointStats) -> float:
    """Mahalanobis distance of ``kav`` from a joint top-2 distribution."""
    x = _check_vector(kav, len(joint.mean))
    diff = x - joint.mean
    return math.sqrt(float(np.sum(diff * diff / joint.variance)))


def outlier_threshold(df: int) -> float:
    """Cut on *squared* distance: mean + one sd of the Normal(df, 2df)
    approximation to the chi-square distribution with ``df`` degrees of
    freedom, i.e. df + sqrt(2 df)."""
    if df < 1:
        raise UsageError(f"df must be >= 1, got {df}")
    return df + math.sqrt(2.0 * df)


def bhattacharyya_diag(a: "ClassStats", b: "ClassStats") -> float:
    """Bhattacharyya distance between two diagonal Gaussians.

    The averaged covariance (sigma_a^2 + sigma_b^2)/2 serves as the shared
    covariance of the quadratic term. The log-determinant ratio is expanded
    per dimension: 1/4 * sum(2*ln(avg) - ln(var_a) - ln(var_b)).
    """
    if len(a.mean) != len(b.mean):
        raise UsageError(f"dim mismatch: {len(a.mean)} vs {len(b.mean)}")
    avg_var = 0.5 * (a.variance + b.variance)
    diff = a.mean - b.mean
    quad = 0.125 * float(np.sum(diff * diff / avg_var))
    # grouping the marginal logs keeps the expression exactly symmetric in (a, b)
    logdet = 0.25 * float(
        np.sum(2.0 * np.log(avg_var) - (np.log(a.variance) + np.log(b.variance))))
    return quad + logdet


def overlap_matrix(model: "FittedModel") -> OverlapMatrix:
    """All pairwise class overlaps; each unordered pair computed once."""
    class_ids = sorted(model.classes)
    k = len(class_ids)
    if k < 2:
        raise UsageError(f"overlap needs at least 2 classes, got {k}")
    values = np.zeros((k, k), dtype=np.float64)
    for i in range(k):
        for j in range(i + 1, k):
            d = bhattacharyya_diag(model.classes[class_ids[i]],
                                   model.classes[class_ids[j]])
            values[i, j] = d
            values[j, i] = d
    return OverlapMatrix(class_ids=class_ids, values=values)


def write_overlap_csv(matrix: OverlapMatrix, destination) -> None:
    """Emit the matrix as CSV with a class-id header row and column,
    cells printed to 6 significant digits."""
    if hasattr(destination, "write"):
        _write_overlap_stream(matrix, destination)
    else:
        with open(destination, "w", newline="") as stream:
            _write_overlap_stream(matrix, stream)


def _write_overlap_stream(matrix: OverlapMatrix, stream) -> None:
    ids = matrix.class_ids
    stream.write("," + ",".join(str(c) for c in ids) + "\n")
    for i, cid in enumerate(ids):
        cells = (format(matrix.values[i, j], ".6g") for j in range(len(ids)))
        stream.write(f"{cid}," + ",".join(cells) + "\n")
