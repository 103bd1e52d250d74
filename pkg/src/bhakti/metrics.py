"""Exact distance metrics over float64 vectors.

Five metrics are supported, addressed by their wire names:

==================  =============================================
wire name           distance
==================  =============================================
cosine              1 - cos(angle between a and b)
euclidean           sqrt(sum((p_i - q_i)^2))
euclidean_l2        euclidean distance between L2-normalized a, b
euclidean_z_score   euclidean over per-dimension Z-scores
chebyshev           max_i |p_i - q_i|
==================  =============================================

All functions are pure, take validated float64 vectors (see
:func:`as_vector`), and are safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import numpy.typing as npt

from .errors import DimensionMismatch, EmptyDataset, ZeroVector

Vector = npt.NDArray[np.float64]

#: wire names, in protocol order
METRIC_NAMES = ("cosine", "euclidean", "euclidean_l2", "euclidean_z_score", "chebyshev")

#: variance floor for standardized euclidean distance; a constant dimension
#: contributes 0 when p_i == q_i and a very large finite term otherwise
VARIANCE_EPSILON = 1e-12


def as_vector(values: Sequence[float] | Vector) -> Vector:
    """Validate and convert ``values`` into an immutable float64 vector.

    This is the single validation point: NaN and infinity are rejected
    here, never inside the metric functions.

    Raises:
        DimensionMismatch: empty or non-1-D input.
        ValueError: non-finite components.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatch(f"expected a 1-D vector, got shape {arr.shape}")
    if arr.size < 1:
        raise DimensionMismatch("vector must have at least one component")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector components must be finite (no NaN or infinity)")
    if arr is values:
        arr = arr.copy()
    arr.setflags(write=False)
    return arr


def _check_dims(a: Vector, b: Vector) -> None:
    if a.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"vector dims differ: {a.shape[0]} vs {b.shape[0]}")


@dataclass(frozen=True)
class DatasetStats:
    """Per-dimension population mean and variance of a vector dataset."""

    mean: Vector
    variance: Vector
    count: int

    def __post_init__(self):
        if self.mean.shape != self.variance.shape:
            raise DimensionMismatch("mean and variance dims differ")
        if np.any(self.variance < 0.0):
            raise ValueError("variance must be non-negative")
        if self.count < 0:
            raise ValueError("count must be non-negative")

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])


def compute_stats(vectors: Iterable[Vector]) -> DatasetStats:
    """Population mean and variance (divide by N, no Bessel correction).

    The population form is the documented reading of "variance across the
    dataset"; tests and the standardized-euclidean oracle rely on it.

    Raises:
        EmptyDataset: no vectors given.
        DimensionMismatch: vectors of differing dims.
    """
    vecs = list(vectors)
    if not vecs:
        raise EmptyDataset("cannot compute statistics of zero vectors")
    dim = vecs[0].shape[0]
    for v in vecs[1:]:
        if v.shape[0] != dim:
            raise DimensionMismatch(f"vector dims differ: {dim} vs {v.shape[0]}")
    stacked = np.stack(vecs)
    mean = stacked.mean(axis=0)
    variance = stacked.var(axis=0)  # ddof=0: population variance
    mean.setflags(write=False)
    variance.setflags(write=False)
    return DatasetStats(mean=mean, variance=variance, count=len(vecs))


def cosine_distance(a: Vector, b: Vector) -> float:
    """1 - (a.b)/(|a||b|), in [0, 2]; undefined for zero vectors.

    Tiny negative results from rounding are clamped to 0 so the
    non-negativity invariant holds exactly.
    """
    _check_dims(a, b)
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVector("cosine distance is undefined for a zero vector")
    d = 1.0 - float(np.dot(a, b)) / (norm_a * norm_b)
    return d if d > 0.0 else 0.0


def euclidean_distance(p: Vector, q: Vector) -> float:
    """sqrt(sum((p_i - q_i)^2)); 0 iff p == q elementwise."""
    _check_dims(p, q)
    return float(np.linalg.norm(p - q))


def euclidean_l2_distance(a: Vector, b: Vector) -> float:
    """Euclidean distance between a/|a| and b/|b|, in [0, 2]."""
    _check_dims(a, b)
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVector("L2-normalized distance is undefined for a zero vector")
    return float(np.linalg.norm(a / norm_a - b / norm_b))


def standardized_euclidean_distance(p: Vector, q: Vector, stats: DatasetStats) -> float:
    """sqrt(sum((p_i - q_i)^2 / max(var_i, epsilon))).

    Equals the Z-score form when every variance is positive; the epsilon
    floor keeps constant dimensions from dividing by zero while preserving
    result ordering.
    """
    _check_dims(p, q)
    if stats.dim != p.shape[0]:
        raise DimensionMismatch(
            f"stats dim {stats.dim} does not match vector dim {p.shape[0]}"
        )
    var = np.maximum(stats.variance, VARIANCE_EPSILON)
    diff = p - q
    return float(np.sqrt(np.sum(diff * diff / var)))


def chebyshev_distance(p: Vector, q: Vector) -> float:
    """max_i |p_i - q_i| (the limit of the p-norm as p goes to infinity)."""
    _check_dims(p, q)
    return float(np.max(np.abs(p - q)))


def distance(
    name: str, a: Vector, b: Vector, stats: DatasetStats | None = None
) -> float:
    """Dispatch on a wire metric name.

    ``stats`` is required for (and only used by) ``euclidean_z_score``.
    """
    if name == "cosine":
        return cosine_distance(a, b)
    if name == "euclidean":
        return euclidean_distance(a, b)
    if name == "euclidean_l2":
        return euclidean_l2_distance(a, b)
    if name == "euclidean_z_score":
        if stats is None:
            raise ValueError("euclidean_z_score requires dataset statistics")
        return standardized_euclidean_distance(a, b, stats)
    if name == "chebyshev":
        return chebyshev_distance(a, b)
    raise ValueError(f"unknown metric {name!r}")
