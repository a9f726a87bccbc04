"""Distances between sample sets: sliced W2, energy distance, per-coordinate KS, moments.

All functions accept either :class:`SampleSet` instances or raw (n, d) arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.stats import ks_2samp

from .errors import DomainError

# largest set size used for the O(n^2) pair sums; bigger sets are subsampled
PAIR_CAP = 20_000
_SUBSAMPLE_SEED = 20240531


@dataclass(frozen=True)
class SampleSet:
    """n points in R^d with a provenance label."""

    points: np.ndarray
    label: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 2:
            raise DomainError("a sample set needs an (n, d) array with n >= 2")
        if not np.all(np.isfinite(pts)):
            raise DomainError(f"sample set {self.label!r} has non-finite entries")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


def _points(x) -> np.ndarray:
    return x.points if isinstance(x, SampleSet) else SampleSet(x).points


def _pair(A, B):
    a, b = _points(A), _points(B)
    if a.shape[1] != b.shape[1]:
        raise DomainError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return a, b


def w2_1d(a, b) -> float:
    """W2 between two empirical laws on the line.

    Equal sizes use the sorted pairing. Unequal sizes integrate the squared
    difference of the two quantile functions exactly (both are step functions).
    """
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise DomainError("w2_1d needs nonempty inputs")
    if a.size == b.size:
        return float(np.sqrt(np.mean((a - b) ** 2)))
    # breakpoints of both quantile functions on (0, 1]
    u = np.union1d(np.arange(1, a.size + 1) / a.size, np.arange(1, b.size + 1) / b.size)
    lo = np.concatenate([[0.0], u[:-1]])
    mid = 0.5 * (lo + u)
    qa = a[np.minimum((mid * a.size).astype(int), a.size - 1)]
    qb = b[np.minimum((mid * b.size).astype(int), b.size - 1)]
    return float(np.sqrt(np.sum((u - lo) * (qa - qb) ** 2)))


def random_directions(d: int, n_dirs: int, rng: np.random.Generator) -> np.ndarray:
    """n_dirs uniform unit vectors in R^d."""
    g = rng.standard_normal((n_dirs, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def sliced_w2(A, B, n_dirs: int, rng: np.random.Generator) -> float:
    """Root-mean over random directions of the squared 1D W2 between projections."""
    a, b = _pair(A, B)
    if n_dirs < 1:
        raise DomainError("n_dirs must be >= 1")
    theta = random_directions(a.shape[1], n_dirs, rng)
    pa, pb = a @ theta.T, b @ theta.T
    sq = [w2_1d(pa[:, i], pb[:, i]) ** 2 for i in range(n_dirs)]
    return float(np.sqrt(np.mean(sq)))


def _cap(x: np.ndarray, cap: int) -> np.ndarray:
    if x.shape[0] <= cap:
        return x
    rng = np.random.default_rng(_SUBSAMPLE_SEED)
    return x[np.sort(rng.choice(x.shape[0], size=cap, replace=False))]


def _mean_dist(a, b, chunk=1000) -> float:
    total = 0.0
    for lo in range(0, a.shape[0], chunk):
        total += cdist(a[lo:lo + chunk], b).sum()
    return total / (a.shape[0] * b.shape[0])


def energy_distance(A, B, cap: int = PAIR_CAP) -> float:
    """2 E|a - b| - E|a - a'| - E|b - b'| over all ordered pairs, self-pairs included.

    The all-pairs (V-statistic) form makes the value exactly the energy distance
    between the two empirical laws: zero for identical sets and never negative.
    Sets larger than ``cap`` are subsampled with a fixed seed.
    """
    a, b = _pair(A, B)
    a, b = _cap(a, cap), _cap(b, cap)
    val = 2.0 * _mean_dist(a, b) - _mean_dist(a, a) - _mean_dist(b, b)
    # rounding can leave a tiny negative value for near-identical sets
    return float(max(val, 0.0))


def ks_per_coordinate(A, B) -> float:
    """Largest two-sample KS statistic over coordinates."""
    a, b = _pair(A, B)
    return float(max(ks_2samp(a[:, i], b[:, i]).statistic for i in range(a.shape[1])))


def moment_errors(A, target) -> tuple[float, float]:
    """(|mean(A) - mean(q)|, |cov(A) - cov(q)|_op) for a target exposing mean() and cov()."""
    a = _points(A)
    mean_err = float(np.linalg.norm(a.mean(axis=0) - np.asarray(target.mean())))
    cov = np.atleast_2d(np.cov(a, rowvar=False))
    cov_err = float(np.linalg.norm(cov - np.atleast_2d(target.cov()), ord=2))
    return mean_err, cov_err


def exact_w2(A, B) -> float:
    """Exact W2 between equal-size point clouds by optimal assignment (test oracle, n <= 512)."""
    a, b = _pair(A, B)
    if a.shape[0] != b.shape[0]:
        raise DomainError("exact_w2 needs equal sizes")
    if a.shape[0] > 512:
        raise DomainError("exact_w2 is limited to n <= 512")
    cost = cdist(a, b, "sqeuclidean")
    rows, cols = linear_sum_assignment(cost)
    return float(np.sqrt(cost[rows, cols].mean()))
