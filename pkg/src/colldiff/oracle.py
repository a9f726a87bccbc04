"""Score estimate oracles s_t(y) with a declared error level and Lipschitz bound.

Every oracle counts evaluations: a call on an array of points of shape
``(..., d)`` adds ``prod(shape[:-1])`` to ``eval_counter``. This count is the
cost model used throughout (one evaluation = one score vector).
"""

from __future__ import annotations

import threading

import numpy as np

from . import _kernels, mixture
from .errors import DomainError
from .mixture import SmoothedTarget


def declared_lipschitz(R: float, eps_err: float = 0.0) -> float:
    """2 + 4R^2 + eps_err/2 for normalized radius R, valid while sigma_t^2 >= 1/2."""
    return 2.0 + 4.0 * R**2 + 0.5 * eps_err


class ScoreOracle:
    """Base class. Subclasses implement ``_score(t, y)``."""

    def __init__(self, target: SmoothedTarget, eps_err: float, lipschitz: float):
        self.target = target
        self.eps_err = float(eps_err)
        self.lipschitz = float(lipschitz)
        self._count = 0
        self._lock = threading.Lock()

    @property
    def d(self) -> int:
        return self.target.d

    @property
    def eval_counter(self) -> int:
        return self._count

    def reset_counter(self) -> None:
        with self._lock:
            self._count = 0

    def evaluate(self, t, y) -> np.ndarray:
        """Score estimate at time(s) ``t`` for points ``y`` of shape (..., d)."""
        y = np.asarray(y, dtype=float)
        n = int(np.prod(y.shape[:-1], dtype=np.int64))
        with self._lock:
            self._count += n
        return self._score(t, y)

    __call__ = evaluate

    def drift(self, t, y) -> np.ndarray:
        """ODE right-hand side y + s_t(y) built from the estimate."""
        y = np.asarray(y, dtype=float)
        return y + self.evaluate(t, y)

    def _score(self, t, y):  # pragma: no cover - abstract
        raise NotImplementedError


class ExactOracle(ScoreOracle):
    def _score(self, t, y):
        return mixture.score(self.target, t, y)


class NoisyOracle(ScoreOracle):
    """Exact score plus a fixed smooth random-feature error field.

    e(t, y) = eps/(2F) * sum_f u_f cos(<w_f, y> + nu_f t + b_f) with unit u_f,
    |w_f| <= 1 and |nu_f| <= 1, so |e| <= eps/2 and e is (eps/2)-Lipschitz in y.
    """

    def __init__(self, target, eps_err, n_features, seed, lipschitz):
        super().__init__(target, eps_err, lipschitz)
        rng = np.random.default_rng(seed)
        d = target.d
        u = rng.standard_normal((n_features, d))
        self.directions = u / np.linalg.norm(u, axis=1, keepdims=True)
        w = rng.standard_normal((n_features, d))
        w /= np.linalg.norm(w, axis=1, keepdims=True)
        self.frequencies = w * rng.uniform(0.0, 1.0, size=(n_features, 1))
        self.time_frequencies = rng.uniform(-1.0, 1.0, size=n_features)
        self.phases = rng.uniform(0.0, 2.0 * np.pi, size=n_features)
        self.amplitude = eps_err / (2.0 * n_features)

    def error_field(self, t, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if _kernels.HAVE_NUMBA:
            return _kernels.feature_field(y, np.asarray(t, dtype=float), self.frequencies,
                                          self.time_frequencies, self.phases,
                                          self.directions, self.amplitude)
        t = np.broadcast_to(np.asarray(t, dtype=float), y.shape[:-1])
        arg = (np.sum(y[..., None, :] * self.frequencies, axis=-1)
               + t[..., None] * self.time_frequencies + self.phases)
        return self.amplitude * np.sum(np.cos(arg)[..., None] * self.directions, axis=-2)

    def _score(self, t, y):
        return mixture.score(self.target, t, y) + self.error_field(t, y)


def exact_oracle(target: SmoothedTarget) -> ExactOracle:
    return ExactOracle(target, 0.0, declared_lipschitz(target.R_normalized))


def noisy_oracle(target: SmoothedTarget, eps_err: float, n_features: int = 8,
                 seed: int = 0) -> NoisyOracle:
    if not eps_err > 0:
        raise DomainError(f"eps_err must be positive, got {eps_err}")
    if n_features < 1:
        raise DomainError("n_features must be >= 1")
    return NoisyOracle(target, eps_err, n_features, seed,
                       declared_lipschitz(target.R_normalized, eps_err))


def lipschitz_probe(oracle: ScoreOracle, t: float, center, radius: float, n_pairs: int,
                    rng: np.random.Generator, field: str = "score") -> float:
    """Largest |s(y) - s(y')| / |y - y'| over random pairs in a ball around ``center``.

    ``field="drift"`` probes y + s(y) instead. Coincident pairs are skipped.
    """
    if n_pairs < 1:
        raise DomainError("n_pairs must be >= 1")
    center = np.asarray(center, dtype=float)
    d = center.shape[0]

    def ball(n):
        g = rng.standard_normal((n, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return center + radius * g * rng.uniform(0, 1, size=(n, 1)) ** (1.0 / d)

    a, b = ball(n_pairs), ball(n_pairs)
    fn = oracle.drift if field == "drift" else oracle.evaluate
    fa, fb = fn(t, a), fn(t, b)
    dist = np.linalg.norm(a - b, axis=1)
    keep = dist > 0
    if not np.any(keep):
        return 0.0
    return float(np.max(np.linalg.norm(fa - fb, axis=1)[keep] / dist[keep]))

