"""Ornstein-Uhlenbeck noise schedule in reverse time.

Time runs from t = 0 (pure noise, law close to a standard Gaussian) to t = T
(the clean data law). All formulas assume the target's noise level has been
normalized to one; see :class:`colldiff.mixture.SmoothedTarget`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

# tolerance for treating a time as lying on the boundary of [0, T]
_TIME_SLACK = 1e-12


@dataclass(frozen=True)
class NoiseSchedule:
    """Forward OU process run for a horizon ``T``.

    ``sigma(t)`` is the residual noise level at reverse time ``t`` and
    ``signal(t)`` the scale applied to the clean sample.
    """

    T: float

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise DomainError(f"horizon T must be positive and finite, got {self.T}")

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if not np.all((t >= -_TIME_SLACK) & (t <= self.T + _TIME_SLACK)):
            raise DomainError(f"time outside [0, {self.T}]")
        return np.clip(t, 0.0, self.T)

    def sigma(self, t):
        """Noise level sqrt(1 - exp(-2(T - t))). Accepts scalars or arrays."""
        t = self._check(t)
        out = np.sqrt(-np.expm1(-2.0 * (self.T - t)))
        return float(out) if out.ndim == 0 else out

    def sigma2(self, t):
        t = self._check(t)
        out = -np.expm1(-2.0 * (self.T - t))
        return float(out) if out.ndim == 0 else out

    def signal(self, t):
        """Scale exp(-(T - t)) of the clean sample; signal**2 + sigma**2 == 1."""
        t = self._check(t)
        out = np.exp(-(self.T - t))
        return float(out) if out.ndim == 0 else out


def sigma(schedule: NoiseSchedule, t):
    return schedule.sigma(t)


def signal(schedule: NoiseSchedule, t):
    return schedule.signal(t)


def horizon_for(R: float, d: int, eps_err: float, c_T: float = 1.0) -> float:
    """Raw horizon c_T * (ln R + ln d + ln(1/eps_err)), radius already normalized by sigma."""
    if not 0.0 < eps_err < 1.0:
        raise DomainError(f"eps_err must lie in (0, 1), got {eps_err}")
    if R < 1.0:
        raise DomainError(f"normalized radius must be >= 1, got {R}")
    if d < 1:
        raise DomainError(f"dimension must be >= 1, got {d}")
    return c_T * (math.log(R) + math.log(d) + math.log(1.0 / eps_err))


def run_horizon(R: float, d: int, eps_err: float, c_T: float = 1.0) -> float:
    """Horizon used by the sampler.

    The raw formula is floored at ln((R + sqrt d)/eps_err) + 1 so that the
    initialization error (R + sqrt d) e^{-T} stays below ``eps_err``.
    """
    raw = horizon_for(R, d, eps_err, c_T)
    floor = math.log((R + math.sqrt(d)) / eps_err) + 1.0
    return max(raw, floor)


def early_stop_time(schedule: NoiseSchedule, sigma_target: float = 1.0) -> float:
    """Time at which the rescaled iterate has law q_pre * N(0, sigma_target^2 I)."""
    if not sigma_target > 0:
        raise DomainError(f"sigma_target must be positive, got {sigma_target}")
    gap = 0.5 * math.log1p(sigma_target**2)
    if gap >= schedule.T:
        raise DomainError(
            f"sigma_target={sigma_target} needs T > {gap:.6g}, horizon is {schedule.T}")
    return schedule.T - gap


def rescale_output(y, schedule: NoiseSchedule, t_stop: float):
    """Undo the signal scaling at the stopping time: y * exp(T - t_stop)."""
    return np.asarray(y, dtype=float) * math.exp(schedule.T - t_stop)
