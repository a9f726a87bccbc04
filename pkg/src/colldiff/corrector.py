"""Underdamped Langevin corrector run on the final samples.

Dynamics, with the score frozen at the start of each step:

    dx = v dt,   dv = (s(x_k) - gamma v) dt + sqrt(2 gamma) dB.

With s frozen the pair (x, v) follows a linear SDE, so each step is sampled from
its exact Gaussian transition; the only discretization bias comes from freezing
the score.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DivergenceError, DomainError


@dataclass(frozen=True)
class UlmcConfig:
    friction: float
    step: float
    steps: int
    L: float
    eta: float = float("nan")

    def __post_init__(self):
        if not (self.friction > 0 and self.step > 0 and self.steps >= 1):
            raise DomainError("friction, step and steps must be positive")

    @property
    def duration(self) -> float:
        return self.step * self.steps

    def to_dict(self):
        out = asdict(self)
        out["duration"] = self.duration
        return out


def corrector_params(eps: float, d: int, L: float, R: float, sigma: float, M_sampler: int,
                     friction_const: float = 1.0) -> UlmcConfig:
    """Corrector schedule: step eps^(2/3) / (d^(1/3) M^(1/3) L^(1/2)) for M steps.

    ``eta`` is the Wasserstein budget min(eps^(5/3)/(L^(1/4) d^(1/2)), eps sigma^2/R^2)
    the preceding sampler is expected to meet; it is recorded, not enforced.
    """
    if not 0 < eps <= 1:
        raise DomainError(f"corrector eps must lie in (0, 1], got {eps}")
    if min(d, L, sigma, M_sampler) <= 0 or R < 0:
        raise DomainError("corrector inputs must be positive")
    eta_w = eps ** (5.0 / 3.0) / (L**0.25 * math.sqrt(d))
    eta_r = eps * sigma**2 / R**2 if R > 0 else math.inf
    step = eps ** (2.0 / 3.0) / (d ** (1.0 / 3.0) * M_sampler ** (1.0 / 3.0) * math.sqrt(L))
    return UlmcConfig(friction=friction_const * math.sqrt(L), step=step, steps=int(M_sampler),
                      L=L, eta=min(eta_w, eta_r))


def _var_x_series(u: float) -> float:
    """u - 2(1 - e^-u) + (1 - e^-2u)/2 summed as a series (no cancellation for small u)."""
    total, term = 0.0, 1.0
    for n in range(1, 40):
        term *= u / n
        if n >= 3:
            c = (-1) ** n * (2.0 - 2.0 ** (n - 1)) * term
            total += c
            if abs(c) < 1e-18 * abs(total):
                break
    return total


def transition_moments(friction: float, step: float):
    """Coefficients of the exact one-step transition with frozen score g.

    Returns a dict with
        mean_x = x + cx_v * v + cx_g * g,   mean_v = cv_v * v + cv_g * g
    and per-coordinate covariance entries var_x, cov_xv, var_v.
    """
    g, h = friction, step
    u = g * h
    one_minus_a = -math.expm1(-u)
    if u < 0.5:
        bracket = _var_x_series(u)
    else:
        bracket = u - 2.0 * one_minus_a - 0.5 * math.expm1(-2.0 * u)
    return {
        "cx_v": one_minus_a / g,
        "cx_g": (u - one_minus_a) / g**2,
        "cv_v": math.exp(-u),
        "cv_g": one_minus_a / g,
        "var_x": 2.0 * bracket / g**2,
        "cov_xv": one_minus_a**2 / g,
        "var_v": -math.expm1(-2.0 * u),
    }


def ulmc_step(x, v, g, friction, step, noise):
    """Exact frozen-score step. ``noise`` holds standard normals of shape (2,) + x.shape."""
    m = transition_moments(friction, step)
    chol_xx = math.sqrt(m["var_x"])
    chol_vx = m["cov_xv"] / chol_xx
    chol_vv = math.sqrt(max(m["var_v"] - chol_vx**2, 0.0))
    x_new = x + m["cx_v"] * v + m["cx_g"] * g + chol_xx * noise[0]
    v_new = m["cv_v"] * v + m["cv_g"] * g + chol_vx * noise[0] + chol_vv * noise[1]
    return x_new, v_new


def ulmc_run(score_at_stop, x0, config: UlmcConfig, rng, v0=None):
    """Run ``config.steps`` corrector steps from x0 (shape (d,) or (n, d)).

    ``rng`` is either one Generator or a sequence of per-chain Generators (one per
    row of x0), in which case chain i draws only from rng[i].
    """
    x = np.array(x0, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    n, d = x.shape
    if isinstance(rng, np.random.Generator) and n > 1:
        # one shared stream: draw everything up front
        v = rng.standard_normal((n, d)) if v0 is None else np.array(v0, dtype=float)
        noise = rng.standard_normal((config.steps, 2, n, d))
    else:
        gens = [rng] if isinstance(rng, np.random.Generator) else list(rng)
        if len(gens) != n:
            raise DomainError("need one generator per chain")
        per_chain = [gg.standard_normal(d + config.steps * 2 * d) for gg in gens]
        buf = np.stack(per_chain)
        v = buf[:, :d] if v0 is None else np.array(v0, dtype=float).reshape(n, d)
        noise = buf[:, d:].reshape(n, config.steps, 2, d).transpose(1, 2, 0, 3)
    for k in range(config.steps):
        grad = np.asarray(score_at_stop(x), dtype=float)
        x, v = ulmc_step(x, v, grad, config.friction, config.step, noise[k])
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise DivergenceError("non-finite corrector state", iteration=k + 1)
    return x[0] if single else x
