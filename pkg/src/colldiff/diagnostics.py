"""Empirical probes of the structural facts the sampler relies on.

* low-degree profile: how well the drift along an exact trajectory is captured by
  a k-node Chebyshev interpolant on one window;
* smoothness: finite-difference score Jacobians against 2 + 4 e^{-(T-t)} R^2;
* coupling: exact posterior TV under a delta-perturbation of the observation;
* contraction: one collocation step on random state pairs;
* time derivatives of the drift along a trajectory by central differences.

All inputs are in normalized coordinates (see :mod:`colldiff.mixture`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import chebyshev, mixture
from .errors import DomainError
from .mixture import SmoothedTarget
from .picard import PicardState, picard_step, sup_column_distance
from .sampler import reference_solve, reference_trajectory
from .schedule import early_stop_time

MIN_GRID = 200


# -- low-degree profile ------------------------------------------------------------

@dataclass(frozen=True)
class LowDegreeProfile:
    """Sup-norm interpolation error of t -> F*_t(y_t) on one window, per node count k.

    ``per_coordinate[i, c]`` is the error of coordinate c at ``degrees[i]``.
    """

    window: tuple
    degrees: tuple
    sup_errors: np.ndarray
    per_coordinate: np.ndarray
    grid_size: int
    precision: str

    def log_fit(self):
        """Least-squares fit log(err) = a + b k. Returns (slope, intercept, r_squared)."""
        k = np.asarray(self.degrees, dtype=float)
        y = np.log(np.maximum(self.sup_errors, np.finfo(float).tiny))
        b, a = np.polyfit(k, y, 1)
        resid = y - (a + b * k)
        ss_tot = np.sum((y - y.mean()) ** 2)
        r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
        return float(b), float(a), float(r2)

    def rows(self):
        for i, k in enumerate(self.degrees):
            yield {"t0": self.window[0], "t1": self.window[1], "k": int(k),
                   "sup_error": float(self.sup_errors[i])}


def _check_window(target, window):
    t0, t1 = (float(w) for w in window)
    t_stop = early_stop_time(target.schedule, 1.0)
    if not (0.0 <= t0 < t1 <= t_stop + 1e-12):
        raise DomainError(f"window [{t0}, {t1}] must lie in [0, t_stop={t_stop:.6g}]")
    return t0, t1


def lowdegree_profile(target: SmoothedTarget, y0, window, k_list: Sequence[int],
                      grid: int = MIN_GRID, precision: str = "double",
                      dps: int = 60) -> LowDegreeProfile:
    """Interpolate the exact drift along the trajectory through y0 (the state at window[0]).

    ``precision="double"`` uses the RK4 reference solver and float arithmetic, so
    errors bottom out near 1e-15. ``precision="extended"`` integrates the ODE and
    evaluates the interpolants in ``dps``-digit arithmetic (mpmath), which exposes
    the decay of the approximation error below double-precision rounding.
    """
    t0, t1 = _check_window(target, window)
    if grid < MIN_GRID:
        raise DomainError(f"grid must have at least {MIN_GRID} points")
    ks = tuple(int(k) for k in k_list)
    if not ks or min(ks) < 1:
        raise DomainError("k_list must hold positive node counts")
    y0 = np.asarray(y0, dtype=float)
    if precision == "double":
        per = _profile_double(target, y0, t0, t1, ks, grid)
    elif precision == "extended":
        per = _profile_extended(target, y0, t0, t1, ks, grid, dps)
    else:
        raise DomainError(f"unknown precision {precision!r}")
    return LowDegreeProfile(window=(t0, t1), degrees=ks, sup_errors=per.max(axis=1),
                            per_coordinate=per, grid_size=grid, precision=precision)


def _profile_double(target, y0, t0, t1, ks, grid):
    h = t1 - t0
    gridpts = np.linspace(t0, t1, grid)
    bases = [chebyshev.rescale(k, t0, h) for k in ks]
    times = np.unique(np.concatenate([gridpts] + [b.nodes for b in bases]))
    traj = reference_trajectory(target, y0, times)
    drift = mixture.drift(target, times[:, None], traj[:, None, :])[:, 0, :]
    lookup = {float(t): i for i, t in enumerate(times)}
    exact = drift[[lookup[float(t)] for t in gridpts]]
    out = np.empty((len(ks), target.d))
    for i, b in enumerate(bases):
        vals = drift[[lookup[float(t)] for t in b.nodes]]
        approx = chebyshev.interpolate(b, vals)(gridpts)
        out[i] = np.max(np.abs(approx - exact), axis=0)
    return out


def _profile_extended(target, y0, t0, t1, ks, grid, dps):
    import mpmath

    ctx = mpmath.mp.clone()
    ctx.dps = dps
    T = ctx.mpf(target.T)
    atoms = [[ctx.mpf(float(a)) for a in row] for row in target.base.atoms]
    logw = [ctx.mpf(float(w)) for w in target.base.log_weights]
    d = target.d

    def drift(t, y):
        s = ctx.exp(-(T - t))
        sig2 = -ctx.expm1(-2 * (T - t))
        lg = [lw - ctx.fsum((y[c] - s * a[c]) ** 2 for c in range(d)) / (2 * sig2)
              for lw, a in zip(logw, atoms)]
        top = max(lg)
        e = [ctx.exp(v - top) for v in lg]
        tot = ctx.fsum(e)
        return [y[c] + (s * ctx.fsum(ei * a[c] for ei, a in zip(e, atoms)) / tot - y[c]) / sig2
                for c in range(d)]

    a, h = ctx.mpf(t0), ctx.mpf(t1) - ctx.mpf(t0)
    sol = ctx.odefun(drift, a, [ctx.mpf(float(v)) for v in y0])

    def F(t):
        return drift(t, sol(t))

    gridpts = [a + h * i / (grid - 1) for i in range(grid)]
    exact = [F(t) for t in gridpts]
    out = np.empty((len(ks), d))
    for i, k in enumerate(ks):
        # first-kind Chebyshev nodes and their barycentric weights
        theta = [ctx.pi * (2 * j + 1) / (2 * k) for j in range(k)]
        xs = [a + h * (1 + ctx.cos(th)) / 2 for th in theta]
        bw = [(-1) ** j * ctx.sin(th) for j, th in enumerate(theta)]
        fv = [F(x) for x in xs]
        worst = [ctx.mpf(0)] * d
        for t, fe in zip(gridpts, exact):
            diffs = [t - x for x in xs]
            hit = next((j for j, dx in enumerate(diffs) if dx == 0), None)
            if hit is not None:
                approx = fv[hit]
            else:
                q = [w / dx for w, dx in zip(bw, diffs)]
                den = ctx.fsum(q)
                approx = [ctx.fsum(qj * f[c] for qj, f in zip(q, fv)) / den for c in range(d)]
            for c in range(d):
                worst[c] = max(worst[c], abs(approx[c] - fe[c]))
        out[i] = [float(w) for w in worst]
    return out


# -- Hessian bound -----------------------------------------------------------------

@dataclass(frozen=True)
class SmoothnessResult:
    t: float
    max_norm: float
    bound: float
    fd_budget: float
    passed: bool
    n_points: int


def score_jacobian_fd(target: SmoothedTarget, t: float, y, fd_step: float = 1e-4) -> np.ndarray:
    """Central-difference Jacobian of the score, shape (n, d, d) for y of shape (n, d)."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    n, d = y.shape
    J = np.empty((n, d, d))
    for c in range(d):
        e = np.zeros(d)
        e[c] = fd_step
        J[:, :, c] = (mixture.score(target, t, y + e) - mixture.score(target, t, y - e)) / (2 * fd_step)
    return J


def smoothness_check(target: SmoothedTarget, t: float, n_points: int, rng: np.random.Generator,
                     fd_step: float = 1e-4) -> SmoothnessResult:
    """Largest FD score-Jacobian norm over marginal samples vs 2 + 4 e^{-(T-t)} R^2.

    The check allows an FD error budget of 10 fd_step max(R, 1)^3 on top of the bound.
    """
    if target.T - t < 1.0 - 1e-12:
        raise DomainError("smoothness check needs T - t >= 1")
    R = target.R_normalized
    bound = 2.0 + 4.0 * math.exp(-(target.T - t)) * R**2
    budget = 10.0 * fd_step * max(R, 1.0) ** 3
    y = mixture.sample_marginal(target, t, rng, size=n_points)
    J = score_jacobian_fd(target, t, y, fd_step)
    worst = float(np.max(np.linalg.norm(J, ord=2, axis=(1, 2))))
    return SmoothnessResult(t=float(t), max_norm=worst, bound=bound, fd_budget=budget,
                            passed=worst <= bound + budget, n_points=int(n_points))


# -- posterior coupling ------------------------------------------------------------

@dataclass(frozen=True)
class CouplingResult:
    t: float
    delta: float
    eps1: float
    bound: float
    trials: int
    skipped: int
    violations: int
    max_tv: float


def coupling_radius(d: int, eps1: float) -> float:
    """sqrt(d) + sqrt(ln(1/eps1)), the noise radius defining the good event."""
    return math.sqrt(d) + math.sqrt(math.log(1.0 / eps1))


def coupling_check(target: SmoothedTarget, t: float, delta: float, eps1: float, n_trials: int,
                   rng: np.random.Generator) -> CouplingResult:
    """Count draws where TV(posterior | y, posterior | y + delta u) exceeds 8 delta radius.

    Draws whose noise sigma_t xi falls outside the radius are skipped (the bound is
    only claimed on that event).
    """
    if target.T - t < 1.0 - 1e-12:
        raise DomainError("coupling check needs T - t >= 1")
    if not 0 < eps1 < 1:
        raise DomainError("eps1 must lie in (0, 1)")
    rad = coupling_radius(target.d, eps1)
    if delta < 0 or delta > 1.0 / (6.0 * rad) * (1 + 1e-12):
        raise DomainError(f"delta must lie in [0, {1.0 / (6.0 * rad):.6g}]")
    y, _, xi = mixture.sample_marginal(target, t, rng, size=n_trials, return_latent=True)
    sig = target.schedule.sigma(t)
    keep = np.linalg.norm(sig * xi, axis=1) <= rad
    u = rng.standard_normal((n_trials, target.d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    y, u = y[keep], u[keep]
    bound = 8.0 * delta * rad
    if y.shape[0] == 0:
        return CouplingResult(float(t), float(delta), eps1, bound, n_trials, n_trials, 0, 0.0)
    tv = mixture.posterior_tv(target, t, y, y + delta * u)
    return CouplingResult(t=float(t), delta=float(delta), eps1=eps1, bound=bound,
                          trials=int(n_trials), skipped=int(n_trials - y.shape[0]),
                          violations=int(np.sum(tv > bound)), max_tv=float(np.max(tv)))


# -- contraction -------------------------------------------------------------------

@dataclass(frozen=True)
class ContractionResult:
    max_ratio: float
    bound: float
    passed: bool
    pairs_used: int


def contraction_check(oracle, basis: chebyshev.CollocationBasis, v, n_pairs: int,
                      rng: np.random.Generator, scale: float = 0.5,
                      lipschitz: Optional[float] = None) -> ContractionResult:
    """Max over random state pairs of dist(T x, T y) / dist(x, y) for one collocation step.

    ``oracle`` is a score oracle (its drift is the field, its declared Lipschitz
    constant the default) or a plain field (t, x) -> f with ``lipschitz`` given.
    """
    if hasattr(oracle, "drift"):
        field = oracle.drift
        L = oracle.lipschitz if lipschitz is None else lipschitz
    else:
        field = oracle
        if lipschitz is None:
            raise DomainError("a plain field needs an explicit lipschitz constant")
        L = lipschitz
    factor = L * basis.gamma * basis.h
    if factor > 0.5 * (1 + 1e-12):
        raise DomainError(f"contraction check needs L*gamma*h <= 1/2, got {factor:.4g}")
    v = np.atleast_2d(np.asarray(v, dtype=float))
    if v.shape[0] == 1:
        v = np.repeat(v, n_pairs, axis=0)
    n, d = v.shape
    X1 = v[:, None, :] + scale * rng.standard_normal((n, basis.D, d))
    X2 = X1 + scale * rng.uniform(0, 1, size=(n, 1, 1)) * rng.standard_normal((n, basis.D, d))
    before = sup_column_distance(X1, X2)
    s1 = picard_step(PicardState(X=X1, v=v, basis=basis), field)
    s2 = picard_step(PicardState(X=X2, v=v, basis=basis), field)
    after = sup_column_distance(s1.X, s2.X)
    ok = before > 0
    ratio = float(np.max(after[ok] / before[ok])) if np.any(ok) else 0.0
    return ContractionResult(max_ratio=ratio, bound=factor, passed=ratio <= factor * 1.05,
                             pairs_used=int(np.sum(ok)))


# -- time derivatives --------------------------------------------------------------

# central stencils: offsets and weights for d^p/dt^p, second-order accurate
_STENCILS = {
    1: ((-1, 1), (-0.5, 0.5)),
    2: ((-1, 0, 1), (1.0, -2.0, 1.0)),
    3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)),
    4: ((-2, -1, 0, 1, 2), (1.0, -4.0, 6.0, -4.0, 1.0)),
}


@dataclass(frozen=True)
class DerivativeProbe:
    t: float
    order: int
    fd_step: float
    value: np.ndarray
    inf_norm: float
    half_step_value: np.ndarray
    cancellation: bool


def _fd_derivative(target, y0, t, order, step):
    offs, wts = _STENCILS[order]
    total = np.zeros(target.d)
    for o, w in zip(offs, wts):
        s = t + o * step
        y = reference_solve(target, y0, t, s, tol=1e-13) if o != 0 else y0
        total = total + w * mixture.drift(target, s, y)
    return total / step**order


def drift_time_derivative(target: SmoothedTarget, y0, t: float, order: int,
                          fd_step: float) -> DerivativeProbe:
    """d^order/dt^order of F*_t(y_t) along the exact trajectory with y_t = y0.

    The estimate is repeated at fd_step / 2; a relative disagreement above 50% sets
    ``cancellation`` (the step is too small for double precision).
    """
    if order not in _STENCILS:
        raise DomainError("order must be in 1..4")
    if not fd_step > 0:
        raise DomainError("fd_step must be positive")
    reach = max(abs(o) for o in _STENCILS[order][0]) * fd_step
    if t - reach < 0 or t + reach >= target.T:
        raise DomainError("trajectory cannot be extended by the stencil at this t")
    y0 = np.asarray(y0, dtype=float)
    full = _fd_derivative(target, y0, t, order, fd_step)
    half = _fd_derivative(target, y0, t, order, fd_step / 2)
    scale = max(np.max(np.abs(full)), np.max(np.abs(half)))
    cancel = bool(scale > 0 and np.max(np.abs(full - half)) > 0.5 * scale)
    return DerivativeProbe(t=float(t), order=order, fd_step=float(fd_step), value=full,
                           inf_norm=float(np.max(np.abs(full))), half_step_value=half,
                           cancellation=cancel)
