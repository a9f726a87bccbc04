"""Targets of the form q = q_pre * N(0, sigma^2 I) with q_pre a finite atomic measure.

Every marginal q_t of the noising process is then a mixture of isotropic
Gaussians, so scores, posteriors over atoms and posterior total variation are
available in closed form.

Coordinates. A :class:`SmoothedTarget` is specified in *output* coordinates
(atoms as given, noise level ``sigma``). All time-indexed queries in this module
work in *normalized* coordinates, where atoms are divided by ``sigma`` and the
residual noise level is one. The sampler rescales by ``sigma`` on output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DomainError
from .schedule import NoiseSchedule

LOG_UNDERFLOW = -745.0


def _mirror_units(atoms: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Pair each atom with an unused equal-weight atom at its negation."""
    free: dict = {}
    for k in range(atoms.shape[0]):
        free.setdefault(((atoms[k] + 0.0).tobytes(), w[k]), []).append(k)
    used = np.zeros(atoms.shape[0], dtype=bool)
    units = []
    for k in range(atoms.shape[0]):
        if used[k]:
            continue
        used[k] = True
        mate = -1
        if np.any(atoms[k] != 0):
            # +0.0 turns -0.0 entries into +0.0 so the byte key matches
            cands = free.get(((-atoms[k] + 0.0).tobytes(), w[k]), [])
            for j in cands:
                if not used[j]:
                    mate = j
                    used[j] = True
                    break
        units.append((k, mate))
    out = np.array(units, dtype=np.int64).reshape(-1, 2)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class AtomicPrior:
    """Finite atomic measure sum_i w_i delta_{atom_i}.

    Weights are validated as nonnegative and renormalized to sum to one.
    """

    atoms: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        if atoms.ndim != 2 or atoms.shape[0] < 1:
            raise DomainError("atoms must be an (n, d) array with n >= 1")
        if not np.all(np.isfinite(atoms)):
            raise DomainError("atoms must be finite")
        n = atoms.shape[0]
        if self.weights is None:
            w = np.full(n, 1.0 / n)
        else:
            w = np.asarray(self.weights, dtype=float).reshape(-1)
            if w.shape[0] != n:
                raise DomainError(f"expected {n} weights, got {w.shape[0]}")
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise DomainError("weights must be finite and nonnegative")
            total = w.sum()
            if total <= 0:
                raise DomainError("weights must not all be zero")
            w = w / total
        atoms.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_units", _mirror_units(atoms, w))

    @property
    def n(self) -> int:
        return self.atoms.shape[0]

    @property
    def d(self) -> int:
        return self.atoms.shape[1]

    @property
    def R(self) -> float:
        """Largest atom norm (radius of the smallest origin-centered ball holding the support)."""
        return float(np.max(np.linalg.norm(self.atoms, axis=1)))

    @property
    def units(self) -> np.ndarray:
        """Summation plan over atoms: rows (i, j) pair atom i with its mirror j
        (equal weight, j = -1 if none)."""
        return self._units

    @property
    def log_weights(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.weights)

    def scaled(self, factor: float) -> "AtomicPrior":
        return AtomicPrior(self.atoms * factor, self.weights)

    def mean(self) -> np.ndarray:
        return self.weights @ self.atoms

    def cov(self) -> np.ndarray:
        c = self.atoms - self.mean()
        return (c * self.weights[:, None]).T @ c


@dataclass(frozen=True)
class SmoothedTarget:
    """q = q_pre * N(0, sigma^2 I) together with the noising schedule used to sample it.

    Attributes:
        prior: atoms in output coordinates.
        sigma: noise level of the target.
        schedule: OU schedule; time-indexed queries use it.
        base: the prior divided by ``sigma`` (normalized coordinates).
    """

    prior: AtomicPrior
    sigma: float = 1.0
    schedule: NoiseSchedule = field(default_factory=lambda: NoiseSchedule(10.0))
    base: AtomicPrior = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise DomainError(f"sigma must be positive, got {self.sigma}")
        object.__setattr__(self, "base", self.prior.scaled(1.0 / self.sigma))

    @property
    def d(self) -> int:
        return self.prior.d

    @property
    def T(self) -> float:
        return self.schedule.T

    @property
    def R_normalized(self) -> float:
        """R / sigma."""
        return self.base.R

    def with_horizon(self, T: float) -> "SmoothedTarget":
        return SmoothedTarget(self.prior, self.sigma, NoiseSchedule(T))

    # -- output-coordinate queries (law q itself) ---------------------------------

    def mean(self) -> np.ndarray:
        return self.prior.mean()

    def cov(self) -> np.ndarray:
        return self.prior.cov() + self.sigma**2 * np.eye(self.d)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """n direct draws from q."""
        idx = rng.choice(self.prior.n, size=n, p=self.prior.weights)
        return self.prior.atoms[idx] + self.sigma * rng.standard_normal((n, self.d))

    def score_q(self, x) -> np.ndarray:
        """Score of q in output coordinates (used by the Langevin corrector)."""
        return _gmm_score(np.asarray(x, dtype=float), self.prior.atoms,
                          self.prior.log_weights, 1.0, self.sigma**2)

    def lipschitz_q(self) -> float:
        """Bound (1 + R^2/sigma^2)/sigma^2 on the Lipschitz constant of score_q."""
        return (1.0 + self.R_normalized**2) / self.sigma**2


# -- mixture kernels -----------------------------------------------------------------

def _sum_last(a):
    """Sum over a short last axis by sequential elementwise adds.

    Faster than a ufunc reduction for the tiny axes used here (dimension, atom
    count), and the summation order is fixed, so a row's result never depends on
    how many rows are batched with it.
    """
    if a.shape[-1] > 64:
        return np.sum(a, axis=-1)
    out = a[..., 0].copy()
    for i in range(1, a.shape[-1]):
        out += a[..., i]
    return out


def _paired_sum(a, units):
    """Sum over the atom axis (last) following a summation plan from :func:`_mirror_units`."""
    first = a[..., units[:, 0]]
    if np.any(units[:, 1] >= 0):
        second = np.where(units[:, 1] >= 0, a[..., np.maximum(units[:, 1], 0)], 0.0)
        first = first + second
    return _sum_last(first)


def _logits(y, atoms, log_w, s, sig2):
    """Unnormalized log posterior over atoms: log w_k - |y - s mu_k|^2 / (2 sig2).

    ``s`` and ``sig2`` broadcast against ``y.shape[:-1]``.
    """
    s = np.asarray(s, dtype=float)[..., None]
    sq = None
    for c in range(atoms.shape[1]):
        diff = y[..., c, None] - s * atoms[:, c]
        sq = diff * diff if sq is None else sq + diff * diff
    return log_w - sq / (2.0 * np.asarray(sig2, dtype=float)[..., None])


def _normalize(logits, units=None):
    top = logits[..., 0].copy()
    for k in range(1, logits.shape[-1]):
        np.maximum(top, logits[..., k], out=top)
    shifted = logits - top[..., None]
    ex = np.exp(shifted)
    lse = top + np.log(_sum_last(ex) if units is None else _paired_sum(ex, units))
    logr = logits - lse[..., None]
    r = np.where(logr < LOG_UNDERFLOW, 0.0, np.exp(logr))
    return r, lse


def _weighted_atoms(r, atoms, units=None):
    """sum_k r[..., k] * atoms[k] with a fixed summation order."""
    if units is not None:
        return _paired_sum(r[..., None, :] * atoms.T, units)
    out = r[..., 0, None] * atoms[0]
    for k in range(1, atoms.shape[0]):
        out += r[..., k, None] * atoms[k]
    return out


def _gmm_score(y, atoms, log_w, s, sig2):
    r, _ = _normalize(_logits(y, atoms, log_w, s, sig2))
    s = np.asarray(s, dtype=float)[..., None]
    return (s * _weighted_atoms(r, atoms) - y) / np.asarray(sig2, dtype=float)[..., None]


# -- time-indexed queries (normalized coordinates) ---------------------------------

def _prepare(target: SmoothedTarget, t, y):
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != target.d:
        raise DomainError(f"expected points of dimension {target.d}, got {y.shape[-1]}")
    t = np.asarray(t, dtype=float)
    sched = target.schedule
    # schedule at the distinct times only, then broadcast to the points
    shape = y.shape[:-1]
    s = np.broadcast_to(sched.signal(t), shape)
    sig2 = np.broadcast_to(sched.sigma2(t), shape)
    return y, np.broadcast_to(t, shape), s, sig2


def sample_prior(prior: AtomicPrior, rng: np.random.Generator, size=None):
    """Draw atom_i with probability w_i (one point, or ``size`` points)."""
    idx = rng.choice(prior.n, size=size, p=prior.weights)
    return prior.atoms[idx]


def sample_marginal(target: SmoothedTarget, t: float, rng: np.random.Generator, size=None,
                    return_latent: bool = False):
    """Draw y = signal(t) X + sigma(t) xi from q_t with X ~ normalized prior.

    With ``return_latent`` the pair (X, xi) is returned as well, for diagnostics
    that need the exact latent.
    """
    sched = target.schedule
    shape = (target.d,) if size is None else (size, target.d)
    xbar = sample_prior(target.base, rng, size=size)
    xi = rng.standard_normal(shape)
    y = sched.signal(t) * xbar + sched.sigma(t) * xi
    if return_latent:
        return y, xbar, xi
    return y


def responsibilities(target: SmoothedTarget, t, y) -> np.ndarray:
    """Posterior probabilities of the atoms given y_t = y (last axis indexes atoms)."""
    y, t, s, sig2 = _prepare(target, t, y)
    base = target.base
    if np.all(sig2 > 0):
        r, _ = _normalize(_logits(y, base.atoms, base.log_weights, s, sig2))
        return r
    # sigma_t = 0: the posterior is a point mass only if y is exactly an atom image
    out = np.empty(y.shape[:-1] + (base.n,))
    for idx in np.ndindex(*y.shape[:-1]):
        if sig2[idx] > 0:
            r, _ = _normalize(_logits(y[idx], base.atoms, base.log_weights, s[idx], sig2[idx]))
            out[idx] = r
            continue
        hit = np.all(np.abs(s[idx] * base.atoms - y[idx]) <= 1e-12, axis=1) & (base.weights > 0)
        if not np.any(hit):
            raise DomainError("posterior at sigma_t = 0 is undefined for y off the support")
        w = np.where(hit, base.weights, 0.0)
        out[idx] = w / w.sum()
    return out


def posterior_mean(target: SmoothedTarget, t, y) -> np.ndarray:
    """E[X_t | y_t = y] = sum_i r_i(y) * signal(t) * atom_i."""
    r = responsibilities(target, t, y)
    s = np.broadcast_to(target.schedule.signal(np.asarray(t, dtype=float)), r.shape[:-1])
    return s[..., None] * _weighted_atoms(r, target.base.atoms)


def _reject_terminal(sig2):
    if np.any(sig2 <= 0):
        raise DomainError("score is undefined at t = T (sigma_t = 0)")


def score(target: SmoothedTarget, t, y) -> np.ndarray:
    """Score grad log q_t(y) via the posterior mean: (mu_t(y) - y) / sigma_t^2."""
    y, t, s, sig2 = _prepare(target, t, y)
    _reject_terminal(sig2)
    base = target.base
    if _kernels.HAVE_NUMBA and y.ndim >= 1:
        return _kernels.gmm_score(y, s, sig2, base.atoms, base.log_weights, base.units)
    return score_numpy(target, t, y)


def score_numpy(target: SmoothedTarget, t, y) -> np.ndarray:
    """Pure numpy version of :func:`score` (reference for the compiled kernel)."""
    y, t, s, sig2 = _prepare(target, t, y)
    _reject_terminal(sig2)
    base = target.base
    r, _ = _normalize(_logits(y, base.atoms, base.log_weights, s, sig2), base.units)
    mu = s[..., None] * _weighted_atoms(r, base.atoms, base.units)
    return (mu - y) / sig2[..., None]


def log_density(target: SmoothedTarget, t, y) -> np.ndarray:
    """log q_t(y) of the Gaussian mixture, computed with log-sum-exp."""
    y, t, s, sig2 = _prepare(target, t, y)
    _reject_terminal(sig2)
    base = target.base
    _, lse = _normalize(_logits(y, base.atoms, base.log_weights, s, sig2))
    return lse - 0.5 * target.d * np.log(2.0 * np.pi * sig2)


def score_direct(target: SmoothedTarget, t, y) -> np.ndarray:
    """Score as the mixture log-density gradient sum_k p_k grad log p_k / sum_k p_k.

    Independent of :func:`score`'s posterior-mean route; used as a cross-check.
    """
    y, t, s, sig2 = _prepare(target, t, y)
    _reject_terminal(sig2)
    base = target.base
    d = target.d
    comp = base.log_weights - 0.5 * d * np.log(2.0 * np.pi * sig2)[..., None]
    means = s[..., None, None] * base.atoms
    resid = means - y[..., None, :]
    logp = comp - np.sum(resid**2, axis=-1) / (2.0 * sig2[..., None])
    top = np.max(logp, axis=-1, keepdims=True)
    p = np.exp(logp - top)
    grad_each = resid / sig2[..., None, None]
    return np.sum(p[..., None] * grad_each, axis=-2) / np.sum(p, axis=-1)[..., None]


def drift(target: SmoothedTarget, t, y) -> np.ndarray:
    """Probability flow ODE right-hand side y + grad log q_t(y)."""
    y = np.asarray(y, dtype=float)
    return y + score(target, t, y)


def posterior_tv(target: SmoothedTarget, t, y1, y2) -> np.ndarray:
    """Exact TV distance between the discrete posteriors given y1 and given y2."""
    r1 = responsibilities(target, t, y1)
    r2 = responsibilities(target, t, y2)
    return 0.5 * np.sum(np.abs(r1 - r2), axis=-1)


def posterior_cov(target: SmoothedTarget, t, y) -> np.ndarray:
    """Covariance of X_t under the posterior given y (a d x d matrix per query)."""
    r = responsibilities(target, t, y)
    s = np.broadcast_to(target.schedule.signal(np.asarray(t, dtype=float)), r.shape[:-1])
    pts = s[..., None, None] * target.base.atoms
    mean = np.sum(r[..., :, None] * pts, axis=-2)
    c = pts - mean[..., None, :]
    return np.einsum("...k,...ki,...kj->...ij", r, c, c)


def score_hessian(target: SmoothedTarget, t, y) -> np.ndarray:
    """Closed-form Hessian of log q_t: Cov/sigma^4 - I/sigma^2."""
    sig2 = float(target.schedule.sigma2(t))
    if sig2 <= 0:
        raise DomainError("Hessian undefined at t = T")
    cov = posterior_cov(target, t, y)
    return cov / sig2**2 - np.eye(target.d) / sig2
