"""Chebyshev-node Lagrange bases on a time window.

On [-1, 1] the cardinal function for the root c_j = cos((2j-1)pi/(2D)) of T_D is

    phi_j(x) = (-1)^(j+1) sqrt(1 - c_j^2) T_D(x) / (D (x - c_j)),

a polynomial of degree D - 1 equal to one at c_j and zero at the other roots.
A :class:`CollocationBasis` maps these to a window [t0, t0 + h] and stores the
nodes in ascending time order together with the integral matrix used by the
Picard update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError

NEAR_NODE = 1e-8


def nodes(D: int) -> np.ndarray:
    """Chebyshev roots c_j, j = 1..D, in the (descending) order of the formula."""
    if D < 1:
        raise DomainError(f"node count must be >= 1, got {D}")
    j = np.arange(1, D + 1)
    return np.cos((2 * j - 1) * np.pi / (2 * D))


def _cardinals(D: int, x: np.ndarray) -> np.ndarray:
    """Matrix of phi_j(x) for all j (formula order), shape x.shape + (D,)."""
    c = nodes(D)
    theta_j = (2 * np.arange(1, D + 1) - 1) * np.pi / (2 * D)
    sign = np.where(np.arange(1, D + 1) % 2 == 1, 1.0, -1.0)
    x = np.asarray(x, dtype=float)[..., None]
    theta = np.arccos(np.clip(x, -1.0, 1.0))
    gap = x - c
    near = np.abs(gap) < NEAR_NODE
    # T_D(x) / (x - c_j) written as a ratio of sine products: both numerator and
    # denominator vanish linearly at c_j, and neither suffers cancellation there
    plus, minus = 0.5 * (theta + theta_j), 0.5 * (theta - theta_j)
    s_minus = np.sin(minus)
    safe = np.where(near, 1.0, s_minus)
    ratio = np.sin(D * plus) * np.sin(D * minus) / (np.sin(plus) * safe)
    val = sign * np.sqrt(1.0 - c * c) * ratio / D
    # first-order Taylor expansion around the own node: phi_j'(c_j) = c_j / (2 (1 - c_j^2))
    slope = c / (2.0 * (1.0 - c * c))
    return np.where(near, 1.0 + slope * gap, val)


def basis_eval(D: int, j: int, x):
    """phi_j(x) on [-1, 1] (1-based ``j`` in formula order)."""
    if not 1 <= j <= D:
        raise DomainError(f"basis index must be in 1..{D}, got {j}")
    out = _cardinals(D, x)[..., j - 1]
    return float(out) if np.ndim(out) == 0 else out


@lru_cache(maxsize=None)
def _gauss_legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


@dataclass(frozen=True, eq=False)
class CollocationBasis:
    """Lagrange basis at rescaled Chebyshev nodes on [t0, t0 + h].

    Attributes:
        D: number of nodes.
        t0, h: window start and length.
        nodes: ascending node times in the window.
        A: A[i, j] = integral of phi_i from t0 to nodes[j].
        weights: integral of phi_i over the whole window.
        gamma: sum_i |weights[i]| / h.
    """

    D: int
    t0: float
    h: float
    nodes: np.ndarray
    A: np.ndarray
    weights: np.ndarray
    gamma: float

    @property
    def t1(self) -> float:
        return self.t0 + self.h

    def to_reference(self, t):
        return 2.0 * (np.asarray(t, dtype=float) - self.t0) / self.h - 1.0

    def eval(self, t) -> np.ndarray:
        """phi_i(t) for all ascending nodes i, shape t.shape + (D,)."""
        return _cardinals(self.D, self.to_reference(t))[..., ::-1]

    def partial_integrals(self, t) -> np.ndarray:
        """integral of phi_i from t0 to t, for each i (shape t.shape + (D,))."""
        t = np.asarray(t, dtype=float)
        x, w = _gauss_legendre(_quad_points(self.D))
        half = 0.5 * (t - self.t0)
        pts = self.t0 + half[..., None] * (x + 1.0)
        return half[..., None] * np.einsum("q,...qi->...i", w, self.eval(pts))


def _quad_points(D: int) -> int:
    return math.ceil((D + 1) / 2) + 2


def basis_integrals(basis: CollocationBasis) -> np.ndarray:
    """A[i, j] = integral_{t0}^{node_j} phi_i(s) ds by fixed-order Gauss-Legendre."""
    return np.ascontiguousarray(basis.partial_integrals(basis.nodes).T)


def gamma_bound(basis: CollocationBasis) -> float:
    """sum_j |integral of phi_j over the window| / h."""
    return float(np.sum(np.abs(basis.weights)) / basis.h)


@lru_cache(maxsize=256)
def _reference(D: int):
    """Basis on [0, 1]; windows are affine images, so A and weights scale with h."""
    return _build(D, 0.0, 1.0)


def _build(D, t0, h):
    ref_nodes = nodes(D)[::-1]
    b = CollocationBasis(D=D, t0=t0, h=h, nodes=t0 + h * (ref_nodes + 1.0) / 2.0,
                         A=None, weights=None, gamma=float("nan"))
    A = basis_integrals(b)
    weights = b.partial_integrals(np.array(t0 + h))
    object.__setattr__(b, "A", A)
    object.__setattr__(b, "weights", weights)
    object.__setattr__(b, "gamma", gamma_bound(b))
    for arr in (b.nodes, A, weights):
        arr.setflags(write=False)
    return b


def rescale(D: int, t0: float, h: float) -> CollocationBasis:
    """Basis on the window [t0, t0 + h] with ascending nodes t0 + h (c + 1)/2."""
    if not h > 0:
        raise DomainError(f"window length must be positive, got {h}")
    if D < 1:
        raise DomainError(f"node count must be >= 1, got {D}")
    ref = _reference(D)
    b = CollocationBasis(D=D, t0=float(t0), h=float(h),
                         nodes=t0 + h * ref.nodes, A=h * ref.A, weights=h * ref.weights,
                         gamma=ref.gamma)
    for arr in (b.nodes, b.A, b.weights):
        arr.setflags(write=False)
    return b


def interpolate(basis: CollocationBasis, values):
    """Interpolant t -> sum_i values[i] phi_i(t); ``values`` has shape (D,) or (D, m)."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] != basis.D:
        raise DomainError(f"expected {basis.D} node values, got {values.shape[0]}")

    def evaluator(t):
        phi = basis.eval(t)
        return np.tensordot(phi, values, axes=([-1], [0]))

    return evaluator


def interpolation_sup_error(basis: CollocationBasis, f, grid_size: int = 1000) -> float:
    """max over a uniform grid of |f - interpolant of f at the nodes|."""
    if grid_size < 10:
        raise DomainError("grid_size must be >= 10")
    grid = np.linspace(basis.t0, basis.t1, grid_size)
    exact = np.asarray(f(grid), dtype=float)
    approx = interpolate(basis, np.asarray(f(basis.nodes), dtype=float))(grid)
    return float(np.max(np.abs(exact - approx)))
