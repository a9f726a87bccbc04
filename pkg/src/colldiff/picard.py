"""Collocation Picard iteration on a single window.

The state holds the trajectory values at the D nodes. One step evaluates the
vector field at every node and replaces column j with

    v + sum_i f_{c_i}(X[:, i]) * A[i, j],

i.e. the collocation operator applied once. The step also keeps the field values
it used, so the continuous curve whose node values are the new X (and in
particular its window endpoint) needs no further evaluations. A depth-m solve
therefore costs exactly m * D field evaluations per chain.

States are batched: ``X`` has shape (n, D, d) for n independent chains sharing a
window. Single-chain inputs of shape (d,) are promoted to n = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .chebyshev import CollocationBasis
from .errors import DivergenceError, DomainError

VectorField = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class PicardState:
    """Node values X (n, D, d), window start values v (n, d), and the field values F
    (n, D, d) that produced X (None right after initialization)."""

    X: np.ndarray
    v: np.ndarray
    basis: CollocationBasis
    iter: int = 0
    F: Optional[np.ndarray] = None

    @property
    def endpoint(self) -> np.ndarray:
        """Value at the window end of the curve through the current node values."""
        if self.F is None:
            return self.v.copy()
        return _combine(self.v, self.F, self.basis.weights)


def _combine(v, F, w):
    """v + sum_i w[i] F[:, i] with a fixed summation order."""
    out = v.copy()
    for i in range(F.shape[1]):
        out += w[i] * F[:, i]
    return out


def _as_batch(v):
    v = np.asarray(v, dtype=float)
    return v[None, :] if v.ndim == 1 else v


def init_state(v, basis: CollocationBasis) -> PicardState:
    """X = v 1_D^T for every chain."""
    v = _as_batch(v)
    X = np.repeat(v[:, None, :], basis.D, axis=1)
    return PicardState(X=X, v=v.copy(), basis=basis)


def field_of(oracle) -> VectorField:
    """Drift x + s_t(x) of a score oracle, as a vector field (t, x) -> f."""
    return oracle.drift


def picard_step(state: PicardState, field: VectorField, window: Optional[int] = None,
                bound: Optional[float] = None) -> PicardState:
    """One collocation update. ``field(t, x)`` is the full ODE right-hand side.

    Raises:
        DivergenceError: if the new node values are non-finite or exceed ``bound`` in norm.
    """
    basis = state.basis
    F = np.asarray(field(basis.nodes[None, :], state.X), dtype=float)
    # sequential adds rather than matmul: each chain's result is then independent
    # of the batch it is computed in
    if _kernels.HAVE_NUMBA:
        X, worst = _kernels.collocation_update(np.ascontiguousarray(state.v),
                                               np.ascontiguousarray(F), basis.A)
    else:
        X = np.repeat(state.v[:, None, :], basis.D, axis=1)
        for i in range(basis.D):
            X += F[:, i, None, :] * basis.A[i, :, None]
        worst = float(np.max(np.sum(X * X, axis=-1)))
    it = state.iter + 1
    if not np.isfinite(worst):
        raise DivergenceError("non-finite Picard iterate", window=window, iteration=it)
    if bound is not None and worst > bound * bound:
        raise DivergenceError(f"Picard iterate exceeded norm bound {bound:.3g}",
                              window=window, iteration=it)
    return replace(state, X=X, iter=it, F=F)


def sup_column_distance(X1, X2) -> np.ndarray:
    """max over nodes of the Euclidean column distance, per chain."""
    return np.max(np.linalg.norm(np.asarray(X1) - np.asarray(X2), axis=-1), axis=-1)


def picard_solve(v, field: VectorField, basis: CollocationBasis, N: int,
                 window: Optional[int] = None, bound: Optional[float] = None,
                 tol: Optional[float] = None):
    """Run N collocation steps from X = v 1^T.

    Args:
        tol: optional early exit once every chain's step change is below ``tol``.

    Returns:
        (endpoint, state, residual_history) where residual_history[k] is the
        largest sup-column change over chains at step k + 1.
    """
    if N < 1:
        raise DomainError(f"Picard depth must be >= 1, got {N}")
    state = init_state(v, basis)
    history = []
    for _ in range(N):
        new = picard_step(state, field, window=window, bound=bound)
        history.append(float(np.max(sup_column_distance(new.X, state.X))))
        state = new
        if tol is not None and history[-1] < tol:
            break
    endpoint = state.endpoint
    if np.ndim(v) == 1:
        endpoint = endpoint[0]
    return endpoint, state, np.array(history)


def evaluate_trajectory(state: PicardState, t) -> np.ndarray:
    """v + sum_j F_j * integral_{t0}^{t} phi_j, the continuous curve of the state."""
    basis = state.basis
    t = float(t)
    if t < basis.t0 - 1e-12 or t > basis.t1 + 1e-12:
        raise DomainError(f"t={t} outside window [{basis.t0}, {basis.t1}]")
    if state.F is None:
        return state.v.copy()
    if t == basis.t1:
        return state.endpoint
    w = basis.partial_integrals(np.array(t))
    return _combine(state.v, state.F, w)
