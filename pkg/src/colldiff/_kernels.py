"""Compiled per-point kernels for the hot paths (numba, with a numpy fallback).

Each kernel loops over points independently, so a point's result does not depend
on how many points share the call.
"""

from __future__ import annotations

import math

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional accelerator
    HAVE_NUMBA = False

if HAVE_NUMBA:

    @numba.njit(cache=True, nogil=True)
    def gmm_score_flat(y, s, sig2, atoms, log_w, units):
        """Score of sum_k w_k N(s mu_k, sig2 I) at each row of y (shape (N, d)).

        Atom sums run over ``units`` (pairs of atom indices, -1 for none): the two
        terms of a unit are added first, then units in order. With mirror atoms
        paired this makes the score exactly odd for symmetric priors.
        """
        N, d = y.shape
        K = atoms.shape[0]
        U = units.shape[0]
        out = np.empty((N, d))
        e = np.empty(K)
        for p in range(N):
            sp = s[p]
            inv2 = 1.0 / (2.0 * sig2[p])
            top = -np.inf
            for k in range(K):
                sq = 0.0
                for c in range(d):
                    diff = y[p, c] - sp * atoms[k, c]
                    sq += diff * diff
                val = log_w[k] - sq * inv2
                e[k] = val
                if val > top:
                    top = val
            for k in range(K):
                e[k] = math.exp(e[k] - top)
            tot = 0.0
            for u in range(U):
                i, j = units[u, 0], units[u, 1]
                tot += e[i] + e[j] if j >= 0 else e[i]
            for c in range(d):
                acc = 0.0
                for u in range(U):
                    i, j = units[u, 0], units[u, 1]
                    ti = (e[i] / tot) * atoms[i, c]
                    acc += ti + (e[j] / tot) * atoms[j, c] if j >= 0 else ti
                out[p, c] = (sp * acc - y[p, c]) / sig2[p]
        return out

    @numba.njit(cache=True, nogil=True)
    def collocation_update(v, F, A):
        """X[p, j] = v[p] + sum_i F[p, i] A[i, j]; also returns max |X[p, j]|^2
        (nan if any entry is non-finite)."""
        n, D, d = F.shape
        X = np.empty((n, D, d))
        worst = 0.0
        for p in range(n):
            for j in range(D):
                sq = 0.0
                for c in range(d):
                    acc = v[p, c]
                    for i in range(D):
                        acc += F[p, i, c] * A[i, j]
                    X[p, j, c] = acc
                    sq += acc * acc
                if not (sq <= worst):
                    worst = sq if sq == sq else np.nan
                    if worst != worst:
                        return X, worst
        return X, worst

    @numba.njit(cache=True, nogil=True)
    def feature_field_flat(y, t, freqs, tfreqs, phases, dirs, amp):
        """amp * sum_f dirs[f] cos(<freqs[f], y> + tfreqs[f] t + phases[f]) per row."""
        N, d = y.shape
        nf = freqs.shape[0]
        out = np.zeros((N, d))
        for p in range(N):
            for f in range(nf):
                arg = tfreqs[f] * t[p] + phases[f]
                for c in range(d):
                    arg += y[p, c] * freqs[f, c]
                cf = amp * math.cos(arg)
                for c in range(d):
                    out[p, c] += cf * dirs[f, c]
        return out

else:  # pragma: no cover
    gmm_score_flat = None
    collocation_update = None
    feature_field_flat = None


def gmm_score(y, s, sig2, atoms, log_w, units):
    """Dispatch to the compiled kernel. ``s`` and ``sig2`` broadcast to y.shape[:-1]."""
    shape = y.shape
    yf = np.ascontiguousarray(y, dtype=float).reshape(-1, shape[-1])
    sf = np.ascontiguousarray(np.broadcast_to(s, shape[:-1]), dtype=float).reshape(-1)
    gf = np.ascontiguousarray(np.broadcast_to(sig2, shape[:-1]), dtype=float).reshape(-1)
    out = gmm_score_flat(yf, sf, gf, np.ascontiguousarray(atoms, dtype=float),
                         np.ascontiguousarray(log_w, dtype=float),
                         np.ascontiguousarray(units, dtype=np.int64))
    return out.reshape(shape)


def feature_field(y, t, freqs, tfreqs, phases, dirs, amp):
    shape = y.shape
    yf = np.ascontiguousarray(y, dtype=float).reshape(-1, shape[-1])
    tf = np.ascontiguousarray(np.broadcast_to(t, shape[:-1]), dtype=float).reshape(-1)
    return feature_field_flat(yf, tf, freqs, tfreqs, phases, dirs, float(amp)).reshape(shape)
