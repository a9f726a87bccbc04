import numpy as np
import pytest
from hypothesis import given, strategies as st

from colldiff import chebyshev as cb
from colldiff import oracle, picard
from colldiff.errors import DivergenceError, DomainError

from conftest import ACCEPTANCE_ATOMS, make_target


def const_field(c):
    c = np.asarray(c, dtype=float)
    return lambda t, x: np.broadcast_to(c, np.shape(x)).copy()


def linear_field(t, x):
    return np.asarray(x, dtype=float).copy()


def test_init_state_columns():
    b = cb.rescale(3, 0.0, 0.1)
    s = picard.init_state([1.0, 2.0], b)
    assert s.X.shape == (1, 3, 2)
    assert np.all(s.X[0] == [1.0, 2.0])
    assert s.iter == 0
    z = picard.init_state(np.zeros(4), b)
    assert np.all(z.X == 0)
    again = picard.init_state(s.v[0], b)
    assert np.array_equal(again.X, s.X)


def test_zero_field_fixed_point():
    b = cb.rescale(5, 0.0, 0.2)
    s = picard.init_state([0.3, -1.0], b)
    for _ in range(3):
        s = picard.picard_step(s, const_field([0.0, 0.0]))
        assert np.array_equal(s.X[0], np.tile([0.3, -1.0], (5, 1)))
    assert s.iter == 3


def test_constant_field_exact_after_one_step():
    b = cb.rescale(4, 1.0, 0.5)
    c = np.array([2.0, -3.0])
    v = np.array([1.0, 1.0])
    s = picard.picard_step(picard.init_state(v, b), const_field(c))
    expect = v + np.outer(b.nodes - b.t0, c)
    assert np.allclose(s.X[0], expect, atol=1e-14)
    s2 = picard.picard_step(s, const_field(c))
    assert np.allclose(s2.X, s.X, atol=1e-15)
    end, _, _ = picard.picard_solve(v, const_field(c), b, 3)
    assert np.allclose(end, v + c * b.h, atol=1e-14)


def test_linear_field_exponential():
    b = cb.rescale(8, 0.0, 0.1)
    end, state, hist = picard.picard_solve(np.array([1.0]), linear_field, b, 20)
    assert end[0] == pytest.approx(np.exp(0.1), abs=1e-9)
    # contraction: each change shrinks by at most L gamma h (+ slack)
    good = hist[:-1] > 1e-13
    ratios = hist[1:][good] / hist[:-1][good]
    assert np.all(ratios <= 1.0 * b.gamma * b.h + 0.05)


def test_step_consumes_d_evaluations(gmm):
    o = oracle.exact_oracle(gmm)
    b = cb.rescale(7, 0.0, 0.01)
    s = picard.init_state(np.zeros((5, 2)), b)
    s = picard.picard_step(s, o.drift)
    assert o.eval_counter == 5 * 7
    _ = s.endpoint
    _ = picard.evaluate_trajectory(s, 0.005)
    assert o.eval_counter == 5 * 7


def test_solve_residual_history_and_depth_count(gmm):
    o = oracle.exact_oracle(gmm)
    b = cb.rescale(10, 0.0, 0.02)
    end, s, hist = picard.picard_solve(np.array([0.2, 0.1]), o.drift, b, 12)
    assert len(hist) == 12 and s.iter == 12
    assert o.eval_counter == 12 * 10
    L = o.lipschitz + 1.0
    good = hist[:-1] > 1e-12
    ratios = hist[1:][good] / hist[:-1][good]
    assert np.all(ratios <= L * b.gamma * b.h + 0.05)


def test_solve_rejects_zero_depth():
    with pytest.raises(DomainError):
        picard.picard_solve(np.zeros(1), linear_field, cb.rescale(3, 0, 1), 0)


def test_early_exit_tolerance():
    b = cb.rescale(6, 0.0, 0.1)
    _, s, hist = picard.picard_solve(np.array([1.0]), linear_field, b, 50, tol=1e-12)
    assert s.iter < 50 and hist[-1] < 1e-12


def test_divergence_nonfinite_names_window():
    b = cb.rescale(3, 0.0, 0.1)
    bad = lambda t, x: np.full(np.shape(x), np.nan)
    with pytest.raises(DivergenceError) as ei:
        picard.picard_step(picard.init_state(np.zeros(2), b), bad, window=17)
    assert ei.value.window == 17 and ei.value.iteration == 1


def test_divergence_bound_guard():
    # L gamma h >> 1: geometric blow-up trips the norm guard
    b = cb.rescale(4, 0.0, 5.0)
    huge = lambda t, x: 50.0 * np.asarray(x)
    state = picard.init_state(np.ones(1), b)
    with pytest.raises(DivergenceError) as ei:
        for _ in range(30):
            state = picard.picard_step(state, huge, window=3, bound=1e6)
    assert ei.value.window == 3 and ei.value.iteration > 1


def test_evaluate_trajectory():
    b = cb.rescale(5, 2.0, 0.4)
    c = np.array([1.5])
    v = np.array([-0.5])
    _, s, _ = picard.picard_solve(v, const_field(c), b, 2)
    assert np.allclose(picard.evaluate_trajectory(s, 2.0), v)
    assert np.allclose(picard.evaluate_trajectory(s, 2.4), s.endpoint, atol=1e-12)
    assert np.allclose(picard.evaluate_trajectory(s, 2.2), v + 0.2 * c, atol=1e-14)
    with pytest.raises(DomainError):
        picard.evaluate_trajectory(s, 2.5)


def test_endpoint_matches_trajectory_end(gmm, rng):
    o = oracle.exact_oracle(gmm)
    b = cb.rescale(9, 1.0, 0.03)
    _, s, _ = picard.picard_solve(rng.standard_normal((4, 2)), o.drift, b, 8)
    assert np.allclose(picard.evaluate_trajectory(s, b.t1 - 1e-15), s.endpoint, atol=1e-12)


def test_contraction_on_gmm_pairs(gmm, rng):
    o = oracle.exact_oracle(gmm)
    L = o.lipschitz
    for t0 in (0.0, 4.0, 9.0):
        b = cb.rescale(10, t0, 1.0 / (2 * L * 1.0))
        assert L * b.gamma * b.h <= 0.5
        v = rng.standard_normal((50, 2))
        s1 = picard.init_state(v, b)
        X2 = s1.X + 0.3 * rng.standard_normal(s1.X.shape)
        s2 = picard.PicardState(X=X2, v=s1.v, basis=b)
        d0 = picard.sup_column_distance(s1.X, s2.X)
        m = 5
        for _ in range(m):
            s1 = picard.picard_step(s1, o.drift)
            s2 = picard.picard_step(s2, o.drift)
            dk = picard.sup_column_distance(s1.X, s2.X)
        assert np.all(dk <= (L * b.gamma * b.h) ** m * d0 * (1 + 1e-9))
        assert np.all(dk <= 2.0 ** -m * d0)


def test_fixed_point_quality_linear_target():
    # single atom at 0: drift a(t) y with a = 1 - 1/sigma_t^2, closed-form flow
    tgt = make_target([[0.0]], T=6.0)
    o = oracle.exact_oracle(tgt)
    sched = tgt.schedule
    t0, h = 5.0, 0.2
    b = cb.rescale(6, t0, h)

    def a(t):
        return 1.0 - 1.0 / sched.sigma2(t)

    # closed form by numeric quadrature of a, independent of the solver
    from scipy.integrate import quad
    y0 = 1.3
    ytrue = lambda t: y0 * np.exp(quad(a, t0, t, epsabs=1e-14, epsrel=1e-14)[0])
    f = lambda ts: np.array([a(s) * ytrue(s) for s in np.atleast_1d(ts)])
    eps_ld = cb.interpolation_sup_error(b, f, 200)
    end, _, _ = picard.picard_solve(np.array([y0]), o.drift, b, 25)
    err = abs(end[0] - ytrue(t0 + h))
    assert err <= 2 * eps_ld * (1 + b.gamma) * h + 1e-10


def test_bitwise_determinism(gmm, rng):
    o = oracle.noisy_oracle(gmm, 0.1, seed=2)
    b = cb.rescale(8, 3.0, 0.02)
    v = rng.standard_normal((6, 2))
    e1, _, _ = picard.picard_solve(v, o.drift, b, 9)
    e2, _, _ = picard.picard_solve(v.copy(), o.drift, b, 9)
    assert np.array_equal(e1, e2)


@given(seed=st.integers(0, 2**31), n=st.integers(1, 9))
def test_batch_independence(seed, n):
    tgt = make_target(ACCEPTANCE_ATOMS)
    o = oracle.exact_oracle(tgt)
    b = cb.rescale(5, 2.0, 0.02)
    v = np.random.default_rng(seed).standard_normal((n, 2))
    batch, _, _ = picard.picard_solve(v, o.drift, b, 4)
    for i in range(n):
        one, _, _ = picard.picard_solve(v[i], o.drift, b, 4)
        assert np.array_equal(one, batch[i])


def test_numpy_update_path_matches(gmm, rng, monkeypatch):
    o = oracle.exact_oracle(gmm)
    b = cb.rescale(6, 1.0, 0.05)
    v = rng.standard_normal((3, 2))
    fast, _, _ = picard.picard_solve(v, o.drift, b, 3)
    monkeypatch.setattr(picard._kernels, "HAVE_NUMBA", False)
    slow, _, _ = picard.picard_solve(v, o.drift, b, 3)
    assert np.array_equal(fast, slow)
