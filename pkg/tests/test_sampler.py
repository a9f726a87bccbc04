import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import ks_2samp, norm

from colldiff import oracle, sampler
from colldiff.errors import ConvergenceError, DomainError

from conftest import ACCEPTANCE_ATOMS, make_target


def fast_plan(atoms, eps=1e-2, **ov):
    ov.setdefault("gamma_const", 10.0)
    return sampler.plan(make_target(atoms), eps, 0.1, ov)


def test_degree_from_eps():
    p = sampler.plan(make_target([[1.0]]), math.exp(-10), 0.1)
    assert p.k == 10 and p.D == 10


def test_window_length_formula():
    tgt = make_target([[1.0]])
    p = sampler.plan(tgt, math.exp(-10), math.exp(-1), {"gamma_const": 0.25})
    assert p.h == pytest.approx(0.0125)


def test_window_count_example():
    p = sampler.plan(make_target([[1.0]]), math.exp(-10), math.exp(-1),
                     {"gamma_const": 0.25, "T": 8.0})
    assert p.t_stop == pytest.approx(8 - 0.5 * math.log(2))
    assert p.n_windows == 613


def test_depth_formula_and_floor():
    p = sampler.plan(make_target(ACCEPTANCE_ATOMS), 1e-4, 0.1)
    raw = math.log(2) + math.log(2) + math.log(math.log(10)) + math.log(1e4) + math.log(p.L_tilde)
    assert p.m == math.ceil(raw)
    p2 = sampler.plan(make_target([[0.0]]), 0.5, 0.5)
    assert p2.m == 4


@pytest.mark.parametrize("eps,eps1", [(0.0, 0.1), (1.0, 0.1), (0.1, 0.0), (0.1, 1.5)])
def test_plan_rejects_bad_params(eps, eps1):
    with pytest.raises(DomainError):
        sampler.plan(make_target([[1.0]]), eps, eps1)


def test_plan_rejects_unsafe_or_oversize_h():
    tgt = make_target(ACCEPTANCE_ATOMS)
    with pytest.raises(DomainError):
        sampler.plan(tgt, 1e-2, 0.1, {"h": 0.5})     # L gamma h > 1/2
    with pytest.raises(DomainError):
        sampler.plan(make_target([[0.0]]), 1e-2, 0.1, {"h": 0.2, "T": 0.5})
    with pytest.raises(DomainError):
        sampler.plan(tgt, 1e-2, 0.1, {"bogus": 1})


@given(t_stop=st.floats(0.1, 50), h=st.floats(1e-3, 1))
def test_tiling(t_stop, h):
    w = sampler.tile(t_stop, h)
    assert w[0, 0] == 0.0 and w[-1, 1] == t_stop
    assert np.all(w[1:, 0] == w[:-1, 1])
    lengths = w[:, 1] - w[:, 0]
    # edges are i*h rounded, so lengths carry a few ulps of t_stop
    assert np.all(lengths <= h + 8 * np.finfo(float).eps * t_stop) and np.all(lengths > 0)
    assert len(w) == max(math.ceil(t_stop / h - 1e-9), 1)


@given(R=st.floats(0.0, 6.0), d=st.integers(1, 8), le=st.floats(0.5, 14),
       g=st.floats(0.01, 100))
def test_plan_safety(R, d, le, g):
    atoms = np.zeros((2, d))
    atoms[0, 0], atoms[1, 0] = R, -R
    p = sampler.plan(make_target(atoms), math.exp(-le), 0.1, {"gamma_const": g})
    assert p.contraction <= 0.5 * (1 + 1e-12)
    assert p.h <= 1.0 / (2 * p.L_tilde * p.gamma_phi) * (1 + 1e-12)
    assert p.k == max(math.ceil(le - 1e-9), 1)


def test_oracle_horizon_must_match():
    p = fast_plan([[1.0, 1.0]])
    with pytest.raises(DomainError):
        sampler.solve_flow(p, oracle.exact_oracle(make_target([[1.0, 1.0]], T=3.0)), np.zeros(2))


def test_run_eval_count():
    p = fast_plan([[1.0, 1.0]])
    o = oracle.exact_oracle(p.target)
    sampler.run(p, o, np.random.default_rng(0))
    assert o.eval_counter == p.n_windows * p.m * p.D


def test_run_batch_report_and_single_chain():
    p = fast_plan(ACCEPTANCE_ATOMS)
    o = oracle.exact_oracle(p.target)
    x, rep = sampler.run_batch(p, o, 7, seed=42)
    assert rep.evals == 7 * p.n_windows * p.m * p.D
    one = sampler.run(p, oracle.exact_oracle(p.target), sampler.chain_rng(42, 0))
    assert np.array_equal(one, x[0])
    x1, _ = sampler.run_batch(p, oracle.exact_oracle(p.target), 1, seed=42)
    assert np.array_equal(x1[0], x[0])


def test_run_batch_determinism_block_and_threads():
    p = fast_plan(ACCEPTANCE_ATOMS)
    o = oracle.noisy_oracle(p.target, 0.01, seed=5)
    a, _ = sampler.run_batch(p, o, 23, seed=9, block=23)
    b, _ = sampler.run_batch(p, o, 23, seed=9, block=4, threads=3)
    c, _ = sampler.run_batch(p, o, 23, seed=9, block=5)
    assert np.array_equal(a, b) and np.array_equal(a, c)
    d, _ = sampler.run_batch(p, o, 23, seed=10)
    assert not np.array_equal(a, d)


def test_chain_rng_prefix_stable():
    a = [sampler.chain_rng(3, c).standard_normal(2) for c in range(5)]
    b = [sampler.chain_rng(3, c).standard_normal(2) for c in range(3)]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_run_batch_rejects():
    p = fast_plan([[1.0]])
    with pytest.raises(DomainError):
        sampler.run_batch(p, oracle.exact_oracle(p.target), 0, seed=1)


def test_single_atom_origin_is_standard_normal():
    p = fast_plan([[0.0, 0.0]], eps=1e-4)
    x, _ = sampler.run_batch(p, oracle.exact_oracle(p.target), 10_000, seed=1)
    for c in range(2):
        assert ks_2samp(x[:, c], norm.rvs(size=200_000, random_state=c)).statistic <= 0.02


def test_single_atom_mean():
    p = fast_plan([[1.0, 1.0]])
    x, _ = sampler.run_batch(p, oracle.exact_oracle(p.target), 10_000, seed=2)
    assert np.all(np.abs(x.mean(axis=0) - 1.0) <= 0.02)


def test_flow_matches_reference(gmm):
    p = sampler.plan(gmm, 1e-4, 0.1, {"gamma_const": 10.0})
    y0 = np.random.default_rng(3).standard_normal((5, 2))
    col = sampler.solve_flow(p, oracle.exact_oracle(p.target), y0)
    ref = sampler.reference_solve(p.target, y0, 0.0, p.t_stop, tol=1e-11, n_start=512)
    assert np.max(np.abs(col - ref)) <= 1e-8


# -- Euler ------------------------------------------------------------------

def test_euler_zero_drift_regime():
    tgt = make_target([[0.0]], T=40.0)
    o = oracle.exact_oracle(tgt)
    y = sampler.euler_solve(o, np.array([0.7]), 0.0, 0.01, 1)
    assert y[0] == pytest.approx(0.7, abs=1e-15)


def test_euler_linear_product():
    tgt = make_target([[0.0]], T=5.0)
    o = oracle.exact_oracle(tgt)
    t_stop = tgt.T - 0.5 * math.log(2)
    n = 57
    dt = t_stop / n
    expect = 1.3
    for i in range(n):
        expect *= 1 + dt * (1 - 1 / tgt.schedule.sigma2(i * dt))
    got = sampler.euler_solve(o, np.array([1.3]), 0.0, t_stop, n)
    assert got[0] == pytest.approx(expect, rel=1e-12)
    sampler.euler_baseline(o, n, np.random.default_rng(0))
    assert o.eval_counter == n + n


def test_euler_first_order(gmm):
    tgt = gmm.with_horizon(6.0)
    o = oracle.exact_oracle(tgt)
    y0 = np.random.default_rng(4).standard_normal((8, 2))
    t_stop = tgt.T - 0.5 * math.log(2)
    ref = sampler.reference_solve(tgt, y0, 0.0, t_stop, tol=1e-11, n_start=256)
    ns = np.array([100, 1000, 10_000, 100_000])
    errs = [np.median(np.linalg.norm(sampler.euler_solve(o, y0, 0, t_stop, n) - ref, axis=1))
            for n in ns]
    slope = np.polyfit(np.log(ns), np.log(errs), 1)[0]
    assert -1.2 <= slope <= -0.8


def test_euler_baseline_with_plan():
    p = fast_plan([[1.0, 1.0]])
    o = oracle.exact_oracle(p.target)
    x = sampler.euler_baseline(p, 50, np.random.default_rng(1), o)
    assert x.shape == (2,) and o.eval_counter == 50


# -- reference solver ----------------------------------------------------------

def test_reference_linear_closed_form():
    tgt = make_target([[0.0]], T=4.0)
    t0, t1 = 0.0, tgt.T - 0.5 * math.log(2)
    # a(t) = 1 - 1/sigma_t^2 = -1/u(t) with u = e^{2(T-t)} - 1, and
    # integral of -1/u is (1/2) ln(u(t1)/u(t0)) + (t1 - t0)
    u = lambda t: math.expm1(2 * (tgt.T - t))
    closed = 1.1 * math.sqrt(u(t1) / u(t0)) * math.exp(t1 - t0)
    got = sampler.reference_solve(tgt, np.array([1.1]), t0, t1, tol=1e-12)
    assert got[0] == pytest.approx(closed, abs=1e-10)


def test_reference_self_consistency_and_reversibility(gmm):
    y0 = np.array([0.4, -1.2])
    a = sampler.reference_solve(gmm, y0, 0.0, 9.0, tol=1e-10)
    b = sampler.reference_solve(gmm, y0, 0.0, 9.0, tol=1e-12)
    assert np.max(np.abs(a - b)) <= 1e-9
    back = sampler.reference_solve(gmm, b, 9.0, 0.0, tol=1e-12)
    assert np.max(np.abs(back - y0)) <= 10 * 1e-12 * np.exp(9.0)


def test_reference_nonconvergence(gmm):
    with pytest.raises(ConvergenceError):
        sampler.reference_solve(gmm, np.zeros(2), 0.0, 9.0, tol=1e-16, n_start=2, max_halvings=3)
    with pytest.raises(DomainError):
        sampler.reference_solve(gmm, np.zeros(2), 0.0, 1.0, tol=0.0)


def test_reference_trajectory_endpoints(gmm):
    times = np.linspace(0, 2, 5)
    tr = sampler.reference_trajectory(gmm, np.array([1.0, 0.0]), times)
    assert tr.shape == (5, 2)
    direct = sampler.reference_solve(gmm, np.array([1.0, 0.0]), 0.0, 2.0, tol=1e-11)
    assert np.allclose(tr[-1], direct, atol=1e-9)


def test_accuracy_dominance_equal_budget(gmm):
    p = sampler.plan(gmm, 1e-4, 0.1, {"gamma_const": 10.0})
    y0 = np.random.default_rng(8).standard_normal((20, 2))
    ref = sampler.reference_solve(p.target, y0, 0.0, p.t_stop, tol=1e-11, n_start=512)
    col = sampler.solve_flow(p, oracle.exact_oracle(p.target), y0)
    eul = sampler.euler_solve(oracle.exact_oracle(p.target), y0, 0.0, p.t_stop, p.evals_per_chain)
    assert (np.median(np.linalg.norm(col - ref, axis=1))
            <= np.median(np.linalg.norm(eul - ref, axis=1)))


def test_corrector_for_defaults():
    p = fast_plan([[0.0, 0.0]])
    c = sampler.corrector_for(p)
    assert c.steps >= 1 and c.step > 0 and c.friction > 0
    c2 = sampler.corrector_for(p, steps=3)
    assert c2.steps == 3
    with pytest.raises(DomainError):
        sampler.corrector_for(p, wrong=1)
