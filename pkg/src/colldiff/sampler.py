"""Windowed collocation sampler for the probability flow ODE, plus baselines.

Pipeline for one chain: draw y0 ~ N(0, I) (normalized coordinates), solve the
ODE dy = (y + s_t(y)) dt window by window with depth-m collocation Picard
iterations on D Chebyshev nodes, stop at t_stop, rescale by e^{T - t_stop} and
by the target's sigma. Optionally a Langevin corrector runs on the output.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import chebyshev, mixture
from .corrector import UlmcConfig, corrector_params, ulmc_run
from .errors import ConvergenceError, DivergenceError, DomainError
from .mixture import SmoothedTarget
from .oracle import ScoreOracle, declared_lipschitz
from .picard import init_state, picard_step
from .schedule import NoiseSchedule, early_stop_time, run_horizon

PLAN_OVERRIDES = ("T", "h", "k", "D", "m", "gamma_const", "c_T")
DEFAULT_GAMMA_CONST = 0.25


def _ceil(x: float) -> int:
    # guard against ln(e^{-10}) = 10.000000000000002 style rounding
    return int(math.ceil(x - 1e-9))


@dataclass(frozen=True)
class SamplerPlan:
    """Resolved run parameters. Radii are normalized by sigma."""

    T: float
    t_stop: float
    h: float
    windows: np.ndarray = field(repr=False)
    k: int
    D: int
    m: int
    eps_err: float
    eps1: float
    gamma_const: float
    gamma_phi: float
    R: float
    sigma: float
    L_tilde: float
    d: int
    target: SmoothedTarget = field(repr=False)

    @property
    def n_windows(self) -> int:
        return len(self.windows)

    @property
    def evals_per_chain(self) -> int:
        return self.n_windows * self.m * self.D

    @property
    def contraction(self) -> float:
        return self.L_tilde * self.gamma_phi * self.h

    def to_dict(self) -> dict:
        return {
            "T": self.T, "t_stop": self.t_stop, "h": self.h, "n_windows": self.n_windows,
            "k": self.k, "D": self.D, "m": self.m, "eps_err": self.eps_err, "eps1": self.eps1,
            "gamma_const": self.gamma_const, "gamma_phi": self.gamma_phi, "R": self.R,
            "sigma": self.sigma, "L_tilde": self.L_tilde, "d": self.d,
        }


def tile(t_stop: float, h: float) -> np.ndarray:
    """Uniform windows of length h covering [0, t_stop]; the last one may be shorter."""
    n = max(_ceil(t_stop / h), 1)
    edges = np.minimum(np.arange(n + 1) * h, t_stop)
    edges[-1] = t_stop
    return np.stack([edges[:-1], edges[1:]], axis=1)


def plan(target: SmoothedTarget, eps_err: float, eps1: float = 0.1,
         overrides: Optional[dict] = None, lipschitz: Optional[float] = None) -> SamplerPlan:
    """Derive horizon, window length, degree and Picard depth for a target.

    Args:
        target: the target (its schedule is replaced by the planned horizon).
        eps_err: score error level; sets the degree k = ceil(ln 1/eps_err).
        eps1: failure-probability parameter entering h and m.
        overrides: any of T, h, k, D, m, gamma_const, c_T.
        lipschitz: declared score Lipschitz bound; defaults to 2 + 4R^2 + eps_err/2.
    """
    ov = dict(overrides or {})
    unknown = set(ov) - set(PLAN_OVERRIDES)
    if unknown:
        raise DomainError(f"unknown plan overrides: {sorted(unknown)}")
    ov = {key: val for key, val in ov.items() if val is not None}
    if not 0 < eps_err < 1:
        raise DomainError(f"eps_err must lie in (0, 1), got {eps_err}")
    if not 0 < eps1 < 1:
        raise DomainError(f"eps1 must lie in (0, 1), got {eps1}")
    d = target.d
    R_true = target.R_normalized
    R = max(R_true, 1.0)
    L = float(lipschitz) if lipschitz is not None else declared_lipschitz(R_true, eps_err)
    gamma_const = float(ov.get("gamma_const", DEFAULT_GAMMA_CONST))
    if not gamma_const > 0:
        raise DomainError("gamma_const must be positive")

    T = float(ov.get("T", run_horizon(R, d, eps_err, float(ov.get("c_T", 1.0)))))
    schedule = NoiseSchedule(T)
    t_stop = early_stop_time(schedule, 1.0)

    k = int(ov.get("k", _ceil(math.log(1.0 / eps_err))))
    D = int(ov.get("D", k))
    if k < 1 or D < 1:
        raise DomainError("k and D must be >= 1")
    gamma_phi = chebyshev.rescale(D, 0.0, 1.0).gamma
    h_max = 1.0 / (2.0 * L * gamma_phi)
    if "h" in ov:
        h = float(ov["h"])
        if h > h_max * (1 + 1e-12):
            raise DomainError(f"h={h} violates L*gamma*h <= 1/2 (max {h_max:.6g})")
    else:
        h = gamma_const / (k * (1.0 + R_true**2) * (math.log(1.0 / eps1) + math.log(d)))
        h = min(h, h_max)
    if not 0 < h <= t_stop:
        raise DomainError(f"window length h={h} must lie in (0, t_stop={t_stop}]")

    m_raw = (math.log(R) + math.log(d) + math.log(math.log(1.0 / eps1))
             + math.log(1.0 / eps_err) + math.log(L))
    m = int(ov.get("m", max(4, _ceil(m_raw))))
    if m < 1:
        raise DomainError("Picard depth m must be >= 1")

    return SamplerPlan(T=T, t_stop=t_stop, h=h, windows=tile(t_stop, h), k=k, D=D, m=m,
                       eps_err=eps_err, eps1=eps1, gamma_const=gamma_const,
                       gamma_phi=gamma_phi, R=R_true, sigma=target.sigma, L_tilde=L, d=d,
                       target=target.with_horizon(T))


def chain_rng(seed: int, chain: int) -> np.random.Generator:
    """Generator of chain ``chain``: PCG64 seeded by SeedSequence(seed, spawn_key=(chain,)).

    Chain c's stream depends only on (seed, c), never on how many chains run.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(chain,))))


def _divergence_bound(plan: SamplerPlan) -> float:
    return 1e6 * (plan.R + math.sqrt(plan.d))


def _check_oracle(plan: SamplerPlan, oracle: ScoreOracle):
    if not math.isclose(oracle.target.T, plan.T, rel_tol=0, abs_tol=1e-12):
        raise DomainError(f"oracle horizon {oracle.target.T} does not match plan horizon {plan.T}")


def solve_flow(plan: SamplerPlan, oracle: ScoreOracle, y0) -> np.ndarray:
    """Collocation solve of the flow ODE from y0 (normalized, shape (d,) or (n, d)) to t_stop."""
    _check_oracle(plan, oracle)
    y = np.array(y0, dtype=float)
    single = y.ndim == 1
    if single:
        y = y[None, :]
    bound = _divergence_bound(plan)
    field_fn = oracle.drift
    for w, (a, b) in enumerate(plan.windows):
        basis = chebyshev.rescale(plan.D, a, b - a)
        state = init_state(y, basis)
        for _ in range(plan.m):
            state = picard_step(state, field_fn, window=w, bound=bound)
        y = state.endpoint
    return y[0] if single else y


def to_output(plan: SamplerPlan, y) -> np.ndarray:
    """Rescale a normalized iterate at t_stop to output coordinates."""
    return np.asarray(y) * math.exp(plan.T - plan.t_stop) * plan.sigma


def _initial(rngs, d):
    return np.stack([g.standard_normal(d) for g in rngs])


def run(plan: SamplerPlan, oracle: ScoreOracle, rng: np.random.Generator,
        corrector: Optional[UlmcConfig] = None) -> np.ndarray:
    """One sample: Gaussian start, windowed collocation, early stop, rescale."""
    y0 = rng.standard_normal(plan.d)
    x = to_output(plan, solve_flow(plan, oracle, y0))
    if corrector is not None:
        x = ulmc_run(plan.target.score_q, x, corrector, rng)
    return x


@dataclass
class RunReport:
    n: int
    evals: int
    wall_ms: float
    plan: dict

    def to_dict(self):
        return {"n": self.n, "evals": self.evals, "wall_ms": self.wall_ms, "plan": self.plan}


def corrector_for(plan: SamplerPlan, eps: float = 0.1, friction_const: float = 1.0,
                  L: Optional[float] = None, **overrides) -> UlmcConfig:
    """Default corrector for a plan: M = number of windows, L = score Lipschitz bound of q.

    ``overrides`` may replace friction, step or steps.
    """
    L = plan.target.lipschitz_q() if L is None else float(L)
    base = corrector_params(eps, plan.d, L, plan.R * plan.sigma, plan.sigma, plan.n_windows,
                            friction_const=friction_const)
    unknown = set(overrides) - {"friction", "step", "steps"}
    if unknown:
        raise DomainError(f"unknown corrector overrides: {sorted(unknown)}")
    kept = {key: val for key, val in overrides.items() if val is not None}
    return replace(base, **kept) if kept else base


def _run_block(plan, oracle, seed, lo, hi, corrector):
    rngs = [chain_rng(seed, c) for c in range(lo, hi)]
    x = to_output(plan, solve_flow(plan, oracle, _initial(rngs, plan.d)))
    if corrector is not None:
        x = ulmc_run(plan.target.score_q, x, corrector, rngs)
    return x


def run_batch(plan: SamplerPlan, oracle: ScoreOracle, n: int, seed: int,
              corrector: Optional[UlmcConfig] = None, block: int = 1024, threads: int = 1):
    """n independent chains; chain c uses :func:`chain_rng` (seed, c).

    Chains are processed in blocks of ``block``, optionally on ``threads`` worker
    threads (0 = one per CPU). Each chain's result depends only on (seed, c), so
    the output is identical for any block size or thread count.

    Returns:
        (samples of shape (n, d), RunReport)
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    if block < 1 or threads < 0:
        raise DomainError("block must be >= 1 and threads >= 0")
    start_count = oracle.eval_counter
    t_start = time.perf_counter()
    out = np.empty((n, plan.d))
    spans = [(lo, min(lo + block, n)) for lo in range(0, n, block)]
    workers = threads or os.cpu_count() or 1
    if workers == 1 or len(spans) == 1:
        for lo, hi in spans:
            out[lo:hi] = _run_block(plan, oracle, seed, lo, hi, corrector)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_block, plan, oracle, seed, lo, hi, corrector)
                       for lo, hi in spans]
            for (lo, hi), fut in zip(spans, futures):
                out[lo:hi] = fut.result()
    report = RunReport(n=n, evals=oracle.eval_counter - start_count,
                       wall_ms=1e3 * (time.perf_counter() - t_start), plan=plan.to_dict())
    return out, report


# -- baselines and reference -------------------------------------------------------

def euler_solve(oracle: ScoreOracle, y0, t0: float, t1: float, n_steps: int,
                bound: Optional[float] = None) -> np.ndarray:
    """Explicit Euler on dy = (y + s_t(y)) dt over a uniform grid; n_steps evaluations per chain."""
    if n_steps < 1:
        raise DomainError("n_steps must be >= 1")
    y = np.array(y0, dtype=float)
    dt = (t1 - t0) / n_steps
    for i in range(n_steps):
        y = y + dt * oracle.drift(t0 + i * dt, y)
        if not np.all(np.isfinite(y)) or (bound is not None and np.max(np.abs(y)) > bound):
            raise DivergenceError("Euler iterate diverged", iteration=i + 1)
    return y


def euler_baseline(plan_or_oracle, n_steps: int, rng: np.random.Generator,
                   oracle: Optional[ScoreOracle] = None) -> np.ndarray:
    """Euler sampler with the same start, stopping time and rescaling as :func:`run`.

    Call as ``euler_baseline(plan, n_steps, rng, oracle)`` or
    ``euler_baseline(oracle, n_steps, rng)`` (plan quantities then derived from the
    oracle's target with sigma_target = 1).
    """
    if isinstance(plan_or_oracle, SamplerPlan):
        p = plan_or_oracle
        T, t_stop, sigma, d = p.T, p.t_stop, p.sigma, p.d
    else:
        oracle = plan_or_oracle
        tgt = oracle.target
        T, sigma, d = tgt.T, tgt.sigma, tgt.d
        t_stop = early_stop_time(tgt.schedule, 1.0)
    y0 = rng.standard_normal(d)
    y = euler_solve(oracle, y0, 0.0, t_stop, n_steps)
    return y * math.exp(T - t_stop) * sigma


def _rk4(target: SmoothedTarget, y, t0, t1, n):
    dt = (t1 - t0) / n
    f = lambda t, x: mixture.drift(target, t, x)  # noqa: E731
    for i in range(n):
        t = t0 + i * dt
        k1 = f(t, y)
        k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
        k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
        k4 = f(t + dt, y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


def reference_solve(target: SmoothedTarget, y0, t0: float, t1: float, tol: float = 1e-10,
                    n_start: int = 16, max_halvings: int = 20) -> np.ndarray:
    """Exact-score RK4 with step halving until successive endpoints differ by <= tol.

    Integrates backwards when t1 < t0. Works on a single point or a batch.
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    y0 = np.asarray(y0, dtype=float)
    if t0 == t1:
        return y0.copy()
    n = n_start
    prev = _rk4(target, y0, t0, t1, n)
    for _ in range(max_halvings):
        n *= 2
        cur = _rk4(target, y0, t0, t1, n)
        if np.max(np.abs(cur - prev)) <= tol:
            return cur
        prev = cur
    raise ConvergenceError(f"reference solve did not reach tol={tol} after {max_halvings} halvings")


def reference_trajectory(target: SmoothedTarget, y0, times, tol: float = 1e-11) -> np.ndarray:
    """Reference solution at each of ``times`` (ascending, starting at the time of y0).

    Returns an array of shape (len(times),) + y0.shape.
    """
    times = np.asarray(times, dtype=float)
    y = np.asarray(y0, dtype=float)
    out = [y]
    for a, b in zip(times[:-1], times[1:]):
        y = reference_solve(target, y, a, b, tol=tol, n_start=2)
        out.append(y)
    return np.stack(out)
