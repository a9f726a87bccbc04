"""Endpoint error of collocation vs cost, and the Euler budget needed to match it.

For each eps_err the noisy oracle at that level drives the planned collocation
solve; errors are medians over starts against the step-halving RK4 reference.
Euler runs on exact scores; its first-order constant is fitted on two budgets.

    python scripts/scaling_sweep.py [--starts 100] [--eps 1e-2 1e-4 1e-6]
"""

import argparse
import math
import time

import numpy as np

from colldiff import oracle, sampler
from colldiff.config import PRESETS
from colldiff.mixture import AtomicPrior, SmoothedTarget


def median_err(a, b):
    return float(np.median(np.linalg.norm(a - b, axis=1)))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="acceptance_gmm", choices=sorted(PRESETS))
    ap.add_argument("--starts", type=int, default=100)
    ap.add_argument("--eps", type=float, nargs="+", default=[1e-2, 1e-4, 1e-6])
    ap.add_argument("--gamma", type=float, default=None)
    ap.add_argument("--seed", type=int, default=10)
    args = ap.parse_args()
    atoms, weights = PRESETS[args.preset]
    tgt = SmoothedTarget(AtomicPrior(atoms, weights), 1.0)
    ov = {"gamma_const": args.gamma} if args.gamma is not None else None
    d = tgt.d
    y0 = np.stack([sampler.chain_rng(args.seed, c).standard_normal(d) for c in range(args.starts)])
    print("eps_err,evals_per_chain,median_noisy,median_exact,euler_C,euler_match_evals,wall_s")
    for eps in args.eps:
        t0 = time.perf_counter()
        p = sampler.plan(tgt, eps, 0.1, ov)
        ref = sampler.reference_solve(p.target, y0, 0.0, p.t_stop, tol=1e-10, n_start=256)
        noisy = median_err(sampler.solve_flow(p, oracle.noisy_oracle(p.target, eps), y0), ref)
        ex = oracle.exact_oracle(p.target)
        exact = median_err(sampler.solve_flow(p, ex, y0), ref)
        n = 10_000
        C = median_err(sampler.euler_solve(ex, y0, 0.0, p.t_stop, n), ref) * n
        print(f"{eps:g},{p.evals_per_chain},{noisy:.4e},{exact:.4e},{C:.4f},"
              f"{math.ceil(C / noisy)},{time.perf_counter() - t0:.1f}", flush=True)


if __name__ == "__main__":
    main()
