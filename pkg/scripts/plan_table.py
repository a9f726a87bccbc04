"""Print resolved plans (horizon, windows, degree, depth, cost) over a grid of eps_err.

    python scripts/plan_table.py [--preset acceptance_gmm] [--gamma 0.25]
"""

import argparse

from colldiff import sampler
from colldiff.config import PRESETS
from colldiff.mixture import AtomicPrior, SmoothedTarget


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="acceptance_gmm", choices=sorted(PRESETS))
    ap.add_argument("--gamma", type=float, default=None, help="gamma_const override")
    ap.add_argument("--eps1", type=float, default=0.1)
    args = ap.parse_args()
    atoms, weights = PRESETS[args.preset]
    tgt = SmoothedTarget(AtomicPrior(atoms, weights), 1.0)
    ov = {"gamma_const": args.gamma} if args.gamma is not None else None
    print(f"{'eps_err':>8} {'T':>7} {'h':>9} {'windows':>8} {'k':>3} {'D':>3} {'m':>3} "
          f"{'contr':>6} {'evals/chain':>12}")
    for e in range(1, 9):
        p = sampler.plan(tgt, 10.0**-e, args.eps1, ov)
        print(f"{p.eps_err:8.0e} {p.T:7.3f} {p.h:9.3e} {p.n_windows:8d} {p.k:3d} {p.D:3d} "
              f"{p.m:3d} {p.contraction:6.3f} {p.evals_per_chain:12d}")


if __name__ == "__main__":
    main()
