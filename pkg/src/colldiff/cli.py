"""Command-line front end: ``colldiff {sample,benchmark,diagnose,basis-info}``.

Exit codes: 0 ok, 2 configuration error, 3 numerical divergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, chebyshev, diagnostics, metrics, sampler
from .config import (ExperimentConfig, format_config, parse_config, parse_config_text,
                     with_corrector, with_run)
from .errors import ConfigError, ConvergenceError, DivergenceError, DomainError
from .oracle import exact_oracle, noisy_oracle

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_IO = 0, 2, 3, 4

BENCHMARK_COLUMNS = ("method", "eps_err", "evals", "sliced_w2", "energy_dist", "ks", "wall_ms")
ENDPOINT_COLUMNS = ("method", "eps_err", "evals_per_chain", "median_error", "max_error")

# auxiliary random streams use two-word spawn keys, disjoint from the per-chain (c,) keys
_AUX = 2**63


def aux_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(_AUX, stream))))


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


def write_samples(path: Path, x: np.ndarray) -> None:
    write_csv(path, [f"x{i + 1}" for i in range(x.shape[1])], x.tolist())


def read_samples(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


# -- orchestration helpers -----------------------------------------------------------

def build_plan(cfg: ExperimentConfig, eps_err=None):
    target = cfg.build_target()
    eps = cfg.sampler.eps_err if eps_err is None else eps_err
    return sampler.plan(target, eps, cfg.sampler.eps1, overrides=cfg.sampler.overrides())


def build_oracle(cfg: ExperimentConfig, plan):
    if cfg.sampler.oracle == "noisy":
        return noisy_oracle(plan.target, plan.eps_err, cfg.sampler.noise_features,
                            cfg.sampler.noise_seed)
    return exact_oracle(plan.target)


def build_corrector(cfg: ExperimentConfig, plan):
    c = cfg.corrector
    if not c.enabled:
        return None
    return sampler.corrector_for(plan, eps=c.eps, friction_const=c.friction_const,
                                 friction=c.friction, step=c.step, steps=c.steps)


def _prepare_out(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.run.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved.ini").write_text(format_config(cfg))
    return out


# -- subcommands ---------------------------------------------------------------------

def cmd_sample(cfg: ExperimentConfig) -> dict:
    """samples.csv (n rows, header x1..xd) and report.json in the output directory."""
    plan = build_plan(cfg)
    oracle = build_oracle(cfg, plan)
    corr = build_corrector(cfg, plan)
    print(json.dumps(plan.to_dict()))
    out = _prepare_out(cfg)
    x, rep = sampler.run_batch(plan, oracle, cfg.run.n_samples, cfg.run.seed, corrector=corr,
                               block=cfg.run.block, threads=cfg.run.threads)
    write_samples(out / "samples.csv", x)
    plan_echo = plan.to_dict()
    if corr is not None:
        plan_echo["corrector"] = corr.to_dict()
    report = {"plan": plan_echo, "evals": rep.evals, "wall_ms": rep.wall_ms,
              "seed": cfg.run.seed, "version": __version__}
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    return report


def _distances(x, ref, seed, stream, n_dirs):
    sw = metrics.sliced_w2(x, ref, n_dirs, aux_rng(seed, stream))
    return sw, metrics.energy_distance(x, ref), metrics.ks_per_coordinate(x, ref)


def _euler_samples(plan, oracle, n, seed, n_steps):
    rngs = [sampler.chain_rng(seed, c) for c in range(n)]
    y0 = np.stack([g.standard_normal(plan.d) for g in rngs])
    y = sampler.euler_solve(oracle, y0, 0.0, plan.t_stop, n_steps)
    return sampler.to_output(plan, y)


def endpoint_errors(plan, oracle, starts, reference, method="collocation", n_steps=None):
    """Per-start |y(t_stop) - reference| in normalized coordinates."""
    if method == "collocation":
        y = sampler.solve_flow(plan, oracle, starts)
    else:
        y = sampler.euler_solve(oracle, starts, 0.0, plan.t_stop, n_steps)
    return np.linalg.norm(y - reference, axis=1)


def reference_endpoints(plan, starts, tol=1e-10):
    return sampler.reference_solve(plan.target, starts, 0.0, plan.t_stop, tol=tol, n_start=256)


def cmd_benchmark(cfg: ExperimentConfig) -> tuple[list, list]:
    """benchmark.csv (distances to direct draws) and endpoint_errors.csv."""
    b = cfg.benchmark
    seed = cfg.run.seed
    out = _prepare_out(cfg)
    target = cfg.build_target()
    ref = target.sample(b.n_reference, aux_rng(seed, 0))
    rows, erows = [], []
    for i, eps in enumerate(b.eps_err_list):
        plan = build_plan(cfg, eps)
        oracle = build_oracle(cfg, plan)
        x, rep = sampler.run_batch(plan, oracle, b.n_samples, seed, block=cfg.run.block,
                                   threads=cfg.run.threads)
        rows.append(("collocation", eps, rep.evals) + _distances(x, ref, seed, 1, b.n_dirs)
                    + (rep.wall_ms,))
        starts = np.stack([sampler.chain_rng(seed, c).standard_normal(plan.d)
                           for c in range(b.n_starts)])
        truth = reference_endpoints(plan, starts)
        err = endpoint_errors(plan, oracle, starts, truth)
        erows.append(("collocation", eps, plan.evals_per_chain, float(np.median(err)),
                      float(np.max(err))))
        for n_steps in b.euler_steps:
            t0 = time.perf_counter()
            before = oracle.eval_counter
            xe = _euler_samples(plan, oracle, b.n_samples, seed, n_steps)
            evals = oracle.eval_counter - before
            rows.append(("euler", eps, evals) + _distances(xe, ref, seed, 1, b.n_dirs)
                        + (1e3 * (time.perf_counter() - t0),))
            err = endpoint_errors(plan, oracle, starts, truth, "euler", n_steps)
            erows.append(("euler", eps, n_steps, float(np.median(err)), float(np.max(err))))
    write_csv(out / "benchmark.csv", BENCHMARK_COLUMNS, rows)
    write_csv(out / "endpoint_errors.csv", ENDPOINT_COLUMNS, erows)
    return rows, erows


LOWDEGREE_COLUMNS = ("window", "t0", "t1", "k", "sup_error", "precision")
SMOOTHNESS_COLUMNS = ("t", "T_minus_t", "max_norm", "bound", "fd_budget", "passed")
COUPLING_COLUMNS = ("t", "delta", "eps1", "bound", "trials", "skipped", "violations", "max_tv")
CONTRACTION_COLUMNS = ("window", "t0", "h", "bound", "max_ratio", "passed", "pairs")
DERIVATIVE_COLUMNS = ("t", "order", "fd_step", "inf_norm", "cancellation")


def _probe_windows(plan):
    n = plan.n_windows
    return sorted({0, n // 2, n - 1})


def cmd_diagnose(cfg: ExperimentConfig) -> dict:
    """lowdegree / smoothness / coupling / contraction / derivatives CSVs."""
    g = cfg.diagnose
    seed = cfg.run.seed
    out = _prepare_out(cfg)
    plan = build_plan(cfg)
    target = plan.target
    T = target.T
    y0 = sampler.chain_rng(seed, 0).standard_normal(plan.d)
    windows = _probe_windows(plan)

    # trajectory states at the probed window starts
    times = sorted({0.0} | {float(plan.windows[w][0]) for w in windows})
    traj = sampler.reference_trajectory(target, y0, times)
    state_at = {w: traj[times.index(float(plan.windows[w][0]))] for w in windows}
    low = []
    for w in windows:
        prof = diagnostics.lowdegree_profile(target, state_at[w], tuple(plan.windows[w]),
                                             g.k_list, grid=g.grid, precision=g.precision)
        low.extend((w, r["t0"], r["t1"], r["k"], r["sup_error"], g.precision)
                   for r in prof.rows())
    write_csv(out / "lowdegree.csv", LOWDEGREE_COLUMNS, low)

    smooth, coup = [], []
    for j, off in enumerate(g.offsets):
        t = T - off
        if t < 0:
            continue
        res = diagnostics.smoothness_check(target, t, g.n_points, aux_rng(seed, 10 + j))
        smooth.append((t, off, res.max_norm, res.bound, res.fd_budget, res.passed))
        delta = 1.0 / (6.0 * diagnostics.coupling_radius(plan.d, plan.eps1))
        c = diagnostics.coupling_check(target, t, delta, plan.eps1, g.n_trials,
                                       aux_rng(seed, 20 + j))
        coup.append((t, c.delta, c.eps1, c.bound, c.trials, c.skipped, c.violations, c.max_tv))
    write_csv(out / "smoothness.csv", SMOOTHNESS_COLUMNS, smooth)
    write_csv(out / "coupling.csv", COUPLING_COLUMNS, coup)

    oracle = exact_oracle(target)
    contr = []
    for w in windows:
        a, b = plan.windows[w]
        basis = chebyshev.rescale(plan.D, float(a), float(b - a))
        res = diagnostics.contraction_check(oracle, basis, state_at[w], g.n_pairs,
                                            aux_rng(seed, 30 + w), lipschitz=plan.L_tilde)
        contr.append((w, a, b - a, res.bound, res.max_ratio, res.passed, res.pairs_used))
    write_csv(out / "contraction.csv", CONTRACTION_COLUMNS, contr)

    der = []
    for w in windows:
        t = float(plan.windows[w][0])
        for order in g.orders:
            reach = 2 * g.fd_step
            if t - reach < 0:
                t_probe = reach
                y_probe = sampler.reference_solve(target, y0, 0.0, t_probe, tol=1e-12)
            else:
                t_probe, y_probe = t, state_at[w]
            p = diagnostics.drift_time_derivative(target, y_probe, t_probe, order, g.fd_step)
            der.append((t_probe, order, g.fd_step, p.inf_norm, p.cancellation))
    write_csv(out / "derivatives.csv", DERIVATIVE_COLUMNS, der)
    return {"lowdegree": low, "smoothness": smooth, "coupling": coup, "contraction": contr,
            "derivatives": der}


def cmd_basis_info(D: int, t0: float = 0.0, h: float = 1.0, stream=None) -> str:
    """CSV with columns kind,i,j,value: nodes, quadrature weights, gamma and the matrix A."""
    basis = chebyshev.rescale(D, t0, h)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("kind", "i", "j", "value"))
    for i, c in enumerate(basis.nodes):
        w.writerow(("node", i, "", _fmt(c)))
    for i, c in enumerate(basis.weights):
        w.writerow(("weight", i, "", _fmt(c)))
    w.writerow(("gamma", "", "", _fmt(basis.gamma)))
    for i in range(D):
        for j in range(D):
            w.writerow(("A", i, j, _fmt(basis.A[i, j])))
    text = buf.getvalue()
    (stream or sys.stdout).write(text)
    return text


# -- entry point ---------------------------------------------------------------------

def _u64(text: str) -> int:
    val = int(text, 0)
    if not 0 <= val < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return val


def _onoff(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return text == "on"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="colldiff", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("sample", "benchmark", "diagnose"):
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, default=None)
        s.add_argument("--seed", type=_u64, default=None)
        s.add_argument("--out", type=str, default=None)
        s.add_argument("--threads", type=int, default=None)
        s.add_argument("--corrector", type=_onoff, default=None)
    s = sub.add_parser("basis-info")
    s.add_argument("--config", type=Path, default=None)
    s.add_argument("--degree", type=int, default=None, help="node count D (default: plan's D)")
    s.add_argument("--start", type=float, default=0.0)
    s.add_argument("--length", type=float, default=1.0)
    return p


def load(args) -> ExperimentConfig:
    cfg = parse_config(args.config) if args.config is not None else parse_config_text("")
    if hasattr(args, "seed"):
        if args.threads is not None and args.threads < 0:
            raise ConfigError("threads must be >= 0", field="threads")
        cfg = with_run(cfg, seed=args.seed, out=args.out, threads=args.threads)
        cfg = with_corrector(cfg, args.corrector)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load(args)
        if args.command == "sample":
            cmd_sample(cfg)
        elif args.command == "benchmark":
            cmd_benchmark(cfg)
        elif args.command == "diagnose":
            cmd_diagnose(cfg)
        else:
            D = args.degree if args.degree is not None else build_plan(cfg).D
            if D < 1 or not args.length > 0:
                raise ConfigError("degree must be >= 1 and length positive", field="degree")
            cmd_basis_info(D, args.start, args.length)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, ConvergenceError) as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
