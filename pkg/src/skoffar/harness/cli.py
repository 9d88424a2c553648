"""Command-line entry point: ``skoffar {run,sweep,compare,check,probe-embedding}``.

Exit codes: 0 success, 1 run failure, 2 acceptance failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..baselines import METHODS as BASELINE_METHODS
from ..baselines import BaselineConfig, run_baseline
from ..problems import DEFAULT_NHAT, REGISTRY, UnknownProblemError, embed, make_problem
from ..sketch import estimate_true_probability, kappa_bound, operator_norm, sample
from ..solver import SolverConfig, SolverError, run
from .config import ConfigError, ExperimentConfig, ProblemSpec, load_config
from .experiment import emit_trace_plot_data, run_experiment

EXIT_OK, EXIT_RUN_FAILURE, EXIT_ACCEPTANCE_FAILURE = 0, 1, 2
FULL_SCALE_FACTOR = 1000
DESK_FACTOR = 100


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _dimension(args) -> tuple[int, int]:
    n_hat = args.nhat if args.nhat is not None else DEFAULT_NHAT[args.problem]
    if args.n is not None:
        return n_hat, args.n
    return n_hat, (FULL_SCALE_FACTOR if args.full_scale else DESK_FACTOR) * n_hat


def _add_problem_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--problem", required=True, choices=sorted(REGISTRY))
    p.add_argument("--nhat", type=int, help="base dimension (problem default if omitted)")
    p.add_argument("--n", type=int, help="embedded dimension (default 100 n_hat)")
    p.add_argument("--full-scale", action="store_true", help="embed to n = 1000 n_hat")
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--max-iter", type=int)


def cmd_run(args) -> int:
    n_hat, n = _dimension(args)
    problem = embed(make_problem(args.problem, n_hat), n)
    try:
        if args.variant in BASELINE_METHODS:
            cfg = BaselineConfig(method=args.variant, eps_stop=args.eps, seed=args.seed,
                                 **({"max_iter": args.max_iter} if args.max_iter else {}))
            trace = run_baseline(problem, cfg, diagnostics=args.diagnostics)
        else:
            cfg = SolverConfig(p=args.p, tau=args.tau, eps=args.eps, seed=args.seed,
                               max_iter=args.max_iter, variant=args.variant,
                               nu0=args.nu0, b_mode=args.b_mode)
            trace = run(problem, cfg, diagnostics=args.diagnostics)
    except SolverError as exc:
        _err(f"run failed ({exc.reason}): {exc}")
        if exc.trace is not None and args.out:
            exc.trace.write_csv(args.out)
        return EXIT_RUN_FAILURE
    if args.out:
        trace.write_csv(args.out)
        if args.plot_data:
            emit_trace_plot_data(trace, path=args.plot_data)
    else:
        sys.stdout.write(trace.to_csv())
    _err(f"{trace.solver} on {problem.name} (n={n}, l={trace.ell}): "
         f"{trace.termination_reason} after {trace.iterations} iterations, "
         f"||g|| = {trace.final.gnorm:.3e}")
    return EXIT_OK if trace.termination_reason == "converged" else EXIT_RUN_FAILURE


def _write_results(result, out, include_runtime) -> None:
    text = result.to_csv(include_runtime)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _report_failures(result) -> None:
    for c in result.cells:
        if c.reason not in ("converged", "max_iter"):
            _err(f"cell {c.cell}: {c.reason} {c.message}")


def cmd_sweep(args) -> int:
    try:
        config = load_config(args.config)
    except (OSError, ConfigError) as exc:
        _err(f"bad config: {exc}")
        return EXIT_RUN_FAILURE
    if args.full_scale:
        config = replace(config, problems=[
            ProblemSpec(p.name, p.n_hat, FULL_SCALE_FACTOR * p.n_hat) for p in config.problems])
    if args.workers:
        config = replace(config, workers=args.workers)
    result = run_experiment(config, keep_traces=bool(args.traces))
    if args.traces:
        tdir = Path(args.traces)
        tdir.mkdir(parents=True, exist_ok=True)
        for cell, trace in sorted(result.traces.items()):
            stem = f"{cell.problem}_n{cell.n}_{cell.solver}_tau{cell.tau}_seed{cell.seed}"
            trace.write_csv(tdir / f"{stem}.csv")
            if config.diagnostics:
                emit_trace_plot_data(trace, path=tdir / f"{stem}_plot.csv")
    _write_results(result, args.out or config.out, args.runtime)
    _report_failures(result)
    return EXIT_OK


def cmd_compare(args) -> int:
    n_hat, n = _dimension(args)
    try:
        config = ExperimentConfig(
            problems=[ProblemSpec(args.problem, n_hat, n)],
            taus=args.tau,
            solvers=args.solvers,
            seeds=list(range(args.seed, args.seed + args.seeds)),
            eps=args.eps,
            max_iter=args.max_iter,
            workers=args.workers,
        )
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_RUN_FAILURE
    result = run_experiment(config)
    _write_results(result, args.out, args.runtime)
    _report_failures(result)
    return EXIT_OK


def cmd_check(args) -> int:
    from .acceptance import acceptance_suite

    only = [int(x) for x in args.only.split(",")] if args.only else None
    results = acceptance_suite(seeds=args.seeds, only=only, echo=print)
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return EXIT_ACCEPTANCE_FAILURE if failed else EXIT_OK


def cmd_probe(args) -> int:
    rng = np.random.default_rng(args.seed)
    M = rng.standard_normal((args.n, args.rank))
    est = estimate_true_probability(args.ell, args.n, M, args.alpha, trials=args.trials,
                                    seed=args.seed, workers=args.workers)
    beta = kappa_bound(args.ell, args.n)
    norms = [operator_norm(sample(args.ell, args.n, rng).S) for _ in range(args.norm_samples)]
    within = sum(v <= beta for v in norms)
    print(f"embedding probability: {est.estimate:.4f} "
          f"[{est.low:.4f}, {est.high:.4f}] ({est.successes}/{est.trials})")
    print(f"rank condition: rank(M) = {est.rank} < l(1 - alpha) = {est.rank_bound:.2f}: "
          f"{est.rank_condition}")
    print(f"norm bound {beta:.4f} held in {within}/{len(norms)} samples")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skoffar", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="single run, trace CSV")
    _add_problem_args(p)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--p", type=int, default=2, choices=(1, 2))
    p.add_argument("--variant", default="skoffar_p",
                   choices=("skoffar_p", "skoffar_2b") + BASELINE_METHODS)
    p.add_argument("--b-mode", default="gauss-newton", choices=("zero", "gauss-newton"))
    p.add_argument("--nu0", type=float, default=SolverConfig.nu0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--diagnostics", action="store_true",
                   help="evaluate f(x_k) for the trace (never used by the solver)")
    p.add_argument("--out", help="trace CSV path (stdout if omitted)")
    p.add_argument("--plot-data", help="also write (cum_w1, f) plot data; needs --diagnostics")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="config file -> results CSV")
    p.add_argument("config")
    p.add_argument("--out")
    p.add_argument("--workers", type=int)
    p.add_argument("--full-scale", action="store_true")
    p.add_argument("--traces", help="directory for per-run trace CSVs")
    p.add_argument("--runtime", action="store_true",
                   help="add a wall-clock column (breaks byte-identical output)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="solvers side by side on one problem")
    _add_problem_args(p)
    p.add_argument("--tau", type=float, nargs="+", default=[1.0, 0.1, 0.01])
    p.add_argument("--solvers", nargs="+", default=["skoffar2", "adagrad_norm", "adam_norm"])
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--seeds", type=int, default=10, help="number of seeds")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.add_argument("--runtime", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("check", help="acceptance suite")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--only", help="comma-separated criterion numbers")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("probe-embedding", help="Monte-Carlo sketch estimators")
    p.add_argument("--ell", type=int, default=20)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--rank", type=int, default=1)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--norm-samples", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_probe)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UnknownProblemError, ValueError) as exc:
        _err(f"error: {exc}")
        return EXIT_RUN_FAILURE


if __name__ == "__main__":
    sys.exit(main())
