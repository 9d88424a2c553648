"""Multi-seed sweeps over (problem, solver, tau, seed) cells."""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from itertools import groupby
from pathlib import Path

from ..baselines import METHODS as BASELINE_METHODS
from ..baselines import BaselineConfig, run_baseline
from ..problems import embed, make_problem
from ..solver import SolverConfig, SolverError, check_invariants, run
from ..trace import RunTrace
from .config import ExperimentConfig

BASELINE_BUDGET = 100_000


@dataclass(frozen=True, order=True)
class Cell:
    problem: str
    n_hat: int
    n: int
    solver: str
    tau: float
    seed: int


@dataclass
class CellResult:
    cell: Cell
    hitting_time: int | None
    iterations: int
    w1_per_iter: float
    w2_per_iter: float
    reason: str
    f_calls: int
    invariants_ok: bool | None
    runtime: float
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.hitting_time is not None


@dataclass
class ResultRow:
    problem: str
    n: int
    solver: str
    tau: float
    mean_w1: float | None
    mean_w2: float | None
    success: float
    mean_n1: float | None
    runs: int
    runtime: float


def solver_config(name: str, tau: float, seed: int, eps: float, max_iter: int | None,
                  **options) -> SolverConfig:
    if name == "skoffar2b":
        return SolverConfig(variant="skoffar_2b", tau=tau, seed=seed, eps=eps,
                            max_iter=max_iter, **options)
    p = {"skoffar1": 1, "skoffar2": 2}[name]
    options = {k: v for k, v in options.items() if k != "b_mode"}
    return SolverConfig(p=p, tau=tau, seed=seed, eps=eps, max_iter=max_iter, **options)


def cells_for(config: ExperimentConfig) -> list[Cell]:
    """Canonically sorted cells.

    Baselines neither sketch nor draw random numbers, so they get one cell
    per problem (tau = 1, first seed).
    """
    out = set()
    for ps in config.problems:
        for solver in config.solvers:
            base = solver in BASELINE_METHODS
            for tau in [1.0] if base else config.taus:
                for seed in config.seeds[:1] if base else config.seeds:
                    out.add(Cell(ps.name, ps.n_hat, ps.n, solver, float(tau), int(seed)))
    return sorted(out)


def execute_cell(cell: Cell, eps: float, max_iter: int | None, diagnostics: bool = False,
                 options: dict | None = None) -> tuple[CellResult, RunTrace | None]:
    """Run one cell; failures are captured in the result instead of raised."""
    problem = embed(make_problem(cell.problem, cell.n_hat), cell.n)
    t0 = time.perf_counter()
    trace = None
    message = ""
    try:
        if cell.solver in BASELINE_METHODS:
            cfg = BaselineConfig(method=cell.solver, eps_stop=eps, seed=cell.seed,
                                 max_iter=BASELINE_BUDGET if max_iter is None else max_iter)
            trace = run_baseline(problem, cfg, diagnostics=diagnostics)
        else:
            cfg = solver_config(cell.solver, cell.tau, cell.seed, eps, max_iter,
                                **(options or {}))
            trace = run(problem, cfg, diagnostics=diagnostics)
        reason = trace.termination_reason
    except SolverError as exc:
        trace, reason, message = exc.trace, exc.reason, str(exc)
    except (ValueError, ArithmeticError) as exc:
        reason, message = "error", f"{type(exc).__name__}: {exc}"
    runtime = time.perf_counter() - t0
    if trace is None:
        return CellResult(cell, None, 0, math.nan, math.nan, reason, problem.f_calls, None,
                          runtime, message), None
    inv = None if cell.solver in BASELINE_METHODS else check_invariants(trace).ok
    result = CellResult(
        cell=cell,
        hitting_time=trace.hitting_time if reason == "converged" else None,
        iterations=trace.iterations,
        w1_per_iter=trace.w1_per_iter,
        w2_per_iter=trace.w2_per_iter,
        reason=reason,
        f_calls=problem.f_calls,
        invariants_ok=inv,
        runtime=runtime,
        message=message,
    )
    return result, trace


def _execute(args):
    cell, eps, max_iter, diagnostics, options, keep = args
    result, trace = execute_cell(cell, eps, max_iter, diagnostics, options)
    return result, (trace if keep else None)


@dataclass
class ExperimentResult:
    cells: list[CellResult]
    rows: list[ResultRow]
    traces: dict[Cell, RunTrace]

    def to_csv(self, include_runtime: bool = False) -> str:
        return results_csv(self.rows, include_runtime)

    def write(self, path, include_runtime: bool = False) -> None:
        Path(path).write_text(self.to_csv(include_runtime))


def run_experiment(config: ExperimentConfig, keep_traces: bool = False) -> ExperimentResult:
    cells = cells_for(config)
    jobs = [(c, config.eps, config.max_iter, config.diagnostics, config.solver_options,
             keep_traces) for c in cells]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            outputs = list(pool.map(_execute, jobs))
    else:
        outputs = [_execute(j) for j in jobs]
    results = [r for r, _ in outputs]
    traces = {r.cell: t for r, t in outputs if t is not None}
    return ExperimentResult(results, aggregate(results), traces)


def _mean(xs):
    return math.fsum(xs) / len(xs) if xs else None


def aggregate(results: list[CellResult]) -> list[ResultRow]:
    """One row per (problem, n, solver, tau), costs averaged over converged seeds."""
    def key(r):
        c = r.cell
        return (c.problem, c.n, c.solver, c.tau)

    rows = []
    for (problem, n, solver, tau), group in groupby(sorted(results, key=key), key=key):
        group = list(group)
        ok = [r for r in group if r.converged]
        rows.append(ResultRow(
            problem=problem,
            n=n,
            solver=solver,
            tau=tau,
            mean_w1=_mean([r.hitting_time * r.w1_per_iter for r in ok]),
            mean_w2=_mean([r.hitting_time * r.w2_per_iter for r in ok]),
            success=len(ok) / len(group),
            mean_n1=_mean([float(r.hitting_time) for r in ok]),
            runs=len(group),
            runtime=math.fsum(r.runtime for r in group),
        ))
    return rows


RESULT_COLUMNS = ("problem", "n", "solver", "tau", "mean_w1", "mean_w2", "success",
                  "mean_n1", "runs")


def _cell(v) -> str:
    if v is None:
        return ">max_iter"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def results_csv(rows: list[ResultRow], include_runtime: bool = False) -> str:
    """Results table; wall-clock runtime is opt-in because it is not reproducible."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS + (("runtime",) if include_runtime else ()))
    for r in rows:
        vals = [r.problem, r.n, r.solver, r.tau, r.mean_w1, r.mean_w2, r.success, r.mean_n1,
                r.runs]
        if include_runtime:
            vals.append(f"{r.runtime:.3f}")
        w.writerow([_cell(v) for v in vals])
    return buf.getvalue()


def emit_trace_plot_data(trace: RunTrace, tau: float | None = None, n: int | None = None,
                         path=None) -> str:
    """Two-column CSV (cumulative w1 cost, diagnostic f) for external plotting."""
    recs = trace.all_records()
    if any(r.f_diag is None for r in recs):
        raise ValueError("trace has no diagnostic objective values; rerun with diagnostics")
    if tau is not None and n is not None and trace.solver.startswith("skoffar"):
        from ..costs import iteration_weights

        w = iteration_weights(tau, n, trace.solver != "skoffar1")[0]
        if not math.isclose(w, trace.w1_per_iter, rel_tol=1e-12):
            raise ValueError("tau and n do not match the trace's cost weight")
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(("cum_w1", "f"))
    for r in recs:
        wr.writerow((repr(float(r.cum_w1)), repr(float(r.f_diag))))
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def with_seeds(config: ExperimentConfig, seeds) -> ExperimentConfig:
    return replace(config, seeds=list(seeds))
