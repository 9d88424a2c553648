"""Norm-wise first-order OFFO baselines: ADAGRAD-Norm and ADAM-Norm.

Both use one scalar step size per iteration built from gradient norms only,
and never evaluate the objective.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .problems import ProblemInstance
from .solver import NonFiniteError, SolverError
from .trace import IterationRecord, RunTrace

METHODS = ("adagrad_norm", "adam_norm")


@dataclass
class BaselineConfig:
    method: str = "adagrad_norm"
    eta: float = 1.0
    b0: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.9999
    eps_stop: float = 1e-3
    max_iter: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.eta <= 0 or self.b0 < 0:
            raise ValueError("need eta > 0 and b0 >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("moment discounts must lie in [0, 1)")


def _new_trace(problem: ProblemInstance, config: BaselineConfig) -> RunTrace:
    return RunTrace(
        solver=config.method,
        problem=problem.name,
        n=problem.n,
        ell=problem.n,
        tau=1.0,
        eps=config.eps_stop,
        p=1,
        w1_per_iter=1.0,
        w2_per_iter=1.0 / (1.0 + problem.n),
        seed=config.seed,
        variant=config.method,
        params=asdict(config),
    )


def _loop(problem, config, direction, diagnostics):
    oracle = problem.derivatives()
    trace = _new_trace(problem, config)
    fdiag = problem.diagnostic_f if diagnostics else None
    x = oracle.x0.copy()
    k = 0
    try:
        while True:
            g = oracle.grad(x)
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"non-finite gradient at iteration {k}")
            gnorm = float(np.linalg.norm(g))
            rec = IterationRecord(k=k, gnorm=gnorm, cum_w1=float(k),
                                  cum_w2=k * trace.w2_per_iter)
            if fdiag is not None:
                rec.f_diag = fdiag(x)
            if gnorm <= config.eps_stop or k >= config.max_iter:
                trace.final = rec
                trace.termination_reason = "converged" if gnorm <= config.eps_stop else "max_iter"
                break
            s = direction(k, g, gnorm)
            rec.snorm = float(np.linalg.norm(s))
            trace.records.append(rec)
            x = x + s
            k += 1
    except SolverError as exc:
        trace.termination_reason = exc.reason
        exc.trace = trace
        raise
    trace.x_final = x
    return trace


def adagrad_norm_run(problem: ProblemInstance, config: BaselineConfig,
                     diagnostics: bool = False) -> RunTrace:
    """b_{k+1}^2 = b_k^2 + ||g_k||^2,  x_{k+1} = x_k - eta g_k / b_{k+1}."""
    b2 = config.b0**2
    accum = []

    def direction(k, g, gnorm):
        nonlocal b2
        b2 = b2 + gnorm**2
        accum.append(np.sqrt(b2))
        return -config.eta * g / np.sqrt(b2)

    trace = _loop(problem, config, direction, diagnostics)
    for rec, b in zip(trace.records, accum):
        rec.accumulator = float(b)
    return trace


def adam_norm_run(problem: ProblemInstance, config: BaselineConfig,
                  diagnostics: bool = False) -> RunTrace:
    """ADAM with a scalar second moment built from ||g_k||^2, bias corrected."""
    b1, b2 = config.beta1, config.beta2
    m = None
    v = 0.0

    def direction(k, g, gnorm):
        nonlocal m, v
        m = (1 - b1) * g if m is None else b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * gnorm**2
        m_hat = m / (1 - b1 ** (k + 1))
        v_hat = v / (1 - b2 ** (k + 1))
        return -config.eta * m_hat / np.sqrt(v_hat + 1e-12)

    return _loop(problem, config, direction, diagnostics)


def run_baseline(problem: ProblemInstance, config: BaselineConfig,
                 diagnostics: bool = False) -> RunTrace:
    if config.method == "adagrad_norm":
        return adagrad_norm_run(problem, config, diagnostics)
    return adam_norm_run(problem, config, diagnostics)
