"""Acceptance suite: numbered pass/fail checks over desk-scale runs.

Expensive runs are shared: the multi-seed desk sweep feeds the convergence,
trend, certification and invariant checks, so each run happens once.
"""

from __future__ import annotations

import math
import statistics
import tempfile
import time
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np

from ..baselines import BaselineConfig, run_baseline
from ..problems import linear_least_squares, make_embedded, make_problem
from ..sketch import estimate_true_probability, kappa_bound, operator_norm, sample
from ..solver import SolverConfig, SolverError, check_invariants, check_step_bound, run
from ..subproblem import SketchedModel, cubic_reg_exact, solve_2b, solve_p1, verify_conditions
from ..trace import RunTrace
from .reference import reference_full_space

DESK_PROBLEMS = ("rosenbr", "arwhead", "broyden3d", "tridia", "dixmaana")
DESK_TAUS = (1.0, 0.1, 0.05, 0.01)
CONVERGENCE_TAUS = (1.0, 0.1, 0.05)
TREND_TAUS = (1.0, 0.1, 0.01)


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    runtime: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.number:2d} {self.title}: {self.detail} ({self.runtime:.1f}s)"


@dataclass
class Certification:
    """Conditions recomputed from the live model at every iteration."""

    iterations: int = 0
    descent_fail: int = 0
    gradstep_fail: int = 0
    mismatch: int = 0

    def __call__(self, state, model, solution, theta):
        chk = verify_conditions(model, solution.shat, theta)
        self.iterations += 1
        self.descent_fail += not chk.cond_descent
        self.gradstep_fail += not chk.cond_gradstep
        s_direct = model.S.T @ solution.shat
        if not (np.array_equal(s_direct, solution.s) and chk.lhs == solution.gradstep_lhs
                and chk.rhs == solution.gradstep_rhs):
            self.mismatch += 1

    @property
    def ok(self) -> bool:
        return self.iterations > 0 and not (self.descent_fail or self.gradstep_fail
                                            or self.mismatch)


@dataclass
class RunRecord:
    trace: RunTrace | None
    f_calls: int
    failure: str = ""


class Suite:
    """Lazily computed shared runs; ``seeds`` scales every multi-seed check."""

    def __init__(self, seeds: int = 10):
        self.seeds = seeds
        self.cert = Certification()
        self.all_traces: list[RunTrace] = []
        self._desk: dict[tuple[str, float, int], RunRecord] = {}

    def _run(self, problem, config: SolverConfig) -> RunRecord:
        problem.reset_f_calls()
        try:
            trace = run(problem, config, callback=self.cert)
            failure = ""
        except SolverError as exc:
            trace, failure = exc.trace, f"{exc.reason}: {exc}"
        if trace is not None:
            self.all_traces.append(trace)
        return RunRecord(trace, problem.f_calls, failure)

    def desk(self, name: str, tau: float) -> list[RunRecord]:
        problem = make_embedded(name, factor=100)
        out = []
        for seed in range(self.seeds):
            key = (name, tau, seed)
            if key not in self._desk:
                self._desk[key] = self._run(problem, SolverConfig(p=2, tau=tau, seed=seed))
            out.append(self._desk[key])
        return out

    def desk_all(self, taus=DESK_TAUS) -> None:
        for name in DESK_PROBLEMS:
            for tau in taus:
                self.desk(name, tau)

    @cached_property
    def rosenbr_order_runs(self) -> dict[int, list[RunRecord]]:
        problem = make_embedded("rosenbr", 2, 200)
        return {
            p: [self._run(problem, SolverConfig(p=p, tau=0.1, eps=1e-4, seed=s))
                for s in range(self.seeds)]
            for p in (2, 1)
        }

    @cached_property
    def kowosb_2b_runs(self) -> list[RunRecord]:
        problem = make_embedded("kowosb", 4, 400)
        return [self._run(problem, SolverConfig(variant="skoffar_2b", tau=0.1, seed=s,
                                                b_mode="gauss-newton"))
                for s in range(self.seeds)]


def _converged(rec: RunRecord) -> bool:
    return rec.trace is not None and rec.trace.termination_reason == "converged"


# ---------------------------------------------------------------------------
# Individual criteria
# ---------------------------------------------------------------------------


def offo_property(suite: Suite) -> tuple[bool, str]:
    from .config import default_sweep
    from .experiment import run_experiment

    res = run_experiment(default_sweep(seeds=suite.seeds))
    calls = sum(c.f_calls for c in res.cells)
    return calls == 0, f"{len(res.cells)} sweep runs, f-oracle calls = {calls}"


def condition_certification(suite: Suite) -> tuple[bool, str]:
    suite.desk_all()
    suite.rosenbr_order_runs
    suite.kowosb_2b_runs
    c = suite.cert
    flags = sum(not (r.cond_descent and r.cond_gradstep)
                for t in suite.all_traces for r in t.records)
    ok = c.ok and flags == 0
    return ok, (f"{c.iterations} iterations recomputed: descent failures {c.descent_fail}, "
                f"gradstep failures {c.gradstep_fail}, record mismatches {c.mismatch}, "
                f"flagged records {flags}")


def recurrence_invariants(suite: Suite) -> tuple[bool, str]:
    suite.desk_all()
    reports = [check_invariants(t) for t in suite.all_traces]
    nu = sum(r.nu_violations for r in reports)
    mu = sum(r.mu_violations for r in reports)
    sg = sum(r.sigma_violations for r in reports)
    its = sum(r.iterations for r in reports)
    return nu + mu + sg == 0, (f"{len(reports)} runs, {its} iterations: nu {nu}, mu {mu}, "
                               f"sigma {sg} violations")


def decrease_lower_bound(suite: Suite) -> tuple[bool, str]:
    suite.desk_all()
    bad = sum(check_invariants(t).decrease_violations for t in suite.all_traces)
    its = sum(t.iterations for t in suite.all_traces)
    return bad == 0, f"{its} iterations, {bad} violations of the decrease lower bound"


def mu_bound(suite: Suite) -> tuple[bool, str]:
    details, ok = [], True
    quad = make_embedded("tridia", 10, 1000)
    L2 = quad.known_Lp[2]
    rng = np.random.default_rng(2024)
    J = rng.standard_normal((150, 100))
    lls = linear_least_squares(J, rng.standard_normal(150))
    L1 = float(np.linalg.norm(J.T @ J, 2))
    cases = [
        ("tridia p=2", quad, 2, L2, dict(mu_init=0.0)),
        ("linear least squares p=1", lls, 1, L1, dict(mu_init=0.0, max_iter=3000)),
    ]
    for label, problem, p, Lp, kw in cases:
        worst = -math.inf
        for seed in range(3):
            trace = run(problem, SolverConfig(p=p, tau=0.1, seed=seed, **kw))
            excess = float(np.max(trace.column("mu"))) - max(kw["mu_init"], Lp)
            worst = max(worst, excess)
        ok &= worst <= 1e-10
        details.append(f"{label}: max(mu_k - max(mu_-1, L_p)) = {worst:.3g}")
    return ok, "; ".join(details)


def full_space_equivalence(suite: Suite) -> tuple[bool, str]:
    problem = make_problem("rosenbr", 2)
    nu0 = 1e6
    xs: list[np.ndarray] = []
    cfg = SolverConfig(p=2, tau=1.0, identity_sketch=True, nu0=nu0, eps=1e-300, max_iter=50)
    trace = run(problem, cfg, callback=lambda state, **_: xs.append(state.x.copy()))
    xs.append(trace.x_final)
    ref = reference_full_space(problem, 50, nu0=nu0)
    if len(xs) != len(ref):
        return False, f"iterate counts differ: {len(xs)} vs {len(ref)}"
    err = max(float(np.max(np.abs(a - b))) for a, b in zip(xs, ref))
    return err <= 1e-12 and len(xs) == 51, f"{len(xs) - 1} iterations, max |x - x_ref| = {err:.3g}"


def desk_convergence(suite: Suite) -> tuple[bool, str]:
    worst, parts = 1.0, []
    for name in DESK_PROBLEMS:
        for tau in CONVERGENCE_TAUS:
            recs = suite.desk(name, tau)
            frac = sum(map(_converged, recs)) / len(recs)
            worst = min(worst, frac)
            if frac < 0.9:
                parts.append(f"{name} tau={tau}: {frac:.1f}")
    return worst >= 0.9, f"lowest success fraction {worst:.2f}" + (
        f" ({', '.join(parts)})" if parts else "")


def _mean_cost(recs: list[RunRecord], which: str) -> float:
    costs = [r.trace.weighted_cost(which) for r in recs if _converged(r)]
    return math.fsum(costs) / len(costs) if costs else math.inf


def table1_trend(suite: Suite) -> tuple[bool, str]:
    good, parts = 0, []
    for name in DESK_PROBLEMS:
        costs = [_mean_cost(suite.desk(name, t), "w2") for t in TREND_TAUS]
        dec = costs[0] > costs[1] > costs[2]
        good += dec
        parts.append(f"{name} " + "/".join(f"{c:.4g}" for c in costs))
    return good >= 4, f"{good}/5 strictly decreasing; " + ", ".join(parts)


def table2_trend(suite: Suite) -> tuple[bool, str]:
    sk = _mean_cost(suite.desk("rosenbr", 0.01), "w1")
    base = run_baseline(make_embedded("rosenbr", 2, 200), BaselineConfig(method="adagrad_norm"))
    n_ada = base.hitting_time if base.hitting_time is not None else math.inf
    ratio = sk / n_ada
    return ratio < 1.0, f"SKOFFAR2 w1 {sk:.4g} vs ADAGRAD-Norm {n_ada} iterations, ratio {ratio:.3g}"


def gaussian_norm_bound(suite: Suite) -> tuple[bool, str]:
    ell, n, trials = 50, 1000, 1000
    beta = kappa_bound(ell, n)
    rng = np.random.default_rng(47)
    hits = sum(operator_norm(sample(ell, n, rng).S) <= beta for _ in range(trials))
    return hits / trials >= 0.99, f"{hits}/{trials} samples with ||S|| <= {beta:.4f}"


def embedding_estimator(suite: Suite) -> tuple[bool, str]:
    ell, n = 20, 200
    rng = np.random.default_rng(11)
    low_rank = rng.standard_normal((n, 1))
    full = rng.standard_normal((n, ell))
    a = estimate_true_probability(ell, n, low_rank, 0.5, trials=500, seed=1)
    b = estimate_true_probability(ell, n, full, 0.9, trials=500, seed=2)
    ok = a.estimate >= 0.9 and b.estimate <= 0.1
    return ok, f"rank 1, alpha 0.5: {a.estimate:.3f}; rank {ell}, alpha 0.9: {b.estimate:.3f}"


def _cubic_value(g, H, sigma, U):
    # U: (k, m) trial points
    return U @ g + 0.5 * np.einsum("ij,jk,ik->i", U, H, U) + sigma / 6 * np.linalg.norm(U, axis=1) ** 3


def grid_minimize(g, H, sigma, points: int = 201, zooms: int = 8, starts: int = 4):
    """Dense grid search for the global minimizer of the cubic model in 1 or 2 dimensions."""
    g = np.asarray(g, float)
    H = np.asarray(H, float)
    m = g.size
    lmin = float(np.linalg.eigvalsh(H)[0])
    # any global minimizer has ||u|| <= 2 lambda / sigma with lambda <= |lmin| + sqrt(sigma ||g|| / 2)
    radius = 2.0 * (abs(lmin) + math.sqrt(0.5 * sigma * np.linalg.norm(g))) / sigma + 1e-3

    def grid(centre, half):
        axes = [np.linspace(c - half, c + half, points) for c in centre]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([a.ravel() for a in mesh], axis=1)

    U = grid(np.zeros(m), radius)
    vals = _cubic_value(g, H, sigma, U)
    best_u, best_v = None, math.inf
    for idx in np.argsort(vals)[:starts]:
        centre, half = U[idx], radius
        for _ in range(zooms):
            half *= 8.0 / points
            V = grid(centre, half)
            fv = _cubic_value(g, H, sigma, V)
            centre = V[np.argmin(fv)]
        v = float(_cubic_value(g, H, sigma, centre[None, :])[0])
        if v < best_v:
            best_u, best_v = centre, v
    return best_u, best_v


def subproblem_oracles(suite: Suite) -> tuple[bool, str]:
    rng = np.random.default_rng(5)
    worst = 0.0
    instances = []
    for i in range(19):
        m = 1 + i % 2
        A = rng.standard_normal((m, m))
        instances.append((rng.standard_normal(m), 0.5 * (A + A.T) * 2, rng.uniform(0.5, 10.0)))
    instances.append((np.array([0.0, 1.0]), np.diag([-2.0, 1.0]), 6.0))  # hard case
    for g, H, sigma in instances:
        u = cubic_reg_exact(g, H, sigma)
        ug, _ = grid_minimize(g, H, sigma)
        # the hard case has two minimizers mirrored in the first coordinate
        mirror = u * np.r_[-1.0, np.ones(u.size - 1)]
        err = min(np.max(np.abs(u - ug)), np.max(np.abs(mirror - ug)))
        worst = max(worst, float(err))
    res = 0.0
    for _ in range(10):
        ell = 8
        A = rng.standard_normal((ell, ell))
        W = A @ A.T + ell * np.eye(ell)
        Bf = rng.standard_normal((ell, 3))
        ghat = rng.standard_normal(ell)
        sigma = rng.uniform(0.1, 10)
        s1 = solve_p1(SketchedModel(ghat, W, sigma, degree=1)).shat
        res = max(res, np.linalg.norm(sigma * W @ s1 + ghat) / np.linalg.norm(ghat))
        B = Bf @ Bf.T
        s2 = solve_2b(SketchedModel(ghat, W, sigma, degree=1, Hhat=B, reg_kind="quadratic")).shat
        res = max(res, np.linalg.norm((B + sigma * W) @ s2 + ghat) / np.linalg.norm(ghat))
    ok = worst <= 1e-3 and res <= 1e-10
    return ok, f"20 cubic instances: max argument error {worst:.2e}; solve residual {res:.2e}"


def _slope(eps_list, medians) -> float:
    return float(np.polyfit(np.log(1.0 / np.asarray(eps_list)), np.log(medians), 1)[0])


def complexity_order(suite: Suite) -> tuple[bool, str]:
    eps_list = (1e-1, 1e-2, 1e-3, 1e-4)
    ok, parts = True, []
    for p, ceiling in ((2, 1.5 + 0.2), (1, 2.0 + 0.2)):
        recs = suite.rosenbr_order_runs[p]
        if not all(_converged(r) for r in recs):
            ok = False
            parts.append(f"p={p}: not all runs reached 1e-4")
            continue
        meds = [statistics.median(r.trace.hitting_time_for(e) for r in recs) for e in eps_list]
        meds = [max(m, 1) for m in meds]
        slope = _slope(eps_list, meds)
        ok &= slope <= ceiling
        parts.append(f"p={p}: median N {meds}, slope {slope:.3f} <= {ceiling}")
    return ok, "; ".join(parts)


def skoffar2b_gauss_newton(suite: Suite) -> tuple[bool, str]:
    recs = suite.kowosb_2b_runs
    conv = sum(map(_converged, recs))
    gs = sum(r.cond_gradstep is False for rec in recs if rec.trace for r in rec.trace.records)
    viol = sum(check_step_bound(rec.trace, 0.0, rec.trace.params["nu0"],
                                rec.trace.params["vartheta"]).violations
               for rec in recs if rec.trace)
    ok = conv >= math.ceil(0.9 * len(recs)) and gs == 0 and viol == 0
    return ok, f"{conv}/{len(recs)} converged; gradstep failures {gs}; step-bound violations {viol}"


DETERMINISM_CONFIG = """\
problem  = rosenbr, arwhead
n_hat    = 2, 4
n_factor = 100
tau      = 0.1, 0.05
solver   = skoffar1, skoffar2, adagrad_norm, adam_norm
seeds    = 0..1
"""


def determinism(suite: Suite) -> tuple[bool, str]:
    from .cli import main

    with tempfile.TemporaryDirectory() as tmp:
        cfg = Path(tmp) / "sweep.cfg"
        cfg.write_text(DETERMINISM_CONFIG)
        outs = []
        for i in range(2):
            out = Path(tmp) / f"results{i}.csv"
            rc = main(["sweep", str(cfg), "--out", str(out)])
            if rc != 0:
                return False, f"sweep exited with {rc}"
            outs.append(out.read_bytes())
    same = outs[0] == outs[1]
    return same, f"two sweeps, {len(outs[0])} bytes, identical = {same}"


CRITERIA: list[tuple[int, str, Callable[[Suite], tuple[bool, str]]]] = [
    (1, "OFFO property", offo_property),
    (2, "condition certification", condition_certification),
    (3, "recurrence invariants", recurrence_invariants),
    (4, "model decrease lower bound", decrease_lower_bound),
    (5, "mu_k Lipschitz bound", mu_bound),
    (6, "full-space equivalence", full_space_equivalence),
    (7, "desk convergence", desk_convergence),
    (8, "w2 cost trend in tau", table1_trend),
    (9, "w1 cost versus ADAGRAD-Norm", table2_trend),
    (10, "Gaussian norm bound", gaussian_norm_bound),
    (11, "embedding estimator", embedding_estimator),
    (12, "subproblem oracles", subproblem_oracles),
    (13, "complexity-order ceiling", complexity_order),
    (14, "SKOFFAR2B with Gauss-Newton", skoffar2b_gauss_newton),
    (15, "sweep determinism", determinism),
]


def run_criterion(number: int, suite: Suite) -> CriterionResult:
    _, title, fn = next(c for c in CRITERIA if c[0] == number)
    t0 = time.perf_counter()
    try:
        passed, detail = fn(suite)
    except Exception as exc:  # a crashing check is a failed check
        passed, detail = False, f"{type(exc).__name__}: {exc}"
    return CriterionResult(number, title, bool(passed), detail, time.perf_counter() - t0)


def acceptance_suite(seeds: int = 10, only: list[int] | None = None,
                     echo: Callable[[str], None] | None = None) -> list[CriterionResult]:
    suite = Suite(seeds)
    results = []
    for number, _, _ in CRITERIA:
        if only and number not in only:
            continue
        r = run_criterion(number, suite)
        if echo is not None:
            echo(r.line())
        results.append(r)
    return results
