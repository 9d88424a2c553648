"""Objective-function-free adaptive regularisation in random subspaces.

Each iteration draws a Gaussian sketch S_k, minimizes a regularised Taylor
model restricted to range(S_k^T), and always takes the step. The
regularisation weight is driven by two recurrences that only use
derivative values: a floor nu_k that grows with every step, and a running
Lipschitz estimate mu_k read off gradient discrepancies seen through the
previous sketch.

Variants: ``skoffar_p`` (p = 1 or 2, regulariser of order p + 1) and
``skoffar_2b`` (quadratic model with a PSD Hessian approximation B_k and a
quadratic regulariser; its recurrences use order 1).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .costs import default_max_iter, iteration_weights
from .problems import DerivativeView, ProblemInstance
from .sketch import identity_sketch, kappa_bound, operator_norm, sample
from .subproblem import (
    SecularNonConvergence,
    SketchedModel,
    SketchResample,
    SubproblemSolution,
    solve_2b,
    solve_p1,
    solve_p2,
)
from .trace import IterationRecord, RunTrace

VARIANTS = ("skoffar_p", "skoffar_2b")


class SolverError(RuntimeError):
    def __init__(self, message: str, reason: str):
        super().__init__(message)
        self.reason = reason
        self.trace: RunTrace | None = None


class StagnationError(SolverError):
    def __init__(self, message="zero step norm"):
        super().__init__(message, "stagnation")


class DegenerateSketchError(SolverError):
    def __init__(self, message="sketch degenerate after all redraws"):
        super().__init__(message, "degenerate_sketch")


class NonFiniteError(SolverError):
    def __init__(self, message="non-finite gradient"):
        super().__init__(message, "nonfinite")


@dataclass
class SolverConfig:
    p: int = 2
    tau: float = 1.0
    eps: float = 1e-3
    nu0: float = 1e3
    vartheta: float = 1e-3
    # None -> 1.01 (1 + sqrt(n / l))
    theta: float | None = None
    mu_init: float = 1e3
    xi_rule: str = "constant"  # or "doubling" (heuristic)
    xi: float = 0.05
    kappa_mode: str = "beta"  # or "exact"
    sigma_rule: str = "practical"  # or "theory"
    subproblem_mode: str = "whitened-exact"  # or "euclid-approx"
    max_iter: int | None = None
    seed: int = 0
    variant: str = "skoffar_p"
    b_mode: str = "gauss-newton"  # 2b only: "zero", "gauss-newton" or "user"
    identity_sketch: bool = False
    max_resample: int = 5

    def __post_init__(self):
        if self.p not in (1, 2):
            raise ValueError("p must be 1 or 2")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.eps <= 0 or self.nu0 <= 0:
            raise ValueError("eps and nu0 must be positive")
        if not 0.0 < self.vartheta < 1.0:
            raise ValueError("vartheta must lie in (0, 1)")
        if self.theta is not None and self.theta <= 1.0:
            raise ValueError("theta must exceed 1")
        if self.mu_init < 0:
            raise ValueError("mu_init must be nonnegative")
        if not 0.0 < self.xi <= 1.0:
            raise ValueError("xi must lie in (0, 1]")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        for name, value, allowed in [
            ("xi_rule", self.xi_rule, ("constant", "doubling")),
            ("kappa_mode", self.kappa_mode, ("beta", "exact")),
            ("sigma_rule", self.sigma_rule, ("practical", "theory")),
            ("subproblem_mode", self.subproblem_mode, ("whitened-exact", "euclid-approx")),
            ("b_mode", self.b_mode, ("zero", "gauss-newton", "user")),
        ]:
            if value not in allowed:
                raise ValueError(f"{name} must be one of {allowed}")
        if self.identity_sketch and self.tau != 1.0:
            raise ValueError("the identity sketch needs tau = 1")

    @property
    def order(self) -> int:
        """Order used by the recurrences and the step conditions."""
        return 1 if self.variant == "skoffar_2b" else self.p

    @property
    def second_order(self) -> bool:
        if self.variant == "skoffar_2b":
            return self.b_mode != "zero"
        return self.p == 2

    @property
    def label(self) -> str:
        return "skoffar2b" if self.variant == "skoffar_2b" else f"skoffar{self.p}"

    def sketch_rows(self, n: int) -> int:
        return n if self.identity_sketch else max(1, min(n, round(self.tau * n)))

    def theta_for(self, n: int) -> float:
        if self.theta is not None:
            return self.theta
        return 1.01 * (1.0 + math.sqrt(n / self.sketch_rows(n)))

    def max_iter_for(self, n: int) -> int:
        if self.max_iter is not None:
            return self.max_iter
        return default_max_iter(self.tau, n, self.second_order)


@dataclass
class SolverState:
    x: np.ndarray
    k: int = 0
    nu: float = 1.0
    mu: float = 0.0
    sigma: float = math.nan
    xi: float = 0.05
    prev_sketch: np.ndarray | None = field(default=None, repr=False)
    prev_grad_model_norm: float | None = None
    prev_step_norm: float | None = None
    prev_kappaS: float | None = None
    prev_gnorm: float | None = None


def update_mu(mu_prev: float, Sprev_gk_norm: float, prev_grad_model_norm: float,
              kappaS_prev: float, prev_step_norm: float, p: int) -> float:
    """Running Lipschitz estimate from the gradient change seen by the last sketch."""
    if prev_step_norm <= 0.0:
        raise StagnationError("previous step has zero norm")
    if kappaS_prev <= 0.0:
        raise ValueError("kappaS_prev must be positive")
    cand = (Sprev_gk_norm - prev_grad_model_norm) / (kappaS_prev * prev_step_norm**p)
    return max(mu_prev, cand)


def update_nu(nu: float, step_norm: float, p: int) -> float:
    return nu + nu * step_norm ** (p + 1)


def select_sigma(state: SolverState, config: SolverConfig) -> float:
    if state.k == 0:
        return config.nu0
    if config.sigma_rule == "theory":
        return max(state.nu, state.mu)
    return max(config.vartheta * state.nu, state.xi * state.mu)


def update_xi(xi: float, gnorm: float, prev_gnorm: float | None) -> float:
    """Heuristic: double xi after a gradient decrease, halve it otherwise."""
    if prev_gnorm is None:
        return xi
    xi = 2.0 * xi if gnorm < prev_gnorm else 0.5 * xi
    return min(1.0, max(1e-6, xi))


def build_Bk(oracle: DerivativeView, x: np.ndarray, mode: str,
             user: Callable | None = None) -> Callable[[np.ndarray], np.ndarray]:
    """Symmetric PSD Hessian approximation, as a map V -> B V."""
    if mode == "zero":
        return lambda V: np.zeros_like(V)
    if mode == "gauss-newton":
        if oracle.gn is None:
            raise ValueError(f"{oracle.name} has no residual structure for Gauss-Newton")
        return lambda V: oracle.gn(x, V)
    if mode == "user":
        if user is None:
            raise ValueError("b_mode 'user' needs a B operator")
        return lambda V: user(x, V)
    raise ValueError(f"unknown B mode {mode!r}")


def _sketched_curvature(S: np.ndarray, apply: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    # S (M S^T) from l matrix-vector products, then symmetrized
    C = S @ apply(S.T)
    return 0.5 * (C + C.T)


def _draw(config: SolverConfig, ell: int, n: int, rng: np.random.Generator) -> np.ndarray:
    return identity_sketch(n).S if config.identity_sketch else sample(ell, n, rng).S


def step(state: SolverState, oracle: DerivativeView, rng: np.random.Generator,
         config: SolverConfig, g: np.ndarray | None = None, B_user: Callable | None = None,
         callback: Callable | None = None) -> tuple[SolverState, IterationRecord]:
    """One iteration from ``state.x``; the step is always accepted."""
    x = state.x
    n = oracle.n
    q = config.order
    if g is None:
        g = oracle.grad(x)
    if not np.all(np.isfinite(g)):
        raise NonFiniteError(f"non-finite gradient at iteration {state.k}")
    gnorm = float(np.linalg.norm(g))

    mu, xi = state.mu, state.xi
    if state.k > 0:
        mu = update_mu(
            state.mu,
            float(np.linalg.norm(state.prev_sketch @ g)),
            state.prev_grad_model_norm,
            state.prev_kappaS,
            state.prev_step_norm,
            q,
        )
        if config.xi_rule == "doubling":
            xi = update_xi(xi, gnorm, state.prev_gnorm)
    cur = replace(state, mu=mu, xi=xi)
    sigma = select_sigma(cur, config)
    theta = config.theta_for(n)
    ell = config.sketch_rows(n)

    if config.variant == "skoffar_2b":
        curv_op = build_Bk(oracle, x, config.b_mode, B_user)
    elif config.p == 2:
        curv_op = lambda V: oracle.hvp(x, V)  # noqa: E731
    else:
        curv_op = None

    sol: SubproblemSolution | None = None
    last_error = ""
    for attempt in range(config.max_resample + 1):
        S = _draw(config, ell, n, rng)
        W = S @ S.T
        Hhat = None if curv_op is None else _sketched_curvature(S, curv_op)
        model = SketchedModel(
            ghat=S @ g,
            W=W,
            sigma=sigma,
            degree=q if config.variant == "skoffar_p" else 1,
            Hhat=Hhat,
            reg_kind="quadratic" if config.variant == "skoffar_2b" else "power",
            S=S,
        )
        try:
            if config.variant == "skoffar_2b":
                sol = solve_2b(model, theta)
            elif config.p == 1:
                sol = solve_p1(model, theta)
            else:
                sol = solve_p2(model, theta, config.subproblem_mode)
        except (SketchResample, SecularNonConvergence) as exc:
            last_error = str(exc)
            continue
        if sol.cond_descent and sol.cond_gradstep:
            break
        last_error = "termination conditions not certified"
        sol = None
    if sol is None:
        raise DegenerateSketchError(
            f"iteration {state.k}: {last_error} after {config.max_resample} redraws"
        )

    s = sol.s
    snorm = float(np.linalg.norm(s))
    if callback is not None:
        callback(state=cur, model=model, solution=sol, theta=theta)
    kappaS = operator_norm(S) if config.kappa_mode == "exact" else kappa_bound(S.shape[0], n)
    record = IterationRecord(
        k=state.k,
        gnorm=gnorm,
        snorm=snorm,
        sigma=sigma,
        nu=state.nu,
        mu=mu,
        model_decrease=sol.model_decrease,
        taylor_decrease=sol.taylor_decrease,
        gs_lhs=sol.gradstep_lhs,
        gs_rhs=sol.gradstep_rhs,
        cond_descent=sol.cond_descent,
        cond_gradstep=sol.cond_gradstep,
        ell=S.shape[0],
        resamples=attempt,
    )
    new_state = SolverState(
        x=x + s,
        k=state.k + 1,
        nu=update_nu(state.nu, snorm, q),
        mu=mu,
        sigma=sigma,
        xi=xi,
        prev_sketch=S,
        prev_grad_model_norm=sol.grad_model_norm,
        prev_step_norm=snorm,
        prev_kappaS=kappaS,
        prev_gnorm=gnorm,
    )
    return new_state, record


def run(problem: ProblemInstance, config: SolverConfig, diagnostics: bool = False,
        B_user: Callable | None = None, callback: Callable | None = None) -> RunTrace:
    """Iterate until ||g_k|| <= eps or the iteration budget is spent.

    The objective is evaluated only when ``diagnostics`` is set, and then
    only to annotate the trace.
    """
    oracle = problem.derivatives()
    n = oracle.n
    ell = config.sketch_rows(n)
    tau = ell / n
    w1, w2 = iteration_weights(config.tau, n, config.second_order)
    trace = RunTrace(
        solver=config.label,
        problem=problem.name,
        n=n,
        ell=ell,
        tau=tau,
        eps=config.eps,
        p=config.order,
        w1_per_iter=w1,
        w2_per_iter=w2,
        seed=config.seed,
        variant=config.variant,
        params=asdict(config),
    )
    rng = np.random.default_rng(config.seed)
    state = SolverState(x=oracle.x0.copy(), nu=config.nu0, mu=config.mu_init, xi=config.xi)
    max_iter = config.max_iter_for(n)
    fdiag = problem.diagnostic_f if diagnostics else None

    def annotate(rec):
        rec.cum_w1 = rec.k * w1
        rec.cum_w2 = rec.k * w2
        if fdiag is not None:
            rec.f_diag = fdiag(state.x)
        return rec

    try:
        while True:
            g = oracle.grad(state.x)
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"non-finite gradient at iteration {state.k}")
            gnorm = float(np.linalg.norm(g))
            if gnorm <= config.eps or state.k >= max_iter:
                trace.final = annotate(IterationRecord(k=state.k, gnorm=gnorm, nu=state.nu))
                trace.termination_reason = "converged" if gnorm <= config.eps else "max_iter"
                break
            new_state, rec = step(state, oracle, rng, config, g=g, B_user=B_user,
                                  callback=callback)
            trace.records.append(annotate(rec))
            state = new_state
    except SolverError as exc:
        trace.termination_reason = exc.reason
        trace.message = str(exc)
        trace.x_final = state.x
        exc.trace = trace
        raise
    trace.x_final = state.x
    return trace


# ---------------------------------------------------------------------------
# Diagnostics on finished traces
# ---------------------------------------------------------------------------


@dataclass
class OmegaTrue:
    flags: np.ndarray
    count: int


def omega_true_flags(trace: RunTrace, omega: float, eps: float) -> OmegaTrue:
    """Flag iterations whose step satisfies ||s_k||^p >= omega eps."""
    if not 0.0 < omega < 1.0 or not 0.0 < eps < 1.0:
        raise ValueError("omega and eps must lie in (0, 1)")
    snorm = trace.column("snorm")
    flags = snorm**trace.p >= omega * eps
    return OmegaTrue(flags, int(flags.sum()))


@dataclass
class StepBoundReport:
    eta: float
    bounds: np.ndarray
    snorms: np.ndarray
    violations: int


def step_bound_eta(kappa_high: float, nu0: float, vartheta: float, p: int) -> float:
    return sum(
        (kappa_high * math.factorial(p + 1) / (math.factorial(i) * vartheta * nu0))
        ** (1.0 / (p - i + 1))
        for i in range(2, p + 1)
    )


def check_step_bound(trace: RunTrace, kappa_high: float, nu0: float, vartheta: float,
                     p: int | None = None) -> StepBoundReport:
    """Check the a-priori bound on ||s_k|| over a trace.

    For ``skoffar_p`` the bound is 2 eta + 2 ((p+1)! ||g_k|| / sigma_k)^(1/p);
    for ``skoffar_2b`` it is 2 ||g_k|| / (vartheta nu0).
    """
    if kappa_high < 0:
        raise ValueError("kappa_high must be nonnegative")
    g = trace.column("gnorm")
    s = trace.column("snorm")
    if trace.variant == "skoffar_2b":
        eta = 0.0
        bounds = 2.0 * g / (vartheta * nu0)
    else:
        p = trace.p if p is None else p
        eta = step_bound_eta(kappa_high, nu0, vartheta, p)
        sigma = trace.column("sigma")
        bounds = 2.0 * eta + 2.0 * (math.factorial(p + 1) * g / sigma) ** (1.0 / p)
    return StepBoundReport(eta, bounds, s, int(np.sum(s > bounds)))


@dataclass
class InvariantReport:
    iterations: int
    descent_violations: int
    gradstep_violations: int
    nu_violations: int
    mu_violations: int
    sigma_violations: int
    decrease_violations: int

    @property
    def ok(self) -> bool:
        return not any((self.descent_violations, self.gradstep_violations, self.nu_violations,
                        self.mu_violations, self.sigma_violations, self.decrease_violations))


def check_invariants(trace: RunTrace, vartheta: float | None = None) -> InvariantReport:
    """Count violations of the per-iteration guarantees recorded in a trace."""
    vartheta = trace.params.get("vartheta", 1e-3) if vartheta is None else vartheta
    recs = trace.records
    all_recs = trace.all_records()
    q = trace.p
    reg = 2.0 if trace.variant == "skoffar_2b" else float(math.factorial(q + 1))
    power = 2 if trace.variant == "skoffar_2b" else q + 1
    descent = sum(not (r.model_decrease > 0.0) for r in recs)
    gradstep = sum(not (r.gs_lhs <= r.gs_rhs * (1.0 + 1e-12)) for r in recs)
    decrease = sum(not (r.taylor_decrease > r.sigma / reg * r.snorm**power) for r in recs)
    nu_bad = 0
    for a, b in zip(all_recs, all_recs[1:]):
        expected = update_nu(a.nu, a.snorm, q)
        if b.nu != expected or (a.snorm > 0 and not b.nu > a.nu):
            nu_bad += 1
    mu_bad = sum(not (b.mu >= a.mu) for a, b in zip(recs, recs[1:]))
    sigma_bad = sum(
        not (vartheta * r.nu * (1 - 1e-15) <= r.sigma <= max(r.nu, r.mu) * (1 + 1e-15))
        for r in recs
    )
    return InvariantReport(len(recs), descent, gradstep, nu_bad, mu_bad, sigma_bad, decrease)
