"""Sketched regularised models and their minimizers.

A sketched model in the reduced variable ``shat`` (length l) is

    ghat^T shat + 1/2 shat^T Hhat shat + sigma/(p+1)! ||S^T shat||^(p+1)

with ``||S^T shat||^2 = shat^T W shat`` and ``W = S S^T``. The quadratic
variant replaces the last term by ``sigma/2 ||S^T shat||^2``. The objective
value f(x_k) is a constant of the model and never appears here.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy import linalg

Array = np.ndarray

# relative slack accepted on the gradient-norm condition (rounding only)
GRADSTEP_RTOL = 1e-12
# largest accepted condition estimate of W
MAX_COND = 1e12


class SketchResample(RuntimeError):
    """The sketch is numerically degenerate; draw another one."""


class SecularNonConvergence(RuntimeError):
    pass


@dataclass
class SketchedModel:
    ghat: Array
    W: Array
    sigma: float
    degree: int = 2
    Hhat: Array | None = None
    # "power": sigma/(p+1)! ||S^T s||^(p+1);  "quadratic": sigma/2 ||S^T s||^2
    reg_kind: str = "power"
    S: Array | None = None

    def __post_init__(self):
        self.ghat = np.asarray(self.ghat, dtype=float)
        self.W = np.asarray(self.W, dtype=float)
        if self.Hhat is not None:
            self.Hhat = np.asarray(self.Hhat, dtype=float)
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.degree not in (1, 2):
            raise ValueError("degree must be 1 or 2")

    @property
    def ell(self) -> int:
        return self.ghat.size

    @property
    def reg_order(self) -> int:
        return 2 if self.reg_kind == "quadratic" else self.degree + 1

    @property
    def curvature(self) -> Array | None:
        # degree-1 models ignore Hhat; the quadratic variant always uses it
        if self.reg_kind == "quadratic" or self.degree == 2:
            return self.Hhat
        return None

    def lift(self, shat: Array) -> Array | None:
        return None if self.S is None else self.S.T @ shat

    def full_norm(self, shat: Array) -> float:
        """||S^T shat||, exact from S when available, else from W."""
        if self.S is not None:
            return float(np.linalg.norm(self.S.T @ shat))
        return float(np.sqrt(max(shat @ self.W @ shat, 0.0)))

    def taylor_grad(self, shat: Array) -> Array:
        H = self.curvature
        return self.ghat if H is None else self.ghat + H @ shat

    def taylor_decrease(self, shat: Array) -> float:
        """T(0) - T(shat), the decrease of the sketched Taylor model."""
        H = self.curvature
        q = 0.0 if H is None else 0.5 * shat @ H @ shat
        return float(-(self.ghat @ shat) - q)

    def regulariser(self, shat: Array) -> float:
        if self.reg_kind == "quadratic":
            return 0.5 * self.sigma * self.full_norm(shat) ** 2
        p = self.degree
        return self.sigma / factorial(p + 1) * self.full_norm(shat) ** (p + 1)

    def model_decrease(self, shat: Array) -> float:
        """m(0) - m(shat)."""
        return self.taylor_decrease(shat) - self.regulariser(shat)

    def gradstep_rhs(self, shat: Array, theta: float) -> float:
        Ws = np.linalg.norm(self.W @ shat)
        if self.reg_kind == "quadratic":
            return float(theta * self.sigma * Ws)
        p = self.degree
        return float(theta * self.sigma / factorial(p) * self.full_norm(shat) ** (p - 1) * Ws)


@dataclass
class ConditionCheck:
    cond_descent: bool
    cond_gradstep: bool
    lhs: float
    rhs: float
    model_decrease: float


def verify_conditions(model: SketchedModel, shat: Array, theta: float) -> ConditionCheck:
    """Evaluate the descent and gradient-norm termination conditions exactly."""
    shat = np.asarray(shat, dtype=float)
    dec = model.model_decrease(shat)
    lhs = float(np.linalg.norm(model.taylor_grad(shat)))
    rhs = model.gradstep_rhs(shat, theta)
    return ConditionCheck(dec > 0.0, lhs <= rhs * (1.0 + GRADSTEP_RTOL), lhs, rhs, dec)


@dataclass
class SubproblemSolution:
    shat: Array
    s: Array | None
    grad_model_norm: float
    model_decrease: float
    taylor_decrease: float
    cond_descent: bool
    cond_gradstep: bool
    gradstep_lhs: float
    gradstep_rhs: float
    mode: str = "exact"


def _solution(model: SketchedModel, shat: Array, theta: float, mode: str) -> SubproblemSolution:
    chk = verify_conditions(model, shat, theta)
    return SubproblemSolution(
        shat=shat,
        s=model.lift(shat),
        grad_model_norm=chk.lhs,
        model_decrease=chk.model_decrease,
        taylor_decrease=model.taylor_decrease(shat),
        cond_descent=chk.cond_descent,
        cond_gradstep=chk.cond_gradstep,
        gradstep_lhs=chk.lhs,
        gradstep_rhs=chk.rhs,
        mode=mode,
    )


def _cholesky(A: Array) -> Array:
    try:
        L = linalg.cholesky(A, lower=True)
    except linalg.LinAlgError as exc:
        raise SketchResample(f"factorization failed: {exc}") from None
    d = np.diag(L)
    if not np.all(np.isfinite(L)) or d.min() <= 0 or (d.max() / d.min()) ** 2 > MAX_COND:
        raise SketchResample("matrix numerically singular")
    return L


def solve_p1(model: SketchedModel, theta: float = 1.0) -> SubproblemSolution:
    """Exact minimizer shat = -W^{-1} ghat / sigma of the first-order model."""
    L = _cholesky(model.W)
    shat = -linalg.cho_solve((L, True), model.ghat) / model.sigma
    return _solution(model, shat, theta, "exact")


def solve_2b(model: SketchedModel, theta: float = 1.0) -> SubproblemSolution:
    """Exact minimizer of the quadratically regularised model: (B + sigma W) shat = -ghat."""
    B = np.zeros_like(model.W) if model.Hhat is None else model.Hhat
    L = _cholesky(B + model.sigma * model.W)
    shat = -linalg.cho_solve((L, True), model.ghat)
    return _solution(model, shat, theta, "exact")


def cubic_reg_exact(g: Array, H: Array, sigma: float, tol: float = 1e-9,
                    max_iter: int = 200) -> Array:
    """Global minimizer of g^T u + 1/2 u^T H u + sigma/6 ||u||^3.

    The minimizer solves (H + lam I) u = -g with lam = sigma ||u|| / 2 and
    H + lam I positive semidefinite. Working in the eigenbasis of H, lam is
    the root of phi(lam) = ||u(lam)|| - 2 lam / sigma, a convex decreasing
    function on (max(0, -lambda_min), inf); Newton from the left is
    safeguarded by bisection. When g has no component on the lowest
    eigenspace and phi(-lambda_min) <= 0 (the hard case), a multiple of the
    lowest eigenvector fills the remaining length.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    g = np.asarray(g, dtype=float)
    H = np.asarray(H, dtype=float)
    m = g.size
    lam_H, Q = linalg.eigh(0.5 * (H + H.T), driver="evd")
    c = Q.T @ g
    gnorm = np.linalg.norm(g)
    lmin = lam_H[0]
    lo = max(0.0, -lmin)
    scale = max(1.0, abs(lam_H).max())

    def unorm(lam):
        return np.linalg.norm(c / (lam_H + lam))

    def residual(u):
        return np.linalg.norm(H @ u + g + 0.5 * sigma * np.linalg.norm(u) * u)

    if gnorm == 0.0 and lmin >= 0.0:
        return np.zeros(m)

    # hard case: g orthogonal to the lowest eigenspace
    low = np.abs(lam_H - lmin) <= 1e-12 * scale
    if lmin < 0 and np.all(np.abs(c[low]) <= 1e-12 * max(gnorm, 1e-300)):
        lam = lo
        keep = ~low
        w = np.zeros(m)
        w[keep] = -c[keep] / (lam_H[keep] + lam)
        target = 2.0 * lam / sigma
        wn = np.linalg.norm(w)
        if wn <= target:
            w[np.flatnonzero(low)[0]] = np.sqrt(max(target**2 - wn**2, 0.0))
            return Q @ w

    hi = lo + np.sqrt(0.5 * sigma * gnorm) + 1e-300
    while unorm(hi) - 2.0 * hi / sigma > 0:
        hi *= 2.0
    # start at the left end, nudged off a pole
    lam = lo if lmin > 0 else lo + 1e-12 * scale
    if unorm(lam) - 2.0 * lam / sigma <= 0:
        lam = lo
    for _ in range(max_iter):
        d = lam_H + lam
        u = -c / d
        un = np.linalg.norm(u)
        phi = un - 2.0 * lam / sigma
        if phi > 0:
            lo = lam
        else:
            hi = lam
        x = Q @ u
        if residual(x) <= tol * (1.0 + gnorm) or hi - lo <= 4 * np.finfo(float).eps * max(hi, 1.0):
            return x
        dphi = -np.sum(c**2 / d**3) / un - 2.0 / sigma
        step = lam - phi / dphi
        lam = step if lo < step < hi else 0.5 * (lo + hi)
    x = Q @ (-c / (lam_H + lam))
    if residual(x) <= tol * (1.0 + gnorm):
        return x
    raise SecularNonConvergence(f"secular equation did not converge in {max_iter} iterations")


def solve_p2(model: SketchedModel, theta: float, mode: str = "whitened-exact") -> SubproblemSolution:
    """Minimize the sketched cubic model.

    ``whitened-exact`` factors W = L L^T and solves the cubic problem in
    u = L^T shat, where ||S^T shat|| = ||u|| exactly. ``euclid-approx``
    penalises ||shat||^3 instead and falls back to the exact route when the
    termination conditions fail on the true model.
    """
    if model.degree != 2 or model.Hhat is None:
        raise ValueError("solve_p2 needs a degree-2 model with Hhat")
    if mode == "euclid-approx":
        shat = cubic_reg_exact(model.ghat, model.Hhat, model.sigma)
        sol = _solution(model, shat, theta, mode)
        if sol.cond_descent and sol.cond_gradstep:
            return sol
    elif mode != "whitened-exact":
        raise ValueError(f"unknown mode {mode!r}")
    L = _cholesky(model.W)
    Linv_g = linalg.solve_triangular(L, model.ghat, lower=True)
    X = linalg.solve_triangular(L, model.Hhat, lower=True)
    Ht = linalg.solve_triangular(L, X.T, lower=True)
    u = cubic_reg_exact(Linv_g, 0.5 * (Ht + Ht.T), model.sigma)
    shat = linalg.solve_triangular(L, u, lower=True, trans="T")
    return _solution(model, shat, theta, "whitened-exact")
