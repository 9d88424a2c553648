"""Scaled Gaussian sketches and checkers for one-sided embedding conditions."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

Array = np.ndarray


class NormNotConverged(RuntimeError):
    pass


@dataclass(frozen=True)
class SketchOperator:
    """An l x n sketching matrix with entries i.i.d. N(0, 1/l)."""

    S: Array
    seed: int | None = None

    @property
    def ell(self) -> int:
        return self.S.shape[0]

    @property
    def n(self) -> int:
        return self.S.shape[1]

    def apply(self, x: Array) -> Array:
        return self.S @ x

    def rapply(self, y: Array) -> Array:
        return self.S.T @ y

    def gram(self) -> Array:
        return self.S @ self.S.T

    def norm(self) -> float:
        return operator_norm(self.S)


def sample(ell: int, n: int, rng: np.random.Generator | int | None = None) -> SketchOperator:
    if not 1 <= ell <= n:
        raise ValueError(f"need 1 <= ell <= n, got ell={ell}, n={n}")
    seed = rng if isinstance(rng, (int, np.integer)) else None
    rng = np.random.default_rng(rng)
    return SketchOperator(rng.standard_normal((ell, n)) / np.sqrt(ell), seed)


def identity_sketch(n: int) -> SketchOperator:
    """Test hook: S = I turns the sketched method into its full-space parent."""
    return SketchOperator(np.eye(n))


def kappa_bound(ell: int, n: int) -> float:
    """High-probability bound 1.5 + sqrt(n / l) on ||S||_2 for Gaussian S."""
    if ell < 1:
        raise ValueError("ell must be >= 1")
    return 1.5 + np.sqrt(n / ell)


def operator_norm(S: Array, rtol: float = 1e-8, max_iter: int = 100_000, seed: int = 0) -> float:
    """Spectral norm of S by power iteration on the smaller Gram matrix."""
    S = np.asarray(S, dtype=float)
    G = S @ S.T if S.shape[0] <= S.shape[1] else S.T @ S
    v = np.random.default_rng(seed).standard_normal(G.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = G @ v
        lam_new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(lam_new - lam) <= rtol * abs(lam_new):
            return float(np.sqrt(max(lam_new, 0.0)))
        lam = lam_new
    raise NormNotConverged(f"power iteration did not converge in {max_iter} steps")


def range_basis(M: Array, rtol: float = 1e-12) -> Array:
    """Orthonormal basis of range(M), truncating at rtol * sigma_max."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    U, sv, _ = np.linalg.svd(M, full_matrices=False)
    if sv.size == 0 or sv[0] == 0.0:
        raise ValueError("M must be nonzero")
    return U[:, sv > rtol * sv[0]]


@dataclass(frozen=True)
class EmbeddingReport:
    margin: float
    alpha_target: float
    snorm: float
    smax_bound: float

    @property
    def passed(self) -> bool:
        return self.margin >= self.alpha_target


def _margin(S: Array, U: Array) -> float:
    if U.shape[1] > S.shape[0]:
        return 0.0
    return float(np.linalg.svd(S @ U, compute_uv=False)[-1])


def embedding_margin(S: Array, M: Array, alpha_target: float = 0.0) -> EmbeddingReport:
    """Largest alpha with ||S M z|| >= alpha ||M z|| for all z.

    Equals sigma_min(S U) for an orthonormal basis U of range(M); zero when
    rank(M) exceeds the number of sketch rows.
    """
    S = np.asarray(S, dtype=float)
    margin = _margin(S, range_basis(M))
    return EmbeddingReport(margin, alpha_target, operator_norm(S), kappa_bound(*S.shape))


def sparse_hessian_embedding(S: Array, g: Array, SH_norm: float, g_next_norm: float,
                             alpha: float, gamma: float, smax: float) -> dict:
    """Check ||S|| <= smax, ||S g|| >= alpha ||g||, ||S H|| <= sqrt(gamma ||g_next||).

    Checker only; there is no sampling strategy for this condition.
    """
    snorm = operator_norm(S)
    sg = np.linalg.norm(S @ g)
    return {
        "snorm_ok": snorm <= smax,
        "gradient_ok": sg >= alpha * np.linalg.norm(g),
        "hessian_ok": SH_norm <= np.sqrt(gamma * g_next_norm),
        "snorm": snorm,
        "sketched_gradient_ratio": sg / np.linalg.norm(g),
        "hessian_lhs": SH_norm,
        "hessian_rhs": float(np.sqrt(gamma * g_next_norm)),
    }


@dataclass(frozen=True)
class ProbabilityEstimate:
    estimate: float
    low: float
    high: float
    successes: int
    trials: int
    rank: int
    # the rank precondition rank(M) < l (1 - alpha) / C, reported with C = 1
    rank_bound: float

    @property
    def rank_condition(self) -> bool:
        return self.rank < self.rank_bound


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    p = k / n
    den = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


def _count_embedded(args) -> int:
    ell, n, U, alpha, seeds = args
    hits = 0
    for ss in seeds:
        S = np.random.default_rng(ss).standard_normal((ell, n)) / np.sqrt(ell)
        hits += _margin(S, U) >= alpha
    return hits


def estimate_true_probability(ell: int, n: int, M: Array, alpha: float, trials: int = 1000,
                              seed: int = 0, workers: int = 1) -> ProbabilityEstimate:
    """Monte-Carlo estimate of P(margin >= alpha) for l x n Gaussian sketches.

    Each trial draws from its own spawned seed, so the estimate does not
    depend on how trials are sharded across workers.
    """
    if trials < 100:
        raise ValueError("use at least 100 trials")
    if isinstance(seed, np.random.Generator):
        seed = int(seed.integers(2**63))
    U = range_basis(M)
    seeds = np.random.SeedSequence(seed).spawn(trials)
    if workers <= 1:
        hits = _count_embedded((ell, n, U, alpha, seeds))
    else:
        shards = [(ell, n, U, alpha, seeds[i::workers]) for i in range(workers)]
        with ProcessPoolExecutor(workers) as pool:
            hits = sum(pool.map(_count_embedded, shards))
    low, high = wilson_interval(hits, trials)
    rank = U.shape[1]
    return ProbabilityEstimate(hits / trials, low, high, hits, trials, rank, ell * (1.0 - alpha))
