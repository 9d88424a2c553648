"""Weighted iteration costs for sketched derivative evaluations.

With tau = l / n, one sketched iteration needs a sketched gradient (tau of a
gradient) and l Hessian-vector products (n tau^2 gradients when a Hessian
costs n gradients). ``w1`` measures that in gradients, ``w2`` relative to a
full-space second-order iteration (1 + n gradients).
"""

from __future__ import annotations

import math


def _check(tau: float, n: int) -> None:
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    if n < 1:
        raise ValueError("n must be >= 1")


def w1(tau: float, n: int) -> float:
    _check(tau, n)
    return tau + n * tau * tau


def w2(tau: float, n: int) -> float:
    _check(tau, n)
    return (tau + n * tau * tau) / (1.0 + n)


def iteration_weights(tau: float, n: int, second_order: bool) -> tuple[float, float]:
    """(w1, w2) charged per iteration.

    First-order iterations only pay for the sketched gradient, tau in
    gradient units; relative to their own full-space version that is tau too.
    """
    if second_order:
        return w1(tau, n), w2(tau, n)
    _check(tau, n)
    return tau, tau


def default_max_iter(tau: float, n: int, second_order: bool = True, budget: float = 1e5,
                     cap: int = 10_000_000) -> int:
    """Iteration budget ``budget / w2`` capped for desk runs."""
    return int(min(cap, math.ceil(budget / iteration_weights(tau, n, second_order)[1])))
