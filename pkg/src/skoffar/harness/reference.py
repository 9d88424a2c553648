"""Straight-line full-space loop used to cross-check the sketched solver.

It recomputes every recurrence from scratch with S = I, so W = I and the
sketched model is the plain cubic model in x. Only the cubic minimizer is
shared with the library.
"""

from __future__ import annotations

import math

import numpy as np

from ..problems import ProblemInstance
from ..subproblem import cubic_reg_exact


def reference_full_space(problem: ProblemInstance, iterations: int, nu0: float = 1e3,
                         mu_init: float = 1e3, vartheta: float = 1e-3, xi: float = 0.05,
                         eps: float = 0.0) -> list[np.ndarray]:
    """Iterates x_0, x_1, ... of the p = 2 method with identity sketches.

    kappa_S is the bound 1.5 + sqrt(n / n) = 2.5 used for an n x n sketch.
    """
    n = problem.n
    kappa = 1.5 + math.sqrt(1.0)
    x = np.array(problem.x0, dtype=float)
    xs = [x.copy()]
    nu, mu = nu0, mu_init
    prev_model_grad = prev_snorm = None
    for k in range(iterations):
        g = problem.grad_oracle(x)
        if np.linalg.norm(g) <= eps:
            break
        if k > 0:
            mu = max(mu, (np.linalg.norm(g) - prev_model_grad) / (kappa * prev_snorm**2))
        sigma = nu0 if k == 0 else max(vartheta * nu, xi * mu)
        H = problem.hvp_oracle(x, np.eye(n))
        H = 0.5 * (H + H.T)
        s = cubic_reg_exact(g, H, sigma)
        prev_model_grad = np.linalg.norm(g + H @ s)
        prev_snorm = np.linalg.norm(s)
        nu = nu + nu * prev_snorm**3
        x = x + s
        xs.append(x.copy())
    return xs
