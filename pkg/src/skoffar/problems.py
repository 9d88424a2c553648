"""Test objectives with hand-coded derivative oracles.

Formulas follow the standard CUTEst/OPM definitions. Every oracle works on
batches: ``hvp(x, V)`` accepts ``V`` of shape ``(n,)`` or ``(n, m)`` and
returns an array of the same shape, so a sketched Hessian can be assembled
from ``m`` Hessian-vector products in one call. No oracle forms an ``n x n``
Hessian for variable-dimension problems.

The objective value is kept behind :meth:`ProblemInstance.diagnostic_f`,
which counts its calls. Solvers only ever see a :class:`DerivativeView`.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Array = np.ndarray


class UnknownProblemError(KeyError):
    pass


class DerivativeCheckError(ValueError):
    pass


@dataclass(frozen=True)
class DerivativeView:
    """What a solver is allowed to see of a problem: no objective value."""

    name: str
    n: int
    x0: Array
    grad: Callable[[Array], Array]
    hvp: Callable[[Array, Array], Array]
    gn: Callable[[Array, Array], Array] | None = None


@dataclass
class ProblemInstance:
    name: str
    n: int
    x0: Array
    grad_oracle: Callable[[Array], Array]
    hvp_oracle: Callable[[Array, Array], Array]
    f_oracle: Callable[[Array], float] = field(repr=False)
    # order p -> Lipschitz constant of the p-th derivative
    known_Lp: dict[int, float] = field(default_factory=dict)
    known_flow: float | None = None
    known_kg: float | None = None
    # Gauss-Newton product v -> 2 J^T J v, only for residual-structured problems
    gn_oracle: Callable[[Array, Array], Array] | None = None

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        self._f_calls = 0
        self._lock = threading.Lock()

    @property
    def f_calls(self) -> int:
        return self._f_calls

    def reset_f_calls(self) -> None:
        with self._lock:
            self._f_calls = 0

    def diagnostic_f(self, x: Array) -> float:
        """Objective value, for diagnostics only. Every call is counted."""
        with self._lock:
            self._f_calls += 1
        return float(self.f_oracle(x))

    def derivatives(self) -> DerivativeView:
        return DerivativeView(
            self.name, self.n, self.x0.copy(), self.grad_oracle, self.hvp_oracle, self.gn_oracle
        )

    def __getstate__(self):
        state = self.__dict__.copy()
        del state["_lock"]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()


def _batched(fun):
    """Let a 2-D ``(n, m)`` hvp implementation also accept a single vector."""

    def wrapper(x, V):
        V = np.asarray(V, dtype=float)
        if V.ndim == 1:
            return fun(x, V[:, None])[:, 0]
        return fun(x, V)

    return wrapper


def _pair_hvp(n, i, j, hii, hij, hjj, V):
    """Hessian-vector products for a sum of two-variable element functions.

    Element ``e`` couples variables ``i[e]`` and ``j[e]`` with second
    derivatives ``hii[e]``, ``hij[e]``, ``hjj[e]``.
    """
    out = np.zeros((n, V.shape[1]))
    Vi, Vj = V[i], V[j]
    np.add.at(out, i, hii[:, None] * Vi + hij[:, None] * Vj)
    np.add.at(out, j, hij[:, None] * Vi + hjj[:, None] * Vj)
    return out


# ---------------------------------------------------------------------------
# Least-squares scaffolding: f = sum_i r_i(x)^2
# ---------------------------------------------------------------------------


@dataclass
class Residuals:
    """Residual map r with Jacobian products and weighted residual curvature.

    ``rhvp(x, w, V)`` returns ``sum_i w_i * Hess(r_i)(x) @ V``.
    """

    residual: Callable[[Array], Array]
    jvp: Callable[[Array, Array], Array]
    vjp: Callable[[Array, Array], Array]
    rhvp: Callable[[Array, Array, Array], Array] | None = None


def _least_squares(name, n, x0, res: Residuals, **known) -> ProblemInstance:
    def f(x):
        r = res.residual(x)
        return float(r @ r)

    def grad(x):
        return 2.0 * res.vjp(x, res.residual(x)[:, None])[:, 0]

    @_batched
    def gn(x, V):
        return 2.0 * res.vjp(x, res.jvp(x, V))

    @_batched
    def hvp(x, V):
        out = 2.0 * res.vjp(x, res.jvp(x, V))
        if res.rhvp is not None:
            out = out + 2.0 * res.rhvp(x, res.residual(x), V)
        return out

    return ProblemInstance(name, n, x0, grad, hvp, f, gn_oracle=gn, **known)


def _dense_residuals(residual, jac, rhess=None) -> Residuals:
    """Residuals for tiny fixed-size problems with an explicit Jacobian.

    ``rhess(x, w)`` returns the ``n x n`` matrix ``sum_i w_i Hess(r_i)``.
    """
    return Residuals(
        residual,
        lambda x, V: jac(x) @ V,
        lambda x, W: jac(x).T @ W,
        None if rhess is None else (lambda x, w, V: rhess(x, w) @ V),
    )


# ---------------------------------------------------------------------------
# Problem families
# ---------------------------------------------------------------------------


def rosenbr(n: int = 2) -> ProblemInstance:
    """Chained Rosenbrock: sum_{i<n} 100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2.

    Start (-1.2, 1, -1.2, 1, ...); minimizer at all ones, f = 0.
    """
    if n < 2:
        raise ValueError("rosenbr needs n >= 2")
    x0 = np.where(np.arange(n) % 2 == 0, -1.2, 1.0)
    i = np.arange(n - 1)

    def f(x):
        d = x[1:] - x[:-1] ** 2
        return float(np.sum(100.0 * d**2 + (1.0 - x[:-1]) ** 2))

    def grad(x):
        d = x[1:] - x[:-1] ** 2
        g = np.zeros(n)
        g[:-1] += -400.0 * x[:-1] * d - 2.0 * (1.0 - x[:-1])
        g[1:] += 200.0 * d
        return g

    @_batched
    def hvp(x, V):
        xi, xj = x[:-1], x[1:]
        hii = 1200.0 * xi**2 - 400.0 * xj + 2.0
        hij = -400.0 * xi
        hjj = np.full(n - 1, 200.0)
        return _pair_hvp(n, i, i + 1, hii, hij, hjj, V)

    return ProblemInstance("rosenbr", n, x0, grad, hvp, f, known_flow=0.0)


def arwhead(n: int = 10) -> ProblemInstance:
    """ARWHEAD: sum_{i<n} (-4 x_i + 3) + (x_i^2 + x_n^2)^2, start at ones.

    Arrow-head Hessian; minimum 0 at x_i = 1 (i < n), x_n = 0.
    """
    if n < 2:
        raise ValueError("arwhead needs n >= 2")
    x0 = np.ones(n)

    def f(x):
        q = x[:-1] ** 2 + x[-1] ** 2
        return float(np.sum(-4.0 * x[:-1] + 3.0 + q**2))

    def grad(x):
        q = x[:-1] ** 2 + x[-1] ** 2
        g = np.empty(n)
        g[:-1] = -4.0 + 4.0 * q * x[:-1]
        g[-1] = np.sum(4.0 * q) * x[-1]
        return g

    @_batched
    def hvp(x, V):
        y, z = x[:-1], x[-1]
        out = np.empty_like(V)
        out[:-1] = (12.0 * y**2 + 4.0 * z**2)[:, None] * V[:-1] + (8.0 * y * z)[:, None] * V[-1]
        out[-1] = (8.0 * y * z) @ V[:-1] + np.sum(4.0 * y**2 + 12.0 * z**2) * V[-1]
        return out

    return ProblemInstance("arwhead", n, x0, grad, hvp, f, known_flow=0.0)


def broyden3d(n: int = 10) -> ProblemInstance:
    """Broyden tridiagonal: sum_i ((3 - 2 x_i) x_i - x_{i-1} - 2 x_{i+1} + 1)^2.

    With x_0 = x_{n+1} = 0 and start at -ones.
    """

    def residual(x):
        xp = np.concatenate(([0.0], x, [0.0]))
        return (3.0 - 2.0 * x) * x - xp[:-2] - 2.0 * xp[2:] + 1.0

    def jvp(x, V):
        out = (3.0 - 4.0 * x)[:, None] * V
        out[1:] -= V[:-1]
        out[:-1] -= 2.0 * V[1:]
        return out

    def vjp(x, W):
        out = (3.0 - 4.0 * x)[:, None] * W
        out[:-1] -= W[1:]
        out[1:] -= 2.0 * W[:-1]
        return out

    def rhvp(x, w, V):
        return (-4.0 * w)[:, None] * V

    res = Residuals(residual, jvp, vjp, rhvp)
    return _least_squares("broyden3d", n, -np.ones(n), res, known_flow=0.0)


def tridia(n: int = 10, alpha=2.0, beta=1.0, gamma=1.0, delta=1.0) -> ProblemInstance:
    """TRIDIA: gamma (delta x_1 - 1)^2 + sum_{i>=2} i (alpha x_i - beta x_{i-1})^2.

    A convex quadratic, so its Hessian is constant and L_2 = 0. Start at ones.
    """
    w = np.sqrt(np.arange(1, n + 1, dtype=float))

    def residual(x):
        r = np.empty(n)
        r[0] = np.sqrt(gamma) * (delta * x[0] - 1.0)
        r[1:] = w[1:] * (alpha * x[1:] - beta * x[:-1])
        return r

    def jvp(x, V):
        out = np.empty_like(V)
        out[0] = np.sqrt(gamma) * delta * V[0]
        out[1:] = w[1:, None] * (alpha * V[1:] - beta * V[:-1])
        return out

    def vjp(x, W):
        out = np.zeros_like(W)
        out[0] = np.sqrt(gamma) * delta * W[0]
        out[1:] += alpha * w[1:, None] * W[1:]
        out[:-1] -= beta * w[1:, None] * W[1:]
        return out

    prob = _least_squares("tridia", n, np.ones(n), Residuals(residual, jvp, vjp), known_flow=0.0)
    hess = 2.0 * vjp(None, jvp(None, np.eye(n)))
    prob.known_Lp = {1: float(np.linalg.eigvalsh(hess)[-1]), 2: 0.0}
    return prob


def eg2(n: int = 10) -> ProblemInstance:
    """EG2: sum_{i<n} sin(x_1 + x_i^2 - 1) + sin(x_n^2) / 2, start at zeros."""
    if n < 2:
        raise ValueError("eg2 needs n >= 2")
    m = n - 1

    def f(x):
        return float(np.sum(np.sin(x[0] + x[:m] ** 2 - 1.0)) + 0.5 * np.sin(x[-1] ** 2))

    def grad(x):
        a = x[0] + x[:m] ** 2 - 1.0
        c = np.cos(a)
        g = np.zeros(n)
        g[:m] += 2.0 * x[:m] * c
        g[0] += np.sum(c)
        g[-1] += np.cos(x[-1] ** 2) * x[-1]
        return g

    @_batched
    def hvp(x, V):
        y = x[:m]
        a = x[0] + y**2 - 1.0
        s, c = np.sin(a), np.cos(a)
        # element i depends on x_0 and x_i with grad(a_i) = e_0 + 2 x_i e_i
        u = V[0][None, :] + (2.0 * y)[:, None] * V[:m]
        out = np.zeros_like(V)
        out[0] -= s @ u
        out[:m] += (-2.0 * s * y)[:, None] * u + (2.0 * c)[:, None] * V[:m]
        z = x[-1]
        out[-1] += (np.cos(z**2) - 2.0 * z**2 * np.sin(z**2)) * V[-1]
        return out

    return ProblemInstance("eg2", n, np.zeros(n), grad, hvp, f, known_flow=-float(n))


def dixmaana(n: int = 12) -> ProblemInstance:
    """DIXMAANA (alpha=1, beta=gamma=delta=0.0625, all exponents 0), n = 3m.

    f = 1 + sum x_i^2 + beta sum x_i^2 (x_{i+1} + x_{i+1}^2)^2
          + gamma sum_{i<=2m} x_i^2 x_{i+m}^4 + delta sum_{i<=m} x_i x_{i+2m}.
    Start at 2 * ones.
    """
    if n % 3 or n < 3:
        raise ValueError("dixmaana needs n a positive multiple of 3")
    m = n // 3
    b = g = d = 0.0625
    i2, i3, i4 = np.arange(n - 1), np.arange(2 * m), np.arange(m)

    def f(x):
        y = x[1:] + x[1:] ** 2
        return float(
            1.0
            + np.sum(x**2)
            + b * np.sum(x[:-1] ** 2 * y**2)
            + g * np.sum(x[: 2 * m] ** 2 * x[m:] ** 4)
            + d * np.sum(x[:m] * x[2 * m :])
        )

    def grad(x):
        out = 2.0 * x
        xi, xj = x[:-1], x[1:]
        y = xj + xj**2
        out[:-1] += 2.0 * b * xi * y**2
        out[1:] += 2.0 * b * xi**2 * y * (1.0 + 2.0 * xj)
        xi, z = x[: 2 * m], x[m:]
        out[: 2 * m] += 2.0 * g * xi * z**4
        out[m:] += 4.0 * g * xi**2 * z**3
        out[:m] += d * x[2 * m :]
        out[2 * m :] += d * x[:m]
        return out

    @_batched
    def hvp(x, V):
        out = 2.0 * V
        xi, xj = x[:-1], x[1:]
        y = xj + xj**2
        dy = 1.0 + 2.0 * xj
        out += _pair_hvp(
            n, i2, i2 + 1, 2 * b * y**2, 4 * b * xi * y * dy, 2 * b * xi**2 * (dy**2 + 2 * y), V
        )
        xi, z = x[: 2 * m], x[m:]
        out += _pair_hvp(n, i3, i3 + m, 2 * g * z**4, 8 * g * xi * z**3, 12 * g * xi**2 * z**2, V)
        zero = np.zeros(m)
        out += _pair_hvp(n, i4, i4 + 2 * m, zero, np.full(m, d), zero, V)
        return out

    return ProblemInstance("dixmaana", n, 2.0 * np.ones(n), grad, hvp, f, known_flow=0.0)


def helix(n: int = 3) -> ProblemInstance:
    """Helical valley (More, Garbow, Hillstrom #7), n = 3, start (-1, 0, 0).

    Residuals 10 (x3 - 10 theta), 10 (r - 1), x3 with
    theta = atan(x2 / x1) / (2 pi) (+ 1/2 when x1 < 0).
    """
    if n != 3:
        raise ValueError("helix is defined for n = 3 only")
    tp = 2.0 * np.pi

    def theta(x):
        t = np.arctan(x[1] / x[0]) / tp if x[0] != 0 else 0.25 * np.sign(x[1])
        return t + 0.5 if x[0] < 0 else t

    def residual(x):
        r = np.hypot(x[0], x[1])
        return np.array([10.0 * (x[2] - 10.0 * theta(x)), 10.0 * (r - 1.0), x[2]])

    def jac(x):
        x1, x2 = x[0], x[1]
        r2 = x1 * x1 + x2 * x2
        r = np.sqrt(r2)
        return np.array(
            [
                [100.0 * x2 / (tp * r2), -100.0 * x1 / (tp * r2), 10.0],
                [10.0 * x1 / r, 10.0 * x2 / r, 0.0],
                [0.0, 0.0, 1.0],
            ]
        )

    def rhess(x, w):
        x1, x2 = x[0], x[1]
        r2 = x1 * x1 + x2 * x2
        r = np.sqrt(r2)
        r4 = r2 * r2
        # second derivatives of theta
        t11 = x1 * x2 / (np.pi * r4)
        t12 = (x2 * x2 - x1 * x1) / (tp * r4)
        H = np.zeros((3, 3))
        H[:2, :2] += -100.0 * w[0] * np.array([[t11, t12], [t12, -t11]])
        H[:2, :2] += 10.0 * w[1] * (np.eye(2) - np.outer(x[:2], x[:2]) / r2) / r
        return H

    res = _dense_residuals(residual, jac, rhess)
    return _least_squares("helix", 3, np.array([-1.0, 0.0, 0.0]), res, known_flow=0.0)


_KOWOSB_Y = np.array(
    [0.1957, 0.1947, 0.1735, 0.1600, 0.0844, 0.0627, 0.0456, 0.0342, 0.0323, 0.0235, 0.0246]
)
_KOWOSB_U = np.array([4.0, 2.0, 1.0, 0.5, 0.25, 0.167, 0.125, 0.1, 0.0833, 0.0714, 0.0625])


def kowosb(n: int = 4) -> ProblemInstance:
    """Kowalik-Osborne: 11 residuals y_i - x1 (u_i^2 + u_i x2) / (u_i^2 + u_i x3 + x4).

    n = 4, start (0.25, 0.39, 0.415, 0.39).
    """
    if n != 4:
        raise ValueError("kowosb is defined for n = 4 only")
    y, u = _KOWOSB_Y, _KOWOSB_U

    def parts(x):
        num = u * u + u * x[1]
        den = u * u + u * x[2] + x[3]
        return num, den

    def residual(x):
        num, den = parts(x)
        return y - x[0] * num / den

    def jac(x):
        num, den = parts(x)
        dm = np.stack(
            [num / den, x[0] * u / den, -x[0] * num * u / den**2, -x[0] * num / den**2], axis=1
        )
        return -dm

    def rhess(x, w):
        num, den = parts(x)
        x1 = x[0]
        d2, d3 = den**2, den**3
        # Hessian entries of the model term m_i; residual curvature is its negative
        e = {
            (0, 1): u / den,
            (0, 2): -num * u / d2,
            (0, 3): -num / d2,
            (1, 2): -x1 * u * u / d2,
            (1, 3): -x1 * u / d2,
            (2, 2): 2 * x1 * num * u * u / d3,
            (2, 3): 2 * x1 * num * u / d3,
            (3, 3): 2 * x1 * num / d3,
        }
        H = np.zeros((4, 4))
        for (a, c), v in e.items():
            H[a, c] -= w @ v
            if a != c:
                H[c, a] -= w @ v
        return H

    res = _dense_residuals(residual, jac, rhess)
    return _least_squares("kowosb", 4, np.array([0.25, 0.39, 0.415, 0.39]), res, known_flow=0.0)


def engval2(n: int = 3) -> ProblemInstance:
    """ENGVAL2, n = 3, start (1, 2, 0): five polynomial residuals, minimum 0."""
    if n != 3:
        raise ValueError("engval2 is defined for n = 3 only")

    def residual(x):
        a, b, c = x
        return np.array(
            [
                a * a + b * b + c * c - 1.0,
                a * a + b * b + (c - 2.0) ** 2 - 1.0,
                a + b + c - 1.0,
                a + b - c + 1.0,
                a**3 + 3.0 * b * b + (5.0 * c - a + 1.0) ** 2 - 36.0,
            ]
        )

    def jac(x):
        a, b, c = x
        t = 5.0 * c - a + 1.0
        return np.array(
            [
                [2 * a, 2 * b, 2 * c],
                [2 * a, 2 * b, 2 * (c - 2.0)],
                [1.0, 1.0, 1.0],
                [1.0, 1.0, -1.0],
                [3 * a * a - 2 * t, 6 * b, 10 * t],
            ]
        )

    def rhess(x, w):
        a = x[0]
        H = 2.0 * (w[0] + w[1]) * np.eye(3)
        H += w[4] * np.array([[6 * a + 2, 0, -10], [0, 6, 0], [-10, 0, 50]], dtype=float)
        return H

    res = _dense_residuals(residual, jac, rhess)
    return _least_squares("engval2", 3, np.array([1.0, 2.0, 0.0]), res, known_flow=0.0)


def arglina(n: int = 10, m: int | None = None) -> ProblemInstance:
    """Linear function, full rank: m >= n residuals, start at ones.

    r_i = x_i - (2/m) sum x - 1 for i <= n, and -(2/m) sum x - 1 beyond.
    """
    m = 2 * n if m is None else m
    if m < n:
        raise ValueError("arglina needs m >= n")

    def residual(x):
        r = np.full(m, -2.0 * x.sum() / m - 1.0)
        r[:n] += x
        return r

    def jvp(x, V):
        out = np.repeat(-2.0 * V.sum(axis=0, keepdims=True) / m, m, axis=0)
        out[:n] += V
        return out

    def vjp(x, W):
        return W[:n] - 2.0 * W.sum(axis=0, keepdims=True) / m

    prob = _least_squares("arglina", n, np.ones(n), Residuals(residual, jvp, vjp), known_flow=float(m - n))
    prob.known_Lp = {2: 0.0}
    return prob


def linear_least_squares(J: Array, b: Array, x0: Array | None = None) -> ProblemInstance:
    """f(x) = 0.5 ||J x - b||^2, whose Hessian and Gauss-Newton matrix are J^T J."""
    J = np.asarray(J, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.sqrt(0.5)

    res = Residuals(
        lambda x: c * (J @ x - b),
        lambda x, V: c * (J @ V),
        lambda x, W: c * (J.T @ W),
    )
    n = J.shape[1]
    x0 = np.zeros(n) if x0 is None else x0
    prob = _least_squares("linls", n, x0, res, known_flow=0.0)
    prob.known_Lp = {1: float(np.linalg.norm(J.T @ J, 2)), 2: 0.0}
    return prob


REGISTRY: dict[str, Callable[..., ProblemInstance]] = {
    "rosenbr": rosenbr,
    "arwhead": arwhead,
    "broyden3d": broyden3d,
    "tridia": tridia,
    "eg2": eg2,
    "dixmaana": dixmaana,
    "helix": helix,
    "kowosb": kowosb,
    "engval2": engval2,
    "arglina": arglina,
}

# desk-scale base dimensions
DEFAULT_NHAT = {
    "rosenbr": 2,
    "arwhead": 10,
    "broyden3d": 10,
    "tridia": 10,
    "eg2": 10,
    "dixmaana": 12,
    "helix": 3,
    "kowosb": 4,
    "engval2": 3,
    "arglina": 10,
}


def make_problem(name: str, n_hat: int | None = None) -> ProblemInstance:
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise UnknownProblemError(f"unknown problem {name!r}; known: {sorted(REGISTRY)}") from None
    n_hat = DEFAULT_NHAT[name] if n_hat is None else int(n_hat)
    if n_hat < 1:
        raise ValueError(f"invalid dimension {n_hat} for {name}")
    return factory(n_hat)


# ---------------------------------------------------------------------------
# Orthonormal embedding
# ---------------------------------------------------------------------------


def dct_columns(n: int, k: int) -> Array:
    """First k columns of the n x n orthonormal DCT-II matrix.

    Entry (r, j) is sqrt(2/n) c_r cos(pi (2 j + 1) r / (2 n)), c_0 = 1/sqrt(2).
    Built column-wise so that n x n is never formed.
    """
    r = np.arange(n)[:, None]
    j = np.arange(k)[None, :]
    A = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * j + 1) * r / (2 * n))
    A[0] /= np.sqrt(2.0)
    return A


@dataclass
class EmbeddedProblem(ProblemInstance):
    base: ProblemInstance | None = None
    A: Array | None = field(default=None, repr=False)


def embed(base: ProblemInstance, n: int, transform: str = "dct") -> EmbeddedProblem:
    """Lift ``base`` to dimension n through F(x) = f(A^T x) with A^T A = I.

    The lifted Hessian A H A^T has rank at most ``base.n``.
    """
    if transform != "dct":
        raise ValueError(f"unsupported transform {transform!r}")
    if n < base.n:
        raise ValueError(f"cannot embed dimension {base.n} into {n}")
    A = dct_columns(n, base.n)
    f_hat, g_hat, h_hat, gn_hat = base.f_oracle, base.grad_oracle, base.hvp_oracle, base.gn_oracle

    def grad(x):
        return A @ g_hat(A.T @ x)

    def hvp(x, V):
        return A @ h_hat(A.T @ x, A.T @ V)

    def lifted_gn(x, V):
        return A @ gn_hat(A.T @ x, A.T @ V)

    return EmbeddedProblem(
        name=base.name,
        n=n,
        x0=A @ base.x0,
        grad_oracle=grad,
        hvp_oracle=hvp,
        f_oracle=lambda x: f_hat(A.T @ x),
        known_Lp=dict(base.known_Lp),
        known_flow=base.known_flow,
        known_kg=base.known_kg,
        gn_oracle=None if gn_hat is None else lifted_gn,
        base=base,
        A=A,
    )


def make_embedded(name: str, n_hat: int | None = None, n: int | None = None, factor: int = 100):
    base = make_problem(name, n_hat)
    return embed(base, factor * base.n if n is None else n)


# ---------------------------------------------------------------------------
# Finite-difference validation
# ---------------------------------------------------------------------------


@dataclass
class DerivativeReport:
    grad_error: float
    hvp_error: float
    symmetry_error: float
    h: float
    tol: float = 1e-5

    @property
    def passed(self) -> bool:
        return self.grad_error <= self.tol and self.hvp_error <= self.tol


def fd_step(x: Array) -> float:
    return np.finfo(float).eps ** (1.0 / 3.0) * (1.0 + np.max(np.abs(x)))


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(1.0, np.linalg.norm(b)))


def check_derivatives(
    problem: ProblemInstance, x: Array, h: float | None = None, rng=None, tol: float = 1e-5
) -> DerivativeReport:
    """Compare the oracles against central differences.

    The gradient is checked coordinate-wise against differences of the
    objective; Hessian-vector products along a random direction against
    differences of the gradient oracle. The objective is read through
    ``f_oracle`` directly so the diagnostic call counter is untouched.
    """
    x = np.asarray(x, dtype=float)
    h = fd_step(x) if h is None else h
    if h <= 0:
        raise ValueError("h must be positive")
    rng = np.random.default_rng(rng)
    f = problem.f_oracle
    g = problem.grad_oracle(x)
    v = rng.standard_normal(problem.n)
    v /= np.linalg.norm(v)
    u = rng.standard_normal(problem.n)
    u /= np.linalg.norm(u)
    Hv = problem.hvp_oracle(x, v)
    Hu = problem.hvp_oracle(x, u)
    for out in (g, Hv, Hu):
        if not np.all(np.isfinite(out)):
            raise DerivativeCheckError(f"non-finite oracle output for {problem.name}")

    g_fd = np.empty(problem.n)
    e = np.zeros(problem.n)
    for i in range(problem.n):
        e[i] = h
        g_fd[i] = (f(x + e) - f(x - e)) / (2.0 * h)
        e[i] = 0.0
    Hv_fd = (problem.grad_oracle(x + h * v) - problem.grad_oracle(x - h * v)) / (2.0 * h)

    a, b = u @ Hv, v @ Hu
    sym = abs(a - b) / max(1.0, abs(a), abs(b))
    return DerivativeReport(_rel(g, g_fd), _rel(Hv, Hv_fd), sym, h, tol)
