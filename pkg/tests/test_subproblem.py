from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skoffar.subproblem import (
    SketchedModel,
    SketchResample,
    cubic_reg_exact,
    solve_2b,
    solve_p1,
    solve_p2,
    verify_conditions,
)


def bisect(fun, lo, hi, tol=1e-14):
    flo = fun(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if (fun(mid) > 0) == (flo > 0):
            lo, flo = mid, fun(mid)
        else:
            hi = mid
    return 0.5 * (lo + hi)


def cubic(g, H, sigma, u):
    return g @ u + 0.5 * u @ H @ u + sigma / 6 * np.linalg.norm(u) ** 3


def grid_min_2d(g, H, sigma, radius=2.0, pts=801):
    t = np.linspace(-radius, radius, pts)
    X, Y = np.meshgrid(t, t, indexing="ij")
    U = np.stack([X.ravel(), Y.ravel()], axis=1)
    vals = U @ g + 0.5 * np.einsum("ij,jk,ik->i", U, H, U) + sigma / 6 * np.linalg.norm(U, axis=1) ** 3
    return U[np.argmin(vals)]


def random_spd(rng, m, shift=1.0):
    A = rng.standard_normal((m, m))
    return A @ A.T + shift * np.eye(m)


# --- first-order model ------------------------------------------------------


def test_p1_diagonal_examples():
    sol = solve_p1(SketchedModel(np.array([1.0, 0.0]), np.eye(2), 2.0, degree=1))
    np.testing.assert_allclose(sol.shat, [-0.5, 0.0])
    assert sol.model_decrease == pytest.approx(0.25)
    sol = solve_p1(SketchedModel(np.array([2.0, 1.0]), np.diag([2.0, 1.0]), 1.0, degree=1), 1.0)
    np.testing.assert_allclose(sol.shat, [-1.0, -1.0])
    assert sol.gradstep_lhs == pytest.approx(np.sqrt(5))
    assert sol.gradstep_rhs == pytest.approx(np.sqrt(5))
    assert sol.cond_descent and sol.cond_gradstep


def test_p1_residual_random_spd(rng):
    for _ in range(20):
        W = random_spd(rng, 6)
        g = rng.standard_normal(6)
        sigma = rng.uniform(0.1, 10)
        sol = solve_p1(SketchedModel(g, W, sigma, degree=1), 1.0)
        assert np.linalg.norm(sigma * W @ sol.shat + g) <= 1e-10 * np.linalg.norm(g)
        assert sol.cond_descent and sol.cond_gradstep


def test_singular_gram_signals_resample():
    W = np.diag([1.0, 0.0])
    with pytest.raises(SketchResample):
        solve_p1(SketchedModel(np.ones(2), W, 1.0, degree=1))
    with pytest.raises(SketchResample):
        solve_p2(SketchedModel(np.ones(2), np.diag([1.0, 1e-14]), 1.0, Hhat=np.eye(2)), 2.0)


# --- cubic minimizer ----------------------------------------------------------


def test_cubic_zero_gradient_psd():
    np.testing.assert_array_equal(cubic_reg_exact(np.zeros(3), np.eye(3), 2.0), np.zeros(3))


def test_cubic_scalar_root_matches_bisection_oracle():
    # stationarity 1*u - 3 + 3 u^2 = 0 for u > 0
    root = bisect(lambda u: 3 * u * u + u - 3, 0.0, 2.0)
    u = cubic_reg_exact(np.array([-3.0]), np.array([[1.0]]), 6.0)
    assert u[0] == pytest.approx(root, abs=1e-9)
    assert u[0] == pytest.approx(0.84713, abs=1e-5)


def test_cubic_hard_case_matches_grid_oracle():
    g, H, sigma = np.array([0.0, 1.0]), np.diag([-2.0, 1.0]), 6.0
    u = cubic_reg_exact(g, H, sigma)
    ug = grid_min_2d(g, H, sigma)
    assert abs(abs(u[0]) - abs(ug[0])) <= 1e-2 and abs(u[1] - ug[1]) <= 1e-2
    np.testing.assert_allclose(np.abs(u), [1 / np.sqrt(3), 1 / 3], atol=1e-9)
    assert np.linalg.norm(u) == pytest.approx(2 / 3, abs=1e-9)
    assert cubic(g, H, sigma, u) <= cubic(g, H, sigma, ug) + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 2))
def test_cubic_agrees_with_grid_search(seed, m):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, m))
    H = A + A.T
    g = rng.standard_normal(m)
    sigma = rng.uniform(1.0, 10.0)
    u = cubic_reg_exact(g, H, sigma)
    if m == 1:
        t = np.linspace(-4, 4, 400_001)
        vals = g[0] * t + 0.5 * H[0, 0] * t * t + sigma / 6 * np.abs(t) ** 3
        best = t[np.argmin(vals)]
        assert abs(u[0] - best) <= 1e-3
    else:
        best = grid_min_2d(g, H, sigma, radius=4.0, pts=1601)
        # the grid value can only be above the true minimum
        assert cubic(g, H, sigma, u) <= cubic(g, H, sigma, best) + 1e-9
    resid = H @ u + g + 0.5 * sigma * np.linalg.norm(u) * u
    assert np.linalg.norm(resid) <= 1e-9 * (1 + np.linalg.norm(g))


def test_cubic_rejects_nonpositive_sigma():
    with pytest.raises(ValueError):
        cubic_reg_exact(np.ones(1), np.eye(1), 0.0)


# --- sketched cubic model ----------------------------------------------------------


def test_p2_whitened_beats_random_trial_points(rng):
    for _ in range(100):
        ell = int(rng.integers(1, 8))
        W = random_spd(rng, ell, 0.5)
        A = rng.standard_normal((ell, ell))
        model = SketchedModel(rng.standard_normal(ell), W, rng.uniform(0.1, 5.0), Hhat=A + A.T)
        sol = solve_p2(model, 1.01)
        best = -sol.model_decrease
        scale = 3 * max(1.0, np.linalg.norm(sol.shat))
        trials = scale * rng.standard_normal((1000, ell))
        vals = [-model.model_decrease(t) for t in trials]
        assert best <= min(vals) + 1e-10


def test_p2_random_instance_certified(rng):
    ell = 10
    S = rng.standard_normal((ell, 40)) / np.sqrt(ell)
    A = rng.standard_normal((40, 40))
    Hhat = S @ (A + A.T) @ S.T
    model = SketchedModel(S @ rng.standard_normal(40), S @ S.T, 3.0, Hhat=Hhat, S=S)
    sol = solve_p2(model, 1.01)
    assert sol.cond_descent and sol.cond_gradstep
    np.testing.assert_array_equal(sol.s, S.T @ sol.shat)


def test_p2_modes_coincide_for_orthonormal_rows(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((12, 4)))
    S = Q.T
    A = rng.standard_normal((4, 4))
    model = SketchedModel(rng.standard_normal(4), S @ S.T, 2.0, Hhat=A + A.T, S=S)
    a = solve_p2(model, 1.01, "whitened-exact")
    b = solve_p2(model, 1.01, "euclid-approx")
    np.testing.assert_allclose(a.shat, b.shat, atol=1e-10)


def test_p2_scalar_sketch_matches_scaled_cubic():
    w, g, h, sigma = 2.5, -1.3, 0.4, 3.0
    model = SketchedModel(np.array([g]), np.array([[w]]), sigma, Hhat=np.array([[h]]))
    sol = solve_p2(model, 1.01)
    r = np.sqrt(w)
    u = cubic_reg_exact(np.array([g / r]), np.array([[h / w]]), sigma)
    assert sol.shat[0] == pytest.approx(u[0] / r, rel=1e-12)


def test_p2_unknown_mode():
    model = SketchedModel(np.ones(2), np.eye(2), 1.0, Hhat=np.eye(2))
    with pytest.raises(ValueError):
        solve_p2(model, 1.01, "lanczos")


# --- quadratic regulariser ------------------------------------------------------------


def test_2b_examples(rng):
    g = rng.standard_normal(3)
    sol = solve_2b(SketchedModel(g, np.eye(3), 4.0, Hhat=np.zeros((3, 3)), reg_kind="quadratic"))
    np.testing.assert_allclose(sol.shat, -g / 4.0)
    sol = solve_2b(SketchedModel(np.array([2.0, 1.0]), np.eye(2), 1.0, Hhat=np.diag([1.0, 0.0]),
                                 reg_kind="quadratic"), 1.0)
    np.testing.assert_allclose(sol.shat, [-1.0, -1.0])
    assert sol.cond_descent and sol.cond_gradstep


def test_2b_residual_and_equality_random_psd(rng):
    for _ in range(20):
        F = rng.standard_normal((6, 2))
        B = F @ F.T
        W = random_spd(rng, 6)
        g = rng.standard_normal(6)
        sigma = rng.uniform(0.1, 10)
        model = SketchedModel(g, W, sigma, Hhat=B, reg_kind="quadratic")
        sol = solve_2b(model, 1.0)
        assert np.linalg.norm((B + sigma * W) @ sol.shat + g) <= 1e-10 * np.linalg.norm(g)
        assert sol.gradstep_lhs == pytest.approx(sol.gradstep_rhs, rel=1e-10)
        np.testing.assert_array_equal(solve_2b(model, 1.0).shat, sol.shat)


# --- conditions --------------------------------------------------------------------


def test_zero_step_is_not_descent():
    model = SketchedModel(np.ones(2), np.eye(2), 1.0, Hhat=np.eye(2))
    assert not verify_conditions(model, np.zeros(2), 1.5).cond_descent


def test_perturbed_minimizer_flags_match_direct_evaluation(rng):
    ell = 5
    W = random_spd(rng, ell)
    A = rng.standard_normal((ell, ell))
    H = A + A.T
    g = rng.standard_normal(ell)
    sigma = 2.0
    model = SketchedModel(g, W, sigma, Hhat=H)
    s = solve_p2(model, 1.01).shat * 1.5
    chk = verify_conditions(model, s, 1.01)
    wn = np.sqrt(s @ W @ s)
    dec = -(g @ s + 0.5 * s @ H @ s + sigma / factorial(3) * wn**3)
    lhs = np.linalg.norm(g + H @ s)
    rhs = 1.01 * sigma / 2 * wn * np.linalg.norm(W @ s)
    assert chk.model_decrease == pytest.approx(dec, rel=1e-12)
    assert chk.cond_descent == (dec > 0)
    assert chk.lhs == pytest.approx(lhs, rel=1e-12)
    assert chk.rhs == pytest.approx(rhs, rel=1e-12)
    assert chk.cond_gradstep == (lhs <= rhs)
