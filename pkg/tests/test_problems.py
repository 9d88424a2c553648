import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skoffar.problems import (
    DEFAULT_NHAT,
    REGISTRY,
    DerivativeCheckError,
    ProblemInstance,
    UnknownProblemError,
    check_derivatives,
    dct_columns,
    embed,
    linear_least_squares,
    make_embedded,
    make_problem,
)
from skoffar.solver import SolverConfig, run


def fd_gradient(f, x, h=1e-6):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_oracles_match_finite_differences_at_random_points(name):
    prob = make_problem(name)
    rng = np.random.default_rng(hash(name) % 2**32)
    for _ in range(10):
        x = prob.x0 + 0.5 * rng.standard_normal(prob.n)
        rep = check_derivatives(prob, x, rng=rng)
        assert rep.passed, (name, rep)
        assert rep.symmetry_error <= 1e-10


def test_rosenbrock_gradient_at_minimizer_and_origin():
    prob = make_problem("rosenbr", 2)
    np.testing.assert_allclose(prob.grad_oracle(np.ones(2)), [0.0, 0.0], atol=0)
    f = lambda x: 100 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2  # noqa: E731
    oracle = fd_gradient(f, np.zeros(2))
    np.testing.assert_allclose(oracle, [-2.0, 0.0], atol=1e-8)
    np.testing.assert_allclose(prob.grad_oracle(np.zeros(2)), oracle, atol=1e-8)


def test_tridia_is_quadratic_with_constant_hessian():
    prob = make_problem("tridia")
    assert prob.known_Lp[2] == 0.0
    rng = np.random.default_rng(0)
    V = np.eye(prob.n)
    H1 = prob.hvp_oracle(rng.standard_normal(prob.n), V)
    H2 = prob.hvp_oracle(rng.standard_normal(prob.n), V)
    np.testing.assert_allclose(H1, H2, atol=1e-12)


def test_quadratic_hvp_exact_under_finite_differences():
    prob = make_problem("tridia")
    rep = check_derivatives(prob, prob.x0, h=1e-3)
    assert rep.hvp_error < 1e-10


def test_perturbed_oracles_fail_the_check():
    base = make_problem("rosenbr", 2)
    assert check_derivatives(base, base.x0).passed
    # relative perturbation of 1e-3
    bad_g = ProblemInstance("bad", 2, base.x0, lambda x: base.grad_oracle(x) * (1 + 1e-3),
                            base.hvp_oracle, base.f_oracle)
    assert not check_derivatives(bad_g, base.x0).passed
    bad_h = ProblemInstance("bad", 2, base.x0, base.grad_oracle,
                            lambda x, v: base.hvp_oracle(x, v) * (1 + 1e-3), base.f_oracle)
    assert not check_derivatives(bad_h, base.x0).passed


def test_non_finite_oracle_output_raises():
    base = make_problem("rosenbr", 2)
    bad = ProblemInstance("bad", 2, base.x0, lambda x: np.full(2, np.nan),
                          base.hvp_oracle, base.f_oracle)
    with pytest.raises(DerivativeCheckError):
        check_derivatives(bad, base.x0)
    with pytest.raises(ValueError):
        check_derivatives(base, base.x0, h=0.0)


def test_registry_errors():
    with pytest.raises(UnknownProblemError):
        make_problem("nope")
    with pytest.raises(ValueError):
        make_problem("helix", 4)
    with pytest.raises(ValueError):
        make_problem("kowosb", 3)


def test_required_registry_entries_present():
    for name in ("rosenbr", "arwhead", "broyden3d", "tridia", "eg2", "dixmaana", "helix",
                 "kowosb"):
        assert make_problem(name).n == DEFAULT_NHAT[name]


def test_dct_columns_orthonormal_and_match_full_transform():
    from scipy.fft import dct

    n, k = 37, 5
    A = dct_columns(n, k)
    np.testing.assert_allclose(A.T @ A, np.eye(k), atol=1e-12)
    full = dct(np.eye(n), type=2, norm="ortho", axis=0)
    np.testing.assert_allclose(A, full[:, :k], atol=1e-12)


def test_embedding_rejects_smaller_dimension():
    with pytest.raises(ValueError):
        embed(make_problem("arwhead", 10), 5)


def test_square_embedding_is_a_rotation():
    base = make_problem("rosenbr", 2)
    E = embed(base, 2)
    xh = np.array([0.3, -0.7])
    assert np.isclose(np.linalg.norm(E.grad_oracle(E.A @ xh)), np.linalg.norm(base.grad_oracle(xh)))


def test_embedded_hessian_rank_at_most_base_dimension():
    E = make_embedded("rosenbr", 2, 10)
    H = E.hvp_oracle(E.x0 + 0.1, np.eye(10))
    sv = np.linalg.svd(H, compute_uv=False)
    assert np.sum(sv > 1e-10 * sv[0]) <= 2


@settings(max_examples=10, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4))
def test_embedded_objective_matches_base(xh):
    base = make_problem("kowosb")
    E = embed(base, 40)
    xh = np.array(xh)
    assert abs(E.f_oracle(E.A @ xh) - base.f_oracle(xh)) <= 1e-12 * max(1.0, abs(base.f_oracle(xh)))


def test_embedded_start_point_and_derivatives():
    E = make_embedded("broyden3d", 10, 60)
    np.testing.assert_allclose(E.x0, E.A @ E.base.x0)
    assert check_derivatives(E, E.x0 + 0.01).passed


def test_hvp_batched_and_linear(rng):
    prob = make_problem("dixmaana")
    x = prob.x0 + 0.1 * rng.standard_normal(prob.n)
    V = rng.standard_normal((prob.n, 3))
    batched = prob.hvp_oracle(x, V)
    cols = np.stack([prob.hvp_oracle(x, V[:, j]) for j in range(3)], axis=1)
    np.testing.assert_allclose(batched, cols, atol=1e-12)
    np.testing.assert_allclose(prob.hvp_oracle(x, 2 * V[:, 0] - V[:, 1]),
                               2 * cols[:, 0] - cols[:, 1], atol=1e-10)


def test_linear_least_squares_constants(rng):
    J = rng.standard_normal((8, 5))
    b = rng.standard_normal(8)
    prob = linear_least_squares(J, b)
    assert np.isclose(prob.known_Lp[1], np.linalg.norm(J.T @ J, 2))
    np.testing.assert_allclose(prob.hvp_oracle(prob.x0, np.eye(5)), J.T @ J, atol=1e-12)
    np.testing.assert_allclose(prob.gn_oracle(prob.x0, np.eye(5)), J.T @ J, atol=1e-12)


def test_f_counter_untouched_by_solver_run():
    prob = make_embedded("arwhead", 10, 100)
    run(prob, SolverConfig(tau=0.1, seed=3))
    assert prob.f_calls == 0
    prob.diagnostic_f(prob.x0)
    assert prob.f_calls == 1
