"""Inner-solver contracts: NAG, exact quadratic solve, PnP step, multiplier."""

import numpy as np
import pytest

from fastei import linops, solvers
from fastei.denoisers import get_denoiser
from fastei.errors import ConfigError, DivergenceError


def _normalized_instance(seed, m=12, n=20, lam=1.0):
    """Random dense operator scaled to order-one spectral norm, plus y/anchor."""
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((m, n))
    M /= np.linalg.norm(M, 2)
    M *= rng.uniform(0.8, 1.5)
    op = linops.make_dense_operator(M)
    y = rng.standard_normal(m)
    anchor = rng.standard_normal(n)
    return solvers.QuadraticSubproblem(op, y, anchor, lam)


# ---------------------------------------------------------------------------
# NAG
# ---------------------------------------------------------------------------

def test_nag_zero_iterations_returns_u0():
    u0 = np.array([1.0, 2.0, 3.0])
    u, v = solvers.nag_minimize(lambda u: u, J=0, u0=u0)
    assert np.array_equal(u, u0)
    assert np.array_equal(v, np.zeros(3))


def test_nag_single_step_exact():
    # f(u) = 1/2||u - c||^2 with beta=0, eta=1 lands on c in one step
    c = np.array([2.0, -1.0])
    u, _ = solvers.nag_minimize(lambda u: u - c, J=1, u0=np.zeros(2), beta=0.0, eta=1.0)
    assert np.array_equal(u, c)


def test_nag_spd_oracle():
    # random well-conditioned SPD quadratic vs direct linear solve
    rng = np.random.default_rng(42)
    n = 16
    W = rng.standard_normal((n, n))
    Q = W.T @ W / np.linalg.norm(W.T @ W, 2) + 0.1 * np.eye(n)
    b = rng.standard_normal(n)
    u_star = np.linalg.solve(Q, b)
    # eta = 1/L keeps every eigenmode of the momentum recursion contractive
    L = np.linalg.eigvalsh(Q)[-1]
    u, _ = solvers.nag_minimize(
        lambda u: Q @ u - b, J=500, u0=np.zeros(n), beta=0.1, eta=1.0 / L
    )
    assert np.linalg.norm(u - u_star) <= 1e-5 * np.linalg.norm(u_star)


def test_nag_divergence_error_carries_iteration():
    def bad_grad(u):
        return np.full_like(u, np.nan)

    with pytest.raises(DivergenceError) as exc:
        solvers.nag_minimize(bad_grad, J=5, u0=np.zeros(3))
    assert exc.value.iteration == 0


def test_nag_best_objective_envelope():
    p = _normalized_instance(7)
    objs = []
    u, _ = solvers.nag_minimize(
        p.gradient,
        J=200,
        u0=np.zeros(p.operator.in_shape),
        beta=0.1,
        eta=0.3,
        on_iterate=lambda j, u: objs.append(p.objective(u)),
    )
    best = np.minimum.accumulate(objs)
    assert np.all(np.diff(best) <= 0)
    assert best[-1] < p.objective(np.zeros(p.operator.in_shape))


def test_nag_validation():
    with pytest.raises(ConfigError):
        solvers.nag_minimize(lambda u: u, J=-1, u0=np.zeros(2))
    with pytest.raises(ConfigError):
        solvers.nag_minimize(lambda u: u, J=1, u0=np.zeros(2), beta=1.0)
    with pytest.raises(ConfigError):
        solvers.nag_minimize(lambda u: u, J=1, u0=np.zeros(2), eta=0.0)


def test_nag_state_validation():
    with pytest.raises(ConfigError):
        solvers.NagState(u=np.zeros(2), v=np.zeros(2), beta=-0.1, eta=0.1)
    with pytest.raises(ValueError):
        solvers.NagState(u=np.zeros(2), v=np.zeros(3), beta=0.1, eta=0.1)


# ---------------------------------------------------------------------------
# Exact quadratic solve
# ---------------------------------------------------------------------------

def test_exact_solve_identity_average():
    # A = I, lambda = 1: minimizer is the midpoint of y and the anchor
    op = linops.make_dense_operator(np.eye(2))
    y = np.array([4.0, 0.0])
    anchor = np.array([0.0, 2.0])
    u = solvers.solve_quadratic_exact(solvers.QuadraticSubproblem(op, y, anchor, 1.0))
    np.testing.assert_allclose(u, np.array([2.0, 1.0]), atol=1e-12)


def test_exact_solve_penalty_dominated_limit():
    p = _normalized_instance(3, lam=1e6)
    u = solvers.solve_quadratic_exact(p)
    assert np.linalg.norm(u - p.anchor) <= 1e-4 * np.linalg.norm(p.anchor)


def test_exact_solve_normal_equations_residual():
    p = _normalized_instance(9)
    u = solvers.solve_quadratic_exact(p)
    M = p.operator.meta["matrix"]
    H = M.T @ M + p.lambda_ * np.eye(M.shape[1])
    rhs = M.T @ p.y + p.lambda_ * p.anchor
    assert np.linalg.norm(H @ u - rhs) <= 1e-8 * np.linalg.norm(rhs)


def test_exact_solve_direct_vs_cg_agree():
    p = _normalized_instance(13)
    u_direct = solvers.solve_quadratic_exact(p, method="direct")
    u_cg = solvers.solve_quadratic_exact(p, method="cg", rtol=1e-13)
    assert np.abs(u_direct - u_cg).max() <= 1e-10


def test_exact_solve_is_the_minimizer():
    # strict convexity certificate: no random perturbation does better
    p = _normalized_instance(17)
    u = solvers.solve_quadratic_exact(p)
    f0 = p.objective(u)
    rng = np.random.default_rng(0)
    for _ in range(100):
        d = rng.standard_normal(u.shape)
        assert f0 <= p.objective(u + 1e-3 * d) + 1e-12


def test_quadratic_requires_positive_lambda():
    op = linops.make_dense_operator(np.eye(2))
    with pytest.raises(ConfigError):
        solvers.QuadraticSubproblem(op, np.zeros(2), np.zeros(2), 0.0)


# ---------------------------------------------------------------------------
# PnP latent step
# ---------------------------------------------------------------------------

def test_pnp_stationary_at_exact_solution():
    p = _normalized_instance(23)
    u_star = solvers.solve_quadratic_exact(p)
    d = get_denoiser("identity", 1.0)
    out = solvers.pnp_latent_step(u_star, p, np.zeros_like(u_star), gamma=0.3, d=d)
    np.testing.assert_allclose(out, u_star, atol=1e-12)


def test_pnp_gamma_zero_is_identity():
    p = _normalized_instance(29)
    u = np.random.default_rng(1).standard_normal(p.operator.in_shape)
    out = solvers.pnp_latent_step(u, p, np.zeros_like(u), gamma=0.0, d=get_denoiser("identity", 1.0))
    assert np.array_equal(out, u)


def test_pnp_fixed_point_matches_exact_solve():
    # 1e3 identity-denoiser steps converge to the closed-form minimizer
    p = _normalized_instance(31)
    rng = np.random.default_rng(2)
    L = rng.standard_normal(p.operator.in_shape)
    u = rng.standard_normal(p.operator.in_shape)
    d = get_denoiser("identity", 1.0)
    for _ in range(1000):
        u = solvers.pnp_latent_step(u, p, L, gamma=0.35, d=d)
    shifted = solvers.QuadraticSubproblem(p.operator, p.y, p.anchor + L, p.lambda_)
    u_star = solvers.solve_quadratic_exact(shifted)
    assert np.linalg.norm(u - u_star) <= 1e-4 * np.linalg.norm(u_star)


def test_pnp_step_equals_nag_step_with_zero_momentum():
    # gamma = eta, identity denoiser: both are one plain gradient step
    p = _normalized_instance(37)
    rng = np.random.default_rng(3)
    L = rng.standard_normal(p.operator.in_shape)
    u0 = rng.standard_normal(p.operator.in_shape)
    gamma = 0.2
    pnp = solvers.pnp_latent_step(u0, p, L, gamma=gamma, d=get_denoiser("identity", 1.0))
    shifted = solvers.QuadraticSubproblem(p.operator, p.y, p.anchor + L, p.lambda_)
    nag, _ = solvers.nag_minimize(shifted.gradient, J=1, u0=u0, beta=0.0, eta=gamma)
    assert np.abs(pnp - nag).max() <= 1e-12


def test_pnp_rejects_bad_shapes():
    p = _normalized_instance(41)
    u = np.zeros(p.operator.in_shape)
    with pytest.raises(ValueError):
        solvers.pnp_latent_step(u, p, np.zeros(3), gamma=0.1, d=get_denoiser("identity", 1.0))


# ---------------------------------------------------------------------------
# Multiplier update
# ---------------------------------------------------------------------------

def test_multiplier_satisfied_constraint_stays_zero():
    g = np.array([1.0, 2.0])
    assert np.array_equal(solvers.update_multiplier(np.zeros(2), g, g), np.zeros(2))


def test_multiplier_direct_arithmetic():
    out = solvers.update_multiplier(np.array([1.0, 1.0]), np.array([2.0, 2.0]), np.zeros(2))
    assert np.array_equal(out, np.array([-1.0, -1.0]))


def test_multiplier_shape_mismatch():
    with pytest.raises(ValueError):
        solvers.update_multiplier(np.zeros(2), np.zeros(3), np.zeros(2))


def test_multiplier_stationary_at_admm_fixed_point():
    # if u equals G(y), the multiplier stops moving
    L = np.array([0.5, -0.5])
    g = np.array([1.0, 1.0])
    assert np.array_equal(solvers.update_multiplier(L, g, g), L)
