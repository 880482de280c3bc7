"""Inner numerical solvers for the latent reconstruction subproblem.

The subproblem is the strictly convex quadratic

    f(u) = 1/2 ||A u - y||^2 + (lambda/2) ||u - anchor||^2

minimized either approximately (NAG, a handful of iterations per training
step) or exactly (normal equations) when an oracle is needed. The PnP step
replaces the proximal weight on the quadratic penalty with one explicit
gradient step followed by a denoiser.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import ConfigError, DivergenceError, SolverError
from .linops import LinearOperator

Array = np.ndarray


@dataclass
class NagState:
    """Iterate and velocity of the NAG loop, persisted by callers that need it."""

    u: Array
    v: Array
    beta: float
    eta: float

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise ConfigError(f"beta must lie in [0, 1), got {self.beta}")
        if self.eta <= 0:
            raise ConfigError(f"eta must be positive, got {self.eta}")
        if self.u.shape != self.v.shape:
            raise ValueError("u and v must share a shape")


@dataclass(frozen=True)
class QuadraticSubproblem:
    """f(u) = 1/2 ||Au - y||^2 + (lambda/2) ||u - anchor||^2 with lambda > 0."""

    operator: LinearOperator
    y: Array
    anchor: Array
    lambda_: float

    def __post_init__(self):
        if self.lambda_ <= 0:
            raise ConfigError(f"lambda must be positive for strict convexity, got {self.lambda_}")
        self.operator.check_out(self.y)
        self.operator.check_in(self.anchor)

    def gradient(self, u: Array) -> Array:
        op = self.operator
        return op.adjoint(op.apply(u) - self.y) + self.lambda_ * (u - self.anchor)

    def objective(self, u: Array) -> float:
        op = self.operator
        r = op.apply(u) - self.y
        d = u - self.anchor
        return 0.5 * float(np.sum(r * r)) + 0.5 * self.lambda_ * float(np.sum(d * d))


def nag_minimize(
    objective_gradient: Callable[[Array], Array],
    J: int,
    u0: Array,
    v0: Optional[Array] = None,
    beta: float = 0.1,
    eta: float = 0.01,
    on_iterate: Optional[Callable[[int, Array], None]] = None,
) -> Tuple[Array, Array]:
    """Exactly J Nesterov accelerated gradient iterations; returns (u_J, v_J).

    Each iteration evaluates the gradient at the look-ahead point u - beta*v,
    then updates v <- beta*v + eta*grad and u <- u - v. J=0 returns u0 and v0
    untouched. A non-finite gradient raises a divergence error carrying the
    iteration index.
    """
    if J < 0:
        raise ConfigError(f"J must be >= 0, got {J}")
    if not 0.0 <= beta < 1.0:
        raise ConfigError(f"beta must lie in [0, 1), got {beta}")
    if eta <= 0:
        raise ConfigError(f"eta must be positive, got {eta}")
    u = np.array(u0, dtype=np.float64, copy=True)
    v = np.zeros_like(u) if v0 is None else np.array(v0, dtype=np.float64, copy=True)
    if u.shape != v.shape:
        raise ValueError(f"u0 and v0 shapes differ: {u.shape} vs {v.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(J):
            g = objective_gradient(u - beta * v)
            if not np.all(np.isfinite(g)):
                raise DivergenceError(f"NAG gradient non-finite at iteration {j}", iteration=j)
            v = beta * v + eta * g
            u = u - v
            if on_iterate is not None:
                on_iterate(j, u)
    return u, v


def solve_quadratic_exact(p: QuadraticSubproblem, method: str = "auto", rtol: float = 1e-8) -> Array:
    """Minimizer (A^T A + lambda I)^{-1} (A^T y + lambda * anchor).

    ``method='direct'`` forms the normal-equations matrix (needs the dense
    matrix recorded by the operator); ``'cg'`` runs conjugate gradients on
    the same system to relative residual ``rtol`` (default 1e-8, max 10*n
    iterations); ``'auto'`` picks direct when a dense matrix is available.
    """
    op = p.operator
    n = int(np.prod(op.in_shape))
    rhs = op.adjoint(p.y) + p.lambda_ * p.anchor

    if method not in ("auto", "direct", "cg"):
        raise ConfigError(f"unknown method {method!r}")
    if method == "auto":
        method = "direct" if "matrix" in op.meta else "cg"

    if method == "direct":
        M = op.meta.get("matrix")
        if M is None:
            raise ConfigError("direct solve requires an operator with an explicit matrix")
        H = M.T @ M + p.lambda_ * np.eye(n)
        return np.linalg.solve(H, rhs.ravel()).reshape(op.in_shape)

    import scipy.sparse.linalg as spla

    def hess_mv(v: Array) -> Array:
        img = v.reshape(op.in_shape)
        return (op.adjoint(op.apply(img)) + p.lambda_ * img).ravel()

    H = spla.LinearOperator((n, n), matvec=hess_mv, dtype=np.float64)
    b = rhs.ravel()
    u, info = spla.cg(H, b, rtol=rtol, atol=0.0, maxiter=10 * n)
    if info != 0:
        residual = float(np.linalg.norm(hess_mv(u) - b) / np.linalg.norm(b))
        raise SolverError(f"conjugate gradient did not converge (info={info})", residual=residual)
    return u.reshape(op.in_shape)


def pnp_latent_step(
    u_k: Array,
    p: QuadraticSubproblem,
    multiplier: Array,
    gamma: float,
    d,
) -> Array:
    """One gradient step on the augmented objective, then the denoiser.

    Returns D(u_k - gamma * [A^T(A u_k - y) + lambda (u_k - anchor - L)]),
    where ``p.anchor`` is the network output G(y) and ``multiplier`` is the
    scaled multiplier L. ``d`` is any object with a ``denoise(image)`` method.
    """
    if gamma < 0:
        raise ConfigError(f"gamma must be >= 0, got {gamma}")
    op = p.operator
    u_k = op.check_in(u_k)
    if multiplier.shape != u_k.shape:
        raise ValueError(f"multiplier shape {multiplier.shape} does not match {u_k.shape}")
    grad_mc = op.adjoint(op.apply(u_k) - p.y)
    inner = u_k - gamma * (grad_mc + p.lambda_ * (u_k - p.anchor - multiplier))
    if not np.all(np.isfinite(inner)):
        raise DivergenceError("PnP latent step produced non-finite values")
    return d.denoise(inner)


def update_multiplier(L_k: Array, u_next: Array, g_of_y: Array) -> Array:
    """Scaled-multiplier update L - u + G(y)."""
    L_k = np.asarray(L_k, dtype=np.float64)
    if L_k.shape != u_next.shape or L_k.shape != g_of_y.shape:
        raise ValueError(
            f"shape mismatch: L {L_k.shape}, u {u_next.shape}, G(y) {g_of_y.shape}"
        )
    return L_k - u_next + g_of_y
