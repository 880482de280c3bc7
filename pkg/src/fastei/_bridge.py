"""Autograd bridges between numpy linear maps and torch tensors.

The forward physics, back-projection, and group actions are numpy code; the
EI objective differentiates through them. Each bridge wraps a linear map and
its exact transpose as a torch autograd Function, so gradients are exact
rather than re-derived from an approximate torch reimplementation.
"""

from __future__ import annotations

import numpy as np
import torch

from . import groups
from .errors import ConfigError
from .linops import LinearOperator


class _LinearMapFn(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x: torch.Tensor, fwd, bwd):
        ctx.bwd = bwd
        out = fwd(x.detach().cpu().numpy())
        return torch.from_numpy(np.ascontiguousarray(out, dtype=np.float64))

    @staticmethod
    def backward(ctx, grad: torch.Tensor):
        g = ctx.bwd(np.ascontiguousarray(grad.detach().cpu().numpy(), dtype=np.float64))
        return torch.from_numpy(np.ascontiguousarray(g, dtype=np.float64)), None, None


def apply_t(op: LinearOperator, x: torch.Tensor) -> torch.Tensor:
    """Differentiable forward map; backward applies the adjoint."""
    return _LinearMapFn.apply(x, op.apply, op.adjoint)


def adjoint_t(op: LinearOperator, y: torch.Tensor) -> torch.Tensor:
    return _LinearMapFn.apply(y, op.adjoint, op.apply)


def pinv_t(op: LinearOperator, y: torch.Tensor) -> torch.Tensor:
    """Differentiable back-projection; backward applies the pinv transpose."""
    if y.requires_grad and op.pinv_adjoint is None:
        raise ConfigError(f"operator {op.name} has no pinv_adjoint; cannot backpropagate")
    return _LinearMapFn.apply(y, op.pinv, op.pinv_adjoint)


def _group_transpose(action: groups.GroupAction, g: np.ndarray) -> np.ndarray:
    # permutation actions are orthogonal, so transpose = inverse; the
    # interpolated rotation exposes its sparse matrix for an exact transpose
    if groups.is_exact(action):
        return groups.apply_inverse(action, g)
    M = action.matrix(g.shape)
    return np.asarray((M.T @ g.ravel()).reshape(g.shape))


def group_apply_t(action: groups.GroupAction, x: torch.Tensor) -> torch.Tensor:
    """Differentiable group action; backward applies the exact transpose."""
    return _LinearMapFn.apply(
        x, lambda z: groups.apply(action, z), lambda g: _group_transpose(action, g)
    )
