"""Invertible image transformations and their sampling.

Three families are registered: ``rotation`` (about the image center),
``shift`` (circular), and ``flip``. Shifts, flips, and rotations by
multiples of 90 degrees are exact permutations of the pixel grid and
invert bit-exactly. Arbitrary-angle rotations use bilinear interpolation
with zero padding outside the frame; their inverse is the rotation by the
negated angle, which round-trips only approximately (interior error at the
percent level on smooth images).

Each interpolated rotation is materialized once per image shape as a sparse
matrix, so its exact transpose is available to gradient-based callers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError

Array = np.ndarray

GROUP_FAMILIES = ("rotation", "shift", "flip")
FLIP_KINDS = ("identity", "horizontal", "vertical")


@dataclass
class GroupAction:
    """One sampled transformation T with an exact inverse.

    ``parameter`` is an angle in degrees for rotations, an ``(dy, dx)``
    offset for shifts, or one of ``identity`` / ``horizontal`` / ``vertical``
    for flips. The action itself is immutable; ``_matrices`` only memoizes
    the interpolation matrix per image shape.
    """

    group_id: str
    parameter: object
    _matrices: dict = field(default_factory=dict, repr=False, compare=False)

    def matrix(self, shape: Tuple[int, int], inverse: bool = False) -> sp.csr_matrix:
        """Sparse interpolation matrix of this rotation (or its inverse) on ``shape``."""
        if self.group_id != "rotation":
            raise ValueError("matrix() is only defined for interpolated rotations")
        angle = -float(self.parameter) if inverse else float(self.parameter)
        key = (shape, angle % 360.0)
        if key not in self._matrices:
            self._matrices[key] = _rotation_matrix(shape, angle)
        return self._matrices[key]


def rotation_action(angle_deg: float) -> GroupAction:
    return GroupAction("rotation", float(angle_deg) % 360.0)


def shift_action(dy: int, dx: int) -> GroupAction:
    return GroupAction("shift", (int(dy), int(dx)))


def flip_action(kind: str) -> GroupAction:
    if kind not in FLIP_KINDS:
        raise ConfigError(f"unknown flip kind {kind!r}, expected one of {FLIP_KINDS}")
    return GroupAction("flip", kind)


def identity_action() -> GroupAction:
    return rotation_action(0.0)


def sample_group(
    group_id: str,
    rng_seed: int,
    angles: Optional[Sequence[int]] = None,
    max_shift: int = 8,
) -> GroupAction:
    """Draw one group element uniformly, deterministically for a given seed.

    Rotations default to integer degrees from {1, ..., 360} (360 acts as the
    identity); an explicit ``angles`` sequence restricts the set. Shifts draw
    each offset uniformly from [-max_shift, max_shift].
    """
    if group_id not in GROUP_FAMILIES:
        raise ConfigError(f"unknown group family {group_id!r}, expected one of {GROUP_FAMILIES}")
    rng = np.random.default_rng(rng_seed)
    if group_id == "rotation":
        pool = np.arange(1, 361) if angles is None else np.asarray(list(angles))
        if pool.size == 0:
            raise ConfigError("rotation angle set is empty")
        return rotation_action(float(pool[rng.integers(pool.size)]))
    if group_id == "shift":
        dy, dx = rng.integers(-max_shift, max_shift + 1, size=2)
        return shift_action(int(dy), int(dx))
    return flip_action(FLIP_KINDS[rng.integers(len(FLIP_KINDS))])


# ---------------------------------------------------------------------------
# Application
# ---------------------------------------------------------------------------

def apply(action: GroupAction, x: Array) -> Array:
    """Transform an image by the sampled group element."""
    return _dispatch(action, np.asarray(x, dtype=np.float64), inverse=False)


def apply_inverse(action: GroupAction, x: Array) -> Array:
    """Exact group inverse of :func:`apply` (negated angle / offset, same flip)."""
    return _dispatch(action, np.asarray(x, dtype=np.float64), inverse=True)


def _dispatch(action: GroupAction, x: Array, inverse: bool) -> Array:
    if x.ndim != 2:
        raise ValueError(f"group actions act on 2-D images, got shape {x.shape}")
    if action.group_id == "rotation":
        angle = float(action.parameter) % 360.0
        if inverse:
            angle = (-angle) % 360.0
        if angle == 0.0:
            return x.copy()
        if angle % 90.0 == 0.0:
            return np.rot90(x, k=int(angle // 90)).copy()
        return (action.matrix(x.shape, inverse=inverse) @ x.ravel()).reshape(x.shape)
    if action.group_id == "shift":
        dy, dx = action.parameter
        if inverse:
            dy, dx = -dy, -dx
        return np.roll(x, shift=(dy, dx), axis=(0, 1))
    kind = action.parameter
    if kind == "identity":
        return x.copy()
    # flips are involutions, so the inverse is the same operation
    return np.flip(x, axis=1 if kind == "horizontal" else 0).copy()


def is_exact(action: GroupAction) -> bool:
    """True when the action is a pixel permutation (bit-exact inverse)."""
    if action.group_id == "rotation":
        return float(action.parameter) % 90.0 == 0.0
    return True


def _rotation_matrix(shape: Tuple[int, int], angle_deg: float) -> sp.csr_matrix:
    """Bilinear rotation about the image center as a sparse (HW x HW) matrix.

    Output-driven gather: each output pixel reads the four input neighbours
    of its source point under the inverse rotation; points falling outside
    the frame contribute zero. The convention matches ``np.rot90`` at exact
    multiples of 90 degrees (counterclockwise for increasing angle).
    """
    h, w = shape
    cy = (h - 1) / 2.0
    cx = (w - 1) / 2.0
    phi = np.deg2rad(angle_deg)
    cos, sin = np.cos(phi), np.sin(phi)

    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    xo = (cc - cx).ravel()
    yo = (cy - rr).ravel()
    # source point = R(-phi) applied to the output coordinate
    xs = xo * cos + yo * sin
    ys = -xo * sin + yo * cos
    col_f = xs + cx
    row_f = cy - ys

    r0 = np.floor(row_f).astype(np.int64)
    c0 = np.floor(col_f).astype(np.int64)
    fr = row_f - r0
    fc = col_f - c0

    out_idx = np.arange(h * w)
    rows, cols, vals = [], [], []
    for dr, dc, weight in (
        (0, 0, (1 - fr) * (1 - fc)),
        (0, 1, (1 - fr) * fc),
        (1, 0, fr * (1 - fc)),
        (1, 1, fr * fc),
    ):
        ri = r0 + dr
        ci = c0 + dc
        ok = (ri >= 0) & (ri < h) & (ci >= 0) & (ci < w) & (weight > 0)
        rows.append(out_idx[ok])
        cols.append((ri * w + ci)[ok])
        vals.append(weight[ok])
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(h * w, h * w),
    )
