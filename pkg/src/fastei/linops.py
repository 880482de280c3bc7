"""Linear forward operators, their adjoints, and approximate pseudo-inverses.

Every operator is a :class:`LinearOperator` bundling four linear maps:
``apply`` (image -> measurement), ``adjoint`` (measurement -> image),
``pinv`` (approximate pseudo-inverse, used to back-project measurements into
the image domain), and ``pinv_adjoint`` (transpose of ``pinv``, needed when
gradients must flow through the back-projection).

Operators are immutable after construction and hold no mutable state, so a
single instance can be shared freely across threads and training loops.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError

Array = np.ndarray


@dataclass(frozen=True)
class LinearOperator:
    """A linear map between image space and measurement space.

    Parameters
    ----------
    in_shape : tuple of int
        Image dimensions, e.g. ``(H, W)``.
    out_shape : tuple of int
        Measurement dimensions, e.g. ``(num_angles, det_count)`` for a
        sinogram or ``(m,)`` for a generic linear sketch.
    apply, adjoint, pinv, pinv_adjoint : callable
        The four linear maps. ``pinv_adjoint`` may be ``None`` for operators
        whose back-projection never needs a transpose.
    name : str
        Human-readable identifier, recorded in run manifests.
    meta : dict
        Construction details (angle set, detector count, normalization
        scale, ...) for reproducibility.
    """

    in_shape: Tuple[int, ...]
    out_shape: Tuple[int, ...]
    apply: Callable[[Array], Array]
    adjoint: Callable[[Array], Array]
    pinv: Callable[[Array], Array]
    pinv_adjoint: Optional[Callable[[Array], Array]] = None
    name: str = "linop"
    meta: dict = field(default_factory=dict)

    def check_in(self, x: Array) -> Array:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.in_shape:
            raise ValueError(
                f"{self.name}: expected image of shape {self.in_shape}, got {x.shape}"
            )
        return x

    def check_out(self, y: Array) -> Array:
        y = np.asarray(y, dtype=np.float64)
        if y.shape != self.out_shape:
            raise ValueError(
                f"{self.name}: expected measurement of shape {self.out_shape}, got {y.shape}"
            )
        return y


@dataclass(frozen=True)
class MeasurementModel:
    """Forward physics plus an additive Gaussian noise level.

    ``noise_std`` is expressed in measurement units; zero gives deterministic
    measurements.
    """

    operator: LinearOperator
    noise_std: float = 0.0

    def __post_init__(self):
        if self.noise_std < 0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std}")


def _spectral_norm(matvec, rmatvec, n: int, iters: int = 64) -> float:
    """Largest singular value via power iteration on A^T A (deterministic start)."""
    v = np.full(n, 1.0 / np.sqrt(n))
    s = 0.0
    for _ in range(iters):
        w = rmatvec(matvec(v))
        s = np.sqrt(float(np.dot(w, v)))
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0
        v = w / nw
    return s


# ---------------------------------------------------------------------------
# Dense matrices (oracle fixtures) and Gaussian sketches
# ---------------------------------------------------------------------------

def make_dense_operator(matrix: Array, name: str = "dense") -> LinearOperator:
    """Wrap an explicit m x n matrix as a LinearOperator on flat vectors.

    The pseudo-inverse is the Moore-Penrose inverse obtained from a direct
    least-squares factorization, precomputed once. Images are 1-D vectors of
    length n; measurements are 1-D vectors of length m.
    """
    M = np.asarray(matrix, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError(f"dense operator needs a 2-D matrix, got ndim={M.ndim}")
    if not np.all(np.isfinite(M)):
        raise ValueError("dense operator matrix contains non-finite entries")
    m, n = M.shape
    P = np.linalg.pinv(M)

    return LinearOperator(
        in_shape=(n,),
        out_shape=(m,),
        apply=lambda x: M @ np.asarray(x, dtype=np.float64).ravel(),
        adjoint=lambda y: M.T @ np.asarray(y, dtype=np.float64).ravel(),
        pinv=lambda y: P @ np.asarray(y, dtype=np.float64).ravel(),
        pinv_adjoint=lambda x: P.T @ np.asarray(x, dtype=np.float64).ravel(),
        name=name,
        meta={"kind": "dense", "matrix": M},
    )


def make_gaussian_operator(image_size: int, num_measurements: int, seed: int = 0) -> LinearOperator:
    """Compressive Gaussian measurement operator on ``image_size``-square images.

    Entries are i.i.d. N(0, 1/m) so the operator has roughly unit row norms.
    """
    if image_size <= 0 or num_measurements <= 0:
        raise ConfigError("image_size and num_measurements must be positive")
    n = image_size * image_size
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((num_measurements, n)) / np.sqrt(num_measurements)
    P = np.linalg.pinv(M)
    shape = (image_size, image_size)

    return LinearOperator(
        in_shape=shape,
        out_shape=(num_measurements,),
        apply=lambda x: M @ np.asarray(x, dtype=np.float64).ravel(),
        adjoint=lambda y: (M.T @ np.asarray(y, dtype=np.float64)).reshape(shape),
        pinv=lambda y: (P @ np.asarray(y, dtype=np.float64)).reshape(shape),
        pinv_adjoint=lambda x: P.T @ np.asarray(x, dtype=np.float64).ravel(),
        name="gaussian",
        meta={"kind": "gaussian", "seed": seed},
    )


# ---------------------------------------------------------------------------
# Parallel-beam Radon transform
# ---------------------------------------------------------------------------

def detector_count(image_size: int) -> int:
    """Detector bins spanning the image diagonal (odd, so t=0 hits a bin center)."""
    det = int(np.ceil(image_size * np.sqrt(2.0)))
    if det % 2 == 0:
        det += 1
    return det


def _radon_matrix(image_size: int, angles_deg: Sequence[float]) -> Tuple[sp.csr_matrix, int]:
    """Pixel-driven parallel-beam system matrix.

    Each pixel center is projected onto the detector axis at every angle and
    splat onto the two nearest bins with linear weights. Detector spacing is
    one pixel; the rotation center is the image center at (H-1)/2, (W-1)/2.
    """
    n = image_size
    det = detector_count(n)
    c = (n - 1) / 2.0
    dc = (det - 1) / 2.0
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    x = (jj - c).ravel()
    y = (c - ii).ravel()
    pix = np.arange(n * n)
    rows, cols, vals = [], [], []
    for a, ang in enumerate(np.deg2rad(np.asarray(angles_deg, dtype=np.float64))):
        t = x * np.cos(ang) + y * np.sin(ang) + dc
        t0 = np.floor(t).astype(np.int64)
        w1 = t - t0
        for tt, ww in ((t0, 1.0 - w1), (t0 + 1, w1)):
            ok = (tt >= 0) & (tt < det)
            rows.append(a * det + tt[ok])
            cols.append(pix[ok])
            vals.append(ww[ok])
    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(len(angles_deg) * det, n * n),
    )
    return A, det


def _ramp_filter_matrix(det: int) -> Array:
    """Dense det x det matrix applying the zero-padded Ram-Lak ramp filter.

    Built explicitly so the FBP map and its exact transpose are both plain
    matrix products.
    """
    pad = int(2 ** np.ceil(np.log2(max(64, 2 * det))))
    ramp = 2.0 * np.abs(np.fft.rfftfreq(pad))
    eye = np.zeros((det, pad))
    eye[:, :det] = np.eye(det)
    filt = np.fft.irfft(np.fft.rfft(eye, axis=1) * ramp, n=pad, axis=1)[:, :det]
    return filt.T.copy()


def make_radon_operator(
    image_size: int,
    num_angles: int,
    angle_set: Optional[Sequence[float]] = None,
    normalize: bool = True,
) -> LinearOperator:
    """Discrete parallel-beam Radon transform with FBP pseudo-inverse.

    Parameters
    ----------
    image_size : int
        Side length of the square image, at least 8.
    num_angles : int
        Number of projection angles; ignored if ``angle_set`` is given.
    angle_set : sequence of float, optional
        Explicit angles in degrees, each in [0, 180). Defaults to
        ``num_angles`` uniformly spaced angles over [0, 180).
    normalize : bool
        Rescale the operator to unit spectral norm (the scale is recorded in
        ``meta['norm_scale']``). Uniform step sizes for the latent solvers
        assume an operator of order-one norm, so this is on by default.

    The adjoint is the unfiltered back-projection; ``pinv`` is filtered
    back-projection with a Ram-Lak ramp filter and the classical
    ``pi / (2 K)`` angular weighting.
    """
    if image_size < 8:
        raise ConfigError(f"image_size must be >= 8, got {image_size}")
    if angle_set is None:
        if num_angles < 1:
            raise ConfigError(f"num_angles must be >= 1, got {num_angles}")
        angle_set = np.arange(num_angles) * 180.0 / num_angles
    angle_set = np.asarray(angle_set, dtype=np.float64)
    if angle_set.size < 1:
        raise ConfigError("angle_set must contain at least one angle")
    if np.any(angle_set < 0) or np.any(angle_set >= 180):
        raise ConfigError("angles must lie in [0, 180) degrees")

    n = image_size
    K = angle_set.size
    A, det = _radon_matrix(n, angle_set)
    At = A.T.tocsr()
    F = _ramp_filter_matrix(det)
    fbp_weight = np.pi / (2.0 * K)

    scale = _spectral_norm(lambda v: A @ v, lambda w: At @ w, n * n) if normalize else 1.0
    if scale <= 0:
        scale = 1.0
    inv_scale = 1.0 / scale

    in_shape = (n, n)
    out_shape = (K, det)

    def apply(x: Array) -> Array:
        return (inv_scale * (A @ np.asarray(x, dtype=np.float64).ravel())).reshape(out_shape)

    def adjoint(y: Array) -> Array:
        return (inv_scale * (At @ np.asarray(y, dtype=np.float64).ravel())).reshape(in_shape)

    def pinv(y: Array) -> Array:
        s = scale * np.asarray(y, dtype=np.float64).reshape(K, det)
        filtered = s @ F.T
        return (fbp_weight * (At @ filtered.ravel())).reshape(in_shape)

    def pinv_adjoint(x: Array) -> Array:
        z = (A @ np.asarray(x, dtype=np.float64).ravel()).reshape(K, det)
        return (scale * fbp_weight) * (z @ F)

    return LinearOperator(
        in_shape=in_shape,
        out_shape=out_shape,
        apply=apply,
        adjoint=adjoint,
        pinv=pinv,
        pinv_adjoint=pinv_adjoint,
        name="radon",
        meta={
            "kind": "radon",
            "angles_deg": angle_set,
            "detector_count": det,
            "detector_spacing": 1.0,
            "interpolation": "linear (pixel-driven splat)",
            "fbp_filter": "ram-lak",
            "norm_scale": scale,
            "geometry": "parallel-beam",
        },
    )


# ---------------------------------------------------------------------------
# Inpainting masks
# ---------------------------------------------------------------------------

def make_inpainting_operator(image_size: int, mask: Array) -> LinearOperator:
    """Elementwise binary mask; adjoint and pseudo-inverse both zero-fill."""
    mask = np.asarray(mask)
    shape = (image_size, image_size)
    if mask.shape != shape:
        raise ConfigError(f"mask shape {mask.shape} does not match image shape {shape}")
    if not np.all((mask == 0) | (mask == 1)):
        raise ConfigError("mask must be binary (0/1 entries)")
    m = mask.astype(np.float64)

    def project(z: Array) -> Array:
        z = np.asarray(z, dtype=np.float64)
        if z.shape != shape:
            raise ValueError(f"inpainting: expected shape {shape}, got {z.shape}")
        return m * z

    return LinearOperator(
        in_shape=shape,
        out_shape=shape,
        apply=project,
        adjoint=project,
        pinv=project,
        pinv_adjoint=project,
        name="inpainting",
        meta={"kind": "inpainting", "kept_fraction": float(m.mean())},
    )


# ---------------------------------------------------------------------------
# Measurement synthesis
# ---------------------------------------------------------------------------

def measure(model: MeasurementModel, x: Array, seed: int) -> Array:
    """y = A x + noise_std * eps, with eps a standard-normal draw seeded by ``seed``.

    Deterministic given (x, seed); noise_std = 0 returns A x exactly.
    """
    op = model.operator
    x = op.check_in(x)
    y = op.apply(x)
    if model.noise_std > 0:
        rng = np.random.default_rng(seed)
        y = y + model.noise_std * rng.standard_normal(op.out_shape)
    return y


def operator_norm(op: LinearOperator, iters: int = 64) -> float:
    """Spectral norm of a LinearOperator via deterministic power iteration."""
    n = int(np.prod(op.in_shape))
    return _spectral_norm(
        lambda v: op.apply(v.reshape(op.in_shape)).ravel(),
        lambda w: op.adjoint(w.reshape(op.out_shape)).ravel(),
        n,
        iters,
    )


def adjoint_mismatch(op: LinearOperator, seed: int = 0, trials: int = 20) -> float:
    """Worst relative error of <Ax, y> vs <x, A^T y> over random vector pairs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(op.in_shape)
        y = rng.standard_normal(op.out_shape)
        ax = op.apply(x)
        aty = op.adjoint(y)
        lhs = float(np.sum(ax * y))
        rhs = float(np.sum(x * aty))
        denom = float(np.linalg.norm(ax) * np.linalg.norm(y)) or 1.0
        worst = max(worst, abs(lhs - rhs) / denom)
    return worst
