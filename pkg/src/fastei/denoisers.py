"""Plug-and-play denoiser registry.

Bundled denoisers (identity, median, tv) keep the full algorithm suite
self-contained; a pretrained CNN and an external BM3D binding are optional
plug-ins. Every denoiser is a deterministic image -> image map with a
declared noise level sigma; the PnP trainers set sigma = 1 / lambda.

The median filter uses circular boundary handling, so it commutes exactly
with circular shifts; this is what makes the equivariant wrapper a no-op
for shift actions, which the trainer equivalence tests rely on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import groups
from .errors import ConfigError

Array = np.ndarray

DENOISER_NAMES = ("identity", "median", "tv", "cnn_pretrained", "bm3d_external")


@dataclass(frozen=True)
class Denoiser:
    name: str
    sigma: float
    _fn: Callable[[Array], Array]

    def denoise(self, x: Array) -> Array:
        x = np.asarray(x, dtype=np.float64)
        out = self._fn(x)
        if out.shape != x.shape:
            raise RuntimeError(f"denoiser {self.name} changed shape {x.shape} -> {out.shape}")
        return out


def _median(x: Array) -> Array:
    from scipy.ndimage import median_filter

    return median_filter(x, size=3, mode="wrap")


def _tv_factory(sigma: float) -> Callable[[Array], Array]:
    from skimage.restoration import denoise_tv_chambolle

    # strength tied to the declared noise level: weight = sigma^2
    weight = sigma * sigma

    def _tv(x: Array) -> Array:
        return denoise_tv_chambolle(x, weight=weight)

    return _tv


def _cnn_factory(weights_path: Optional[str]):
    if not weights_path:
        raise ConfigError("cnn_pretrained requires denoiser.weights_path")
    import os

    if not os.path.isfile(weights_path):
        raise FileNotFoundError(f"denoiser weights file not found: {weights_path}")
    import torch

    from .models import CnnDenoiserNet

    payload = torch.load(weights_path, map_location="cpu", weights_only=True)
    net = CnnDenoiserNet(
        channels=int(payload.get("channels", 32)), depth=int(payload.get("depth", 5))
    ).double()
    net.load_state_dict(payload["state_dict"])
    net.eval()

    def _cnn(x: Array) -> Array:
        with torch.no_grad():
            t = torch.from_numpy(np.ascontiguousarray(x, dtype=np.float64))[None, None]
            return net(t)[0, 0].numpy()

    return _cnn


def _bm3d_factory(sigma: float):
    try:
        import bm3d  # optional external plugin
    except ImportError as exc:
        raise ConfigError(
            "bm3d_external requires the optional 'bm3d' package, which is not installed"
        ) from exc

    def _bm3d(x: Array) -> Array:
        return np.asarray(bm3d.bm3d(x, sigma_psd=sigma), dtype=np.float64)

    return _bm3d


def has_bm3d() -> bool:
    try:
        import bm3d  # noqa: F401

        return True
    except ImportError:
        return False


def get_denoiser(name: str, lambda_: float, weights_path: Optional[str] = None) -> Denoiser:
    """Denoiser configured with sigma = 1 / lambda."""
    if lambda_ <= 0:
        raise ConfigError(f"lambda must be positive, got {lambda_}")
    sigma = 1.0 / lambda_
    if name == "identity":
        return Denoiser("identity", sigma, lambda x: x)
    if name == "median":
        return Denoiser("median", sigma, _median)
    if name == "tv":
        return Denoiser("tv", sigma, _tv_factory(sigma))
    if name == "cnn_pretrained":
        return Denoiser("cnn_pretrained", sigma, _cnn_factory(weights_path))
    if name == "bm3d_external":
        return Denoiser("bm3d_external", sigma, _bm3d_factory(sigma))
    raise ConfigError(f"unknown denoiser {name!r}, expected one of {DENOISER_NAMES}")


def equivariant_denoise(d: Denoiser, action: groups.GroupAction, x: Array) -> Array:
    """Conjugated denoiser T^{-1} D(T x)."""
    return groups.apply_inverse(action, d.denoise(groups.apply(action, x)))


@dataclass(frozen=True)
class EquivariantDenoiser:
    """Denoiser conjugated by a fixed group element, as a Denoiser-shaped object."""

    base: Denoiser
    action: groups.GroupAction

    @property
    def name(self) -> str:
        return f"eq({self.base.name})"

    @property
    def sigma(self) -> float:
        return self.base.sigma

    def denoise(self, x: Array) -> Array:
        return equivariant_denoise(self.base, self.action, x)
