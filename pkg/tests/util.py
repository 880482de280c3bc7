"""Shared test-image generators.

Smooth Gaussian-bump images are used wherever a tolerance assumes bounded
curvature (interpolated rotations, FBP quality); hard-edged phantoms are
used where edges are the point (projections, masks).
"""

import numpy as np


def blob_image(n: int, seed: int, k: int = 4, smin: float = 5.0, smax: float = 9.0):
    """Smooth unit-range image: k Gaussian bumps near the center."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:n, 0:n].astype(float)
    c = (n - 1) / 2.0
    img = np.zeros((n, n))
    for _ in range(k):
        r = rng.uniform(0, 0.30 * n)
        th = rng.uniform(0, 2 * np.pi)
        cy, cx = c + r * np.sin(th), c + r * np.cos(th)
        s = rng.uniform(smin, smax)
        img += rng.uniform(0.3, 1.0) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
    return img / img.max()


def disk_phantom(n: int, radius_frac: float = 0.35, value: float = 1.0):
    """Constant disk centered on the pixel grid."""
    yy, xx = np.mgrid[0:n, 0:n].astype(float)
    c = (n - 1) / 2.0
    return np.where((yy - c) ** 2 + (xx - c) ** 2 <= (radius_frac * n) ** 2, value, 0.0)


def interior_disk(n: int, margin: float = 2.0):
    """Boolean mask of pixels whose rotations about the center stay in-frame."""
    yy, xx = np.mgrid[0:n, 0:n].astype(float)
    c = (n - 1) / 2.0
    return (yy - c) ** 2 + (xx - c) ** 2 <= (c - margin) ** 2
