"""Datasets: builtin phantoms, directory ingestion, splits, and measurements.

Ground truth lives only in :class:`ImageDataset`. The measurement container
handed to unsupervised trainers (:class:`MeasurementSet`) carries sinograms
and sample ids but has no ground-truth accessor at all; evaluation code pairs
the two by id explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError, IngestionError
from .linops import MeasurementModel, measure

Array = np.ndarray

BUILTIN_SOURCES = ("shepp_logan", "shepp_logan_variants", "random_ellipses")
IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")

DEFAULT_TRAIN_IDS = tuple(range(1, 11))
DEFAULT_TEST_IDS = tuple(range(11, 21))


@dataclass(frozen=True)
class ImageDataset:
    """Ordered grayscale images in [0, 1] with stable 1-based sample ids."""

    images: Tuple[Array, ...]
    ids: Tuple[int, ...]
    split: str
    source: str = ""

    def __post_init__(self):
        if len(self.images) != len(self.ids):
            raise ValueError("images and ids must have equal length")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("sample ids must be unique")
        shapes = {img.shape for img in self.images}
        if len(shapes) > 1:
            raise ValueError(f"images must share one shape, got {shapes}")
        for img in self.images:
            if img.min() < -1e-12 or img.max() > 1 + 1e-12:
                raise ValueError("image intensities must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def image_shape(self) -> Tuple[int, int]:
        return self.images[0].shape


@dataclass(frozen=True)
class MeasurementSet:
    """Per-sample measurements for training; intentionally truth-free."""

    ids: Tuple[int, ...]
    measurements: Tuple[Array, ...]
    sample_seeds: Tuple[int, ...]
    noise_std: float

    def __len__(self) -> int:
        return len(self.measurements)


def _normalize01(img: Array) -> Array:
    img = np.asarray(img, dtype=np.float64)
    lo, hi = float(img.min()), float(img.max())
    if hi <= lo:
        return np.zeros_like(img)
    return (img - lo) / (hi - lo)


def _resize(img: Array, size: int) -> Array:
    from skimage.transform import resize

    if img.shape == (size, size):
        return np.asarray(img, dtype=np.float64)
    return resize(img, (size, size), order=1, anti_aliasing=True, mode="reflect")


def _ellipse_mask(n: int, cy: float, cx: float, a: float, b: float, phi: float) -> Array:
    yy, xx = np.mgrid[0:n, 0:n].astype(float)
    dy, dx = yy - cy, xx - cx
    u = dx * np.cos(phi) + dy * np.sin(phi)
    v = -dx * np.sin(phi) + dy * np.cos(phi)
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def _shepp_logan_base(size: int) -> Array:
    from skimage.data import shepp_logan_phantom

    return _normalize01(_resize(shepp_logan_phantom(), size))


def _shepp_logan_variant(size: int, sample_id: int) -> Array:
    """Deterministic per-id perturbation: small pose jitter, zoom, extra lesions.

    Pose jitter is kept within a few degrees so the sample set stays
    orientation-homogeneous; orientation diversity is the trainers' job,
    not the dataset's.
    """
    from skimage.transform import AffineTransform, rotate, warp

    rng = np.random.default_rng(10_000 + sample_id)
    base = _shepp_logan_base(size)
    img = rotate(base, angle=float(rng.uniform(-5.0, 5.0)), order=1, mode="constant")
    zoom = float(rng.uniform(0.92, 1.08))
    c = (size - 1) / 2.0
    tform = AffineTransform(scale=(1 / zoom, 1 / zoom), translation=(c * (1 - 1 / zoom), c * (1 - 1 / zoom)))
    img = warp(img, tform.inverse, order=1, mode="constant")
    for _ in range(int(rng.integers(1, 4))):
        r = rng.uniform(0, 0.22 * size)
        th = rng.uniform(0, 2 * np.pi)
        mask = _ellipse_mask(
            size,
            cy=c + r * np.sin(th),
            cx=c + r * np.cos(th),
            a=rng.uniform(0.03, 0.10) * size,
            b=rng.uniform(0.03, 0.10) * size,
            phi=rng.uniform(0, np.pi),
        )
        img = img + float(rng.uniform(-0.25, 0.25)) * mask
    return _normalize01(np.clip(img, 0.0, None))


def _random_ellipses(size: int, sample_id: int) -> Array:
    """Skull-like outer ellipse plus 3..6 random interior ellipses."""
    rng = np.random.default_rng(20_000 + sample_id)
    c = (size - 1) / 2.0
    img = 0.8 * _ellipse_mask(size, c, c, 0.46 * size, 0.38 * size, rng.uniform(0, np.pi))
    for _ in range(int(rng.integers(3, 7))):
        r = rng.uniform(0, 0.25 * size)
        th = rng.uniform(0, 2 * np.pi)
        mask = _ellipse_mask(
            size,
            cy=c + r * np.sin(th),
            cx=c + r * np.cos(th),
            a=rng.uniform(0.04, 0.16) * size,
            b=rng.uniform(0.04, 0.16) * size,
            phi=rng.uniform(0, np.pi),
        )
        img = img + float(rng.uniform(-0.5, 0.5)) * mask
    return _normalize01(np.clip(img, 0.0, None))


def _parse_id_range(value) -> Tuple[int, ...]:
    # accepts [1, 2, 3] or the string form "1-10"
    if isinstance(value, str):
        lo, hi = value.split("-")
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(v) for v in value)


def _resolve_split(split_spec: Union[str, Mapping]) -> Tuple[str, Tuple[int, ...]]:
    if isinstance(split_spec, str):
        split, train_ids, test_ids = split_spec, DEFAULT_TRAIN_IDS, DEFAULT_TEST_IDS
    else:
        split = split_spec.get("split", "train")
        train_ids = _parse_id_range(split_spec.get("train_ids", DEFAULT_TRAIN_IDS))
        test_ids = _parse_id_range(split_spec.get("test_ids", DEFAULT_TEST_IDS))
    if split not in ("train", "test"):
        raise ConfigError(f"split must be 'train' or 'test', got {split!r}")
    ids = train_ids if split == "train" else test_ids
    if set(train_ids) & set(test_ids):
        raise ConfigError("train and test id ranges overlap")
    return split, ids


def load_dataset(source: str, size: int, split_spec: Union[str, Mapping] = "train") -> ImageDataset:
    """Load or synthesize a dataset at the requested resolution.

    ``source`` is a builtin name (``shepp_logan``: the single classic
    phantom; ``shepp_logan_variants``: per-id perturbed phantoms;
    ``random_ellipses``: per-id ellipse phantoms) or a directory of
    grayscale image files whose sorted order defines 1-based ids.
    ``split_spec`` is ``"train"``/``"test"`` with CT100-style default id
    ranges (1-10 / 11-20), or a mapping with ``split``, ``train_ids``,
    ``test_ids`` entries.
    """
    if size < 8:
        raise ConfigError(f"image size must be >= 8, got {size}")
    split, ids = _resolve_split(split_spec)

    if source == "shepp_logan":
        return ImageDataset((_shepp_logan_base(size),), (1,), split, source)
    if source == "shepp_logan_variants":
        images = tuple(_shepp_logan_variant(size, i) for i in ids)
        return ImageDataset(images, tuple(ids), split, source)
    if source == "random_ellipses":
        images = tuple(_random_ellipses(size, i) for i in ids)
        return ImageDataset(images, tuple(ids), split, source)

    root = Path(source)
    if not root.is_dir():
        raise IngestionError(f"dataset source {source!r} is not a builtin name or a directory", [source])
    files = sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS)
    if not files:
        raise IngestionError(f"no image files found under {source!r}", [source])
    missing = [i for i in ids if i < 1 or i > len(files)]
    if missing:
        raise IngestionError(
            f"requested ids {missing} but directory holds {len(files)} images",
            [str(files[-1].parent)],
        )
    images, bad = [], []
    for i in ids:
        path = files[i - 1]
        try:
            from skimage.io import imread

            raw = imread(path, as_gray=True)
            images.append(_normalize01(_resize(np.asarray(raw, dtype=np.float64), size)))
        except Exception:
            bad.append(str(path))
    if bad:
        raise IngestionError(f"unreadable image files: {bad}", bad)
    return ImageDataset(tuple(images), tuple(ids), split, source)


def sample_seed(root_seed: int, sample_id: int) -> int:
    """Stable per-sample noise seed derived from the run seed and the id."""
    return int(np.random.SeedSequence(entropy=[int(root_seed), int(sample_id)]).generate_state(1)[0])


def build_measurements(ds: ImageDataset, model: MeasurementModel, seed: int) -> MeasurementSet:
    """One measurement per image via the forward model, per-sample seeds."""
    if ds.image_shape != model.operator.in_shape:
        raise ValueError(
            f"dataset images {ds.image_shape} do not match operator input {model.operator.in_shape}"
        )
    seeds = tuple(sample_seed(seed, i) for i in ds.ids)
    ys = tuple(measure(model, x, s) for x, s in zip(ds.images, seeds))
    return MeasurementSet(ds.ids, ys, seeds, model.noise_std)


def paired_examples(ds: ImageDataset, ms: MeasurementSet):
    """(id, measurement, ground truth) triples for evaluation and baselines."""
    if ds.ids != ms.ids:
        raise ValueError("dataset and measurement set ids differ")
    return list(zip(ds.ids, ms.measurements, ds.images))
