"""Controlled degradations: reproducible Gaussian noise and resampling.

Noise is counter based: the deviate at sample ``(c, y, x)`` of a canvas is a
pure function of the seed and the sample's canonical (row-major) index, so a
patch can be noised independently and still agree with the whole image.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from restorekit._backend import kernels
from restorekit._pykernels import GOLDEN
from restorekit.image import as_image

KERNELS = ("nearest", "bilinear", "bicubic", "area")
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class NoiseSpec:
    mean: float = 0.0
    std: float = 0.3
    seed: int = 0
    clip: bool = True

    def __post_init__(self):
        if not self.std >= 0:
            raise ValueError(f"noise std must be >= 0, got {self.std}")


@dataclass(frozen=True)
class ScaleSpec:
    factor: float
    kernel: str = "bicubic"

    def __post_init__(self):
        if not self.factor > 0:
            raise ValueError(f"scale factor must be positive, got {self.factor}")
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}; choose from {KERNELS}")


def seed_key(seed: int) -> int:
    """Derive the 64-bit generator key from a user seed."""
    z = (int(seed) + GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, index: int) -> int:
    """Independent child seed for item ``index`` of a run seeded by ``seed``."""
    return seed_key((seed_key(seed) + int(index) * GOLDEN) & _MASK64)


def canonical_counters(canvas: tuple[int, int, int], origin=(0, 0), size=None) -> np.ndarray:
    """Canonical sample indices of a window of a ``(C, H, W)`` canvas."""
    c, h, w = canvas
    y0, x0 = origin
    ph, pw = size if size is not None else (h - y0, w - x0)
    if y0 < 0 or x0 < 0 or y0 + ph > h or x0 + pw > w:
        raise ValueError("window falls outside the canvas")
    ch = np.arange(c, dtype=np.uint64)[:, None, None] * np.uint64(h * w)
    ys = np.arange(y0, y0 + ph, dtype=np.uint64)[None, :, None] * np.uint64(w)
    xs = np.arange(x0, x0 + pw, dtype=np.uint64)[None, None, :]
    return ch + ys + xs


def standard_normal(seed: int, counters: np.ndarray) -> np.ndarray:
    """N(0, 1) deviates by inverse CDF of the counter-keyed uniform stream."""
    return ndtri(kernels.counter_uniform(seed_key(seed), counters))


def gaussian_field(shape, mean=0.0, std=1.0, seed=0, origin=(0, 0), canvas=None) -> np.ndarray:
    """Noise for a ``shape`` window placed at ``origin`` on ``canvas`` (default: itself)."""
    c, h, w = shape
    canvas = tuple(canvas) if canvas is not None else (c, h, w)
    counters = canonical_counters(canvas, origin, (h, w))
    return mean + std * standard_normal(seed, counters)


def add_gaussian_noise(img: np.ndarray, spec: NoiseSpec, origin=(0, 0), canvas=None) -> np.ndarray:
    """Return ``img`` plus i.i.d. Gaussian noise, clipped to [0, 1] if requested.

    ``origin``/``canvas`` place the image inside a larger canvas so that a
    patch receives exactly the noise the whole canvas would have at that spot.
    """
    img = as_image(img)
    if spec.std == 0:
        out = img + spec.mean
    else:
        out = img + gaussian_field(img.shape, spec.mean, spec.std, spec.seed, origin, canvas)
    return np.clip(out, 0.0, 1.0) if spec.clip else out


def target_size(n: int, factor: float) -> int:
    return int(math.floor(n * factor + 0.5))


def _cubic(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    t = np.abs(t)
    t2, t3 = t * t, t * t * t
    near = (a + 2) * t3 - (a + 3) * t2 + 1
    far = a * t3 - 5 * a * t2 + 8 * a * t - 4 * a
    return np.where(t <= 1, near, np.where(t < 2, far, 0.0))


def _triangle(t: np.ndarray) -> np.ndarray:
    return np.maximum(0.0, 1.0 - np.abs(t))


def axis_weights(n_in: int, n_out: int, kernel: str) -> np.ndarray:
    """Row-stochastic ``(n_out, n_in)`` interpolation matrix for one axis.

    Pixel centres are aligned (half-pixel convention) and borders replicate.
    Bilinear/bicubic kernels are stretched when downscaling (antialiasing).
    """
    scale = n_out / n_in
    w = np.zeros((n_out, n_in))
    dst = np.arange(n_out)
    if kernel == "nearest":
        src = np.minimum(np.floor((dst + 0.5) / scale).astype(int), n_in - 1)
        w[dst, src] = 1.0
        return w
    if kernel == "area":
        lo, hi = dst / scale, (dst + 1) / scale
        j = np.arange(n_in)
        overlap = np.minimum(hi[:, None], j[None, :] + 1) - np.maximum(lo[:, None], j[None, :])
        w = np.maximum(overlap, 0.0)
        return w / w.sum(axis=1, keepdims=True)
    fn, radius = {"bilinear": (_triangle, 1.0), "bicubic": (_cubic, 2.0)}[kernel]
    stretch = max(1.0, 1.0 / scale)
    support = radius * stretch
    centers = (dst + 0.5) / scale - 0.5
    for i, ctr in enumerate(centers):
        taps = np.arange(math.floor(ctr - support), math.ceil(ctr + support) + 1)
        vals = fn((taps - ctr) / stretch)
        np.add.at(w[i], np.clip(taps, 0, n_in - 1), vals)
    return w / w.sum(axis=1, keepdims=True)


def resample(img: np.ndarray, spec: ScaleSpec, clamp: bool = True, size=None) -> np.ndarray:
    """Resample with a separable kernel; ``size=(H, W)`` overrides the factor."""
    img = as_image(img)
    _, h, w = img.shape
    ho, wo = size if size is not None else (target_size(h, spec.factor), target_size(w, spec.factor))
    if ho < 1 or wo < 1:
        raise ValueError(f"degenerate target size {ho}x{wo}")
    wy = axis_weights(h, ho, spec.kernel)
    wx = axis_weights(w, wo, spec.kernel)
    out = np.matmul(np.matmul(wy, img), wx.T)
    return np.clip(out, 0.0, 1.0) if clamp else out
