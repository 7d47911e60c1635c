"""Training pairs cut from clean images: noisy/clean for the denoiser and
LR/HR for super-resolution."""
from __future__ import annotations

import numpy as np

from restorekit.degradation import NoiseSpec, ScaleSpec, add_gaussian_noise, derive_seed, resample
from restorekit.image import load_image


def patch_stack(images, patch_size: int = 64) -> np.ndarray:
    """Non-overlapping ``patch_size`` crops of every image, as ``(N, 3, P, P)``.

    Only patches lying fully inside an image are kept, so no padding pixels
    leak into training data.
    """
    out = []
    for img in images:
        if isinstance(img, str):
            img = load_image(img)
        _, h, w = img.shape
        for y in range(0, h - patch_size + 1, patch_size):
            for x in range(0, w - patch_size + 1, patch_size):
                out.append(img[:, y:y + patch_size, x:x + patch_size])
    if not out:
        raise ValueError(f"no image is at least {patch_size}x{patch_size}")
    return np.ascontiguousarray(np.stack(out))


def noisy_pairs(clean: np.ndarray, noise: NoiseSpec) -> tuple[np.ndarray, np.ndarray]:
    """``(noisy, clean)`` with an independent noise stream per patch."""
    noisy = np.stack([
        add_gaussian_noise(p, NoiseSpec(noise.mean, noise.std, derive_seed(noise.seed, i), noise.clip))
        for i, p in enumerate(clean)])
    return noisy, clean


def sr_pairs(hr: np.ndarray, factor: int) -> tuple[np.ndarray, np.ndarray]:
    """``(lr, hr)`` with LR made by area downscaling; HR is cropped to a
    multiple of ``factor`` first."""
    n, c, h, w = hr.shape
    h, w = (h // factor) * factor, (w // factor) * factor
    hr = np.ascontiguousarray(hr[:, :, :h, :w])
    lr = np.stack([resample(p, ScaleSpec(1.0 / factor, "area"), size=(h // factor, w // factor)) for p in hr])
    return lr, hr


def split_val(x: np.ndarray, y: np.ndarray, fraction: float, seed: int):
    """Hold out a seeded random ``fraction`` of the pairs for validation."""
    n_val = int(round(len(x) * fraction))
    if n_val == 0:
        return (x, y), None
    order = np.random.default_rng(seed).permutation(len(x))
    val, tr = np.sort(order[:n_val]), np.sort(order[n_val:])
    return (x[tr], y[tr]), (x[val], y[val])

