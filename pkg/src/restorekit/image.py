"""Image arrays, PNG/PPM I/O and pixel utilities.

An image is a ``float64`` numpy array of shape ``(3, H, W)`` (planar RGB)
with values in ``[0, 1]``.  8-bit samples only exist at the file boundary.
"""
from __future__ import annotations

import os

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError


class ImageError(ValueError):
    pass


def as_image(data, copy: bool = False) -> np.ndarray:
    """Validate ``data`` as a planar RGB image and return it as float64."""
    arr = np.array(data, dtype=np.float64, copy=copy) if copy else np.asarray(data, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ImageError(f"expected shape (3, H, W), got {arr.shape}")
    if arr.shape[1] < 1 or arr.shape[2] < 1:
        raise ImageError(f"zero-dimension image {arr.shape}")
    return arr


def from_hwc(arr) -> np.ndarray:
    """Convert an interleaved ``(H, W, 3)`` array to planar layout."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    return as_image(np.ascontiguousarray(arr[:, :, :3].transpose(2, 0, 1)))


def to_hwc(img: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(as_image(img).transpose(1, 2, 0))


def clamp_unit(img: np.ndarray) -> np.ndarray:
    return np.clip(img, 0.0, 1.0)


def quantize(img: np.ndarray) -> np.ndarray:
    """Map [0, 1] values to uint8 samples, rounding half away from zero."""
    scaled = np.asarray(img, dtype=np.float64) * 255.0
    # np.round is half-to-even; floor(x + 0.5) is half-up, which equals
    # half-away-from-zero for the nonnegative values that survive the clip.
    return np.clip(np.floor(np.clip(scaled, 0.0, 255.0) + 0.5), 0, 255).astype(np.uint8)


def load_image(path: str | os.PathLike) -> np.ndarray:
    """Read an 8-bit PNG or binary PPM (P6) file into a planar [0, 1] image.

    Grayscale files are replicated to three channels and alpha is dropped.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise ImageError(f"no such file: {path}")
    try:
        with PILImage.open(path) as im:
            if im.format not in ("PNG", "PPM"):
                raise ImageError(f"unsupported format {im.format!r} for {path}")
            if im.mode in ("I", "I;16", "I;16B", "F"):
                raise ImageError(f"unsupported bit depth ({im.mode}) in {path}")
            im.load()
            if im.width < 1 or im.height < 1:
                raise ImageError(f"zero-dimension image: {path}")
            rgb = im.convert("RGB")
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageError(f"cannot decode {path}: {exc}") from exc
    data = np.asarray(rgb, dtype=np.uint8)
    return from_hwc(data.astype(np.float64) / 255.0)


def save_image(img: np.ndarray, path: str | os.PathLike) -> None:
    """Write ``img`` as an 8-bit RGB PNG."""
    samples = quantize(as_image(img)).transpose(1, 2, 0)
    PILImage.fromarray(np.ascontiguousarray(samples)).save(os.fspath(path), format="PNG")
