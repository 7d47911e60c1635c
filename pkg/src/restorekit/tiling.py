"""Split images into fixed-size patches and stitch them back.

Non-divisible images are reflect-padded so the grid covers them exactly;
stitching crops the padding away again.  With ``stride < patch_size``
overlapping patches are blended with a linear feather ramp.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from restorekit.image import as_image


class TilingError(ValueError):
    pass


@dataclass(frozen=True)
class TileGrid:
    patch_size: int
    stride: int
    original_height: int
    original_width: int
    rows: int
    cols: int
    pad_mode: str = "reflect"

    @property
    def padded_height(self) -> int:
        return (self.rows - 1) * self.stride + self.patch_size

    @property
    def padded_width(self) -> int:
        return (self.cols - 1) * self.stride + self.patch_size

    def origins(self) -> list[tuple[int, int]]:
        """Top-left corner of every patch, row-major."""
        return [(r * self.stride, c * self.stride) for r in range(self.rows) for c in range(self.cols)]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TileGrid":
        return cls(**d)


def _count(n: int, patch: int, stride: int) -> int:
    if n <= patch:
        return 1
    return math.ceil((n - patch) / stride) + 1


def make_grid(height: int, width: int, patch_size: int = 256, stride: int | None = None) -> TileGrid:
    stride = patch_size if stride is None else stride
    if patch_size < 1:
        raise TilingError(f"patch_size must be >= 1, got {patch_size}")
    if not 1 <= stride <= patch_size:
        raise TilingError(f"stride must lie in [1, {patch_size}], got {stride}")
    if patch_size > 4 * max(height, width):
        raise TilingError(f"patch_size {patch_size} is degenerate for a {height}x{width} image")
    return TileGrid(patch_size, stride, height, width,
                    _count(height, patch_size, stride), _count(width, patch_size, stride))


def pad_to_grid(img: np.ndarray, grid: TileGrid) -> np.ndarray:
    _, h, w = img.shape
    pads = ((0, 0), (0, grid.padded_height - h), (0, grid.padded_width - w))
    return np.pad(img, pads, mode=grid.pad_mode)


def split(img: np.ndarray, patch_size: int = 256, stride: int | None = None):
    """Return ``(patches, grid)`` with patches in row-major order."""
    img = as_image(img)
    grid = make_grid(img.shape[1], img.shape[2], patch_size, stride)
    canvas = pad_to_grid(img, grid)
    p = grid.patch_size
    patches = [canvas[:, y:y + p, x:x + p].copy() for y, x in grid.origins()]
    return patches, grid


def feather_ramp(patch_size: int, overlap: int, lead: bool, trail: bool) -> np.ndarray:
    """1-D blending weights: ramps up over a leading overlap, down over a trailing one."""
    w = np.ones(patch_size)
    if overlap <= 0:
        return w
    ramp = np.arange(1, overlap + 1) / (overlap + 1)
    if lead:
        w[:overlap] = np.minimum(w[:overlap], ramp)
    if trail:
        w[patch_size - overlap:] = np.minimum(w[patch_size - overlap:], ramp[::-1])
    return w


def stitch(patches, grid: TileGrid) -> np.ndarray:
    """Reassemble ``patches`` (as produced by :func:`split`) into one image."""
    if len(patches) != grid.rows * grid.cols:
        raise TilingError(f"expected {grid.rows * grid.cols} patches, got {len(patches)}")
    p = grid.patch_size
    for patch in patches:
        if np.shape(patch) != (3, p, p):
            raise TilingError(f"patch shape {np.shape(patch)} does not match grid patch size {p}")
    canvas = np.zeros((3, grid.padded_height, grid.padded_width))

    if grid.stride == p:
        for patch, (y, x) in zip(patches, grid.origins()):
            canvas[:, y:y + p, x:x + p] = patch
    else:
        overlap = p - grid.stride
        weight = np.zeros(canvas.shape[1:])
        for k, (patch, (y, x)) in enumerate(zip(patches, grid.origins())):
            r, c = divmod(k, grid.cols)
            wy = feather_ramp(p, overlap, r > 0, r < grid.rows - 1)
            wx = feather_ramp(p, overlap, c > 0, c < grid.cols - 1)
            w2 = wy[:, None] * wx[None, :]
            canvas[:, y:y + p, x:x + p] += w2 * np.asarray(patch)
            weight[y:y + p, x:x + p] += w2
        canvas /= weight

    return canvas[:, :grid.original_height, :grid.original_width].copy()
