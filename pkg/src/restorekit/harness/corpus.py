"""A small natural-image corpus cut from the photographs bundled with
scikit-image (install the ``test`` extra).  Used by the test-suite and the
benchmark scripts when no user corpus is at hand."""
from __future__ import annotations

import os

import numpy as np

from restorekit.image import from_hwc, save_image

SOURCES = ("astronaut", "coffee", "chelsea", "rocket", "immunohistochemistry",
           "camera", "grass", "brick", "gravel", "coins")


def sample_crops(size: int = 128, per_source: int = 6, sources=SOURCES):
    """Yield ``(name, image)`` crops taken on a regular grid of each photo."""
    import skimage.data

    for src in sources:
        arr = getattr(skimage.data, src)()
        img = from_hwc(arr.astype(np.float64) / 255.0)
        _, h, w = img.shape
        ys = range(0, h - size + 1, size)
        xs = range(0, w - size + 1, size)
        spots = [(y, x) for y in ys for x in xs]
        step = max(1, len(spots) // per_source)
        for k, (y, x) in enumerate(spots[::step][:per_source]):
            yield f"{src}_{k:02d}", img[:, y:y + size, x:x + size]


def write_sample_corpus(out_dir, size: int = 128, per_source: int = 6, sources=SOURCES) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name, img in sample_crops(size, per_source, sources):
        path = os.path.join(out_dir, name + ".png")
        save_image(img, path)
        paths.append(path)
    return paths
