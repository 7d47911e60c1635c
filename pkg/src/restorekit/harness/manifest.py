"""Dataset manifests: a seeded, reproducible partition of an image directory
into a training split and several test sets."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from PIL import Image as PILImage

IMAGE_EXTS = (".png", ".ppm")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class Entry:
    path: str       # relative to the manifest root, '/' separated
    height: int
    width: int
    index: int      # position in the shuffled corpus; keys per-image seeds


@dataclass
class DatasetManifest:
    root: str
    seed: int
    splits: dict[str, list[Entry]] = field(default_factory=dict)

    def test_splits(self) -> list[str]:
        return [name for name in self.splits if name != "train"]

    def abspath(self, entry: Entry) -> str:
        return os.path.join(self.root, *entry.path.split("/"))

    def to_dict(self) -> dict:
        return {"root": self.root, "seed": self.seed,
                "splits": {k: [asdict(e) for e in v] for k, v in self.splits.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        try:
            splits = {k: [Entry(**e) for e in v] for k, v in d["splits"].items()}
            return cls(d["root"], int(d["seed"]), splits)
        except (KeyError, TypeError) as exc:
            raise ManifestError(f"malformed manifest: {exc}") from exc

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        try:
            with open(path, encoding="utf-8") as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
        return cls.from_dict(d)


def scan_images(root) -> list[tuple[str, int, int]]:
    """``(relative path, height, width)`` of every decodable PNG/PPM under ``root``."""
    if not os.path.isdir(root):
        raise ManifestError(f"corpus root {root!r} is not a readable directory")
    found = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            if not name.lower().endswith(IMAGE_EXTS):
                continue
            full = os.path.join(dirpath, name)
            try:
                with PILImage.open(full) as im:
                    w, h = im.size
            except OSError:
                continue
            if h >= 1 and w >= 1:
                rel = os.path.relpath(full, root).replace(os.sep, "/")
                found.append((rel, h, w))
    found.sort()
    return found


def default_splits(n: int, tests: int = 4, train_fraction: float = 0.5) -> dict[str, int]:
    """Half the corpus for training, the rest dealt evenly over ``tests`` sets."""
    n_train = int(n * train_fraction)
    per = (n - n_train) // tests
    if per < 1:
        raise ManifestError(f"{n} images are not enough for a train split and {tests} test sets")
    out = {"train": n_train}
    out.update({f"test{i + 1}": per for i in range(tests)})
    return out


def build_manifest(root, seed: int = 0, splits: dict[str, int] | None = None) -> DatasetManifest:
    """Shuffle the corpus with ``seed`` and carve contiguous runs of the given
    sizes, in the order the splits are listed."""
    images = scan_images(root)
    if splits is None:
        splits = default_splits(len(images))
    if not splits:
        raise ManifestError("at least one split is required")
    if any(int(v) < 0 for v in splits.values()):
        raise ManifestError("split sizes must be nonnegative")
    need = sum(int(v) for v in splits.values())
    if len(images) < max(need, len(splits)):
        raise ManifestError(f"splits need {need} images but {root!r} holds {len(images)}")
    order = np.random.default_rng(seed).permutation(len(images))
    out: dict[str, list[Entry]] = {}
    pos = 0
    for name, size in splits.items():
        out[name] = [Entry(images[i][0], images[i][1], images[i][2], p)
                     for p, i in zip(range(pos, pos + int(size)), order[pos:pos + int(size)].tolist())]
        pos += int(size)
    return DatasetManifest(os.path.abspath(root), int(seed), out)
