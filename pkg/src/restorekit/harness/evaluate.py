"""Evaluation runs: degrade, restore, score and aggregate a manifest's test sets.

Image-level jobs run on a bounded thread pool.  Each job is keyed by its
manifest entry, so results (and per-image noise seeds) do not depend on the
order in which jobs finish.
"""
from __future__ import annotations

import hashlib
import json
import os
import platform
import shlex
import subprocess
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from restorekit import metrics, restore
from restorekit._backend import NAME as BACKEND
from restorekit.degradation import KERNELS, NoiseSpec, ScaleSpec, add_gaussian_noise, derive_seed, resample
from restorekit.harness.manifest import DatasetManifest, Entry
from restorekit.image import ImageError, as_image, load_image, save_image
from restorekit.nn.models import Model
from restorekit.nn.serialize import load_weights

# metrics summarised per set, as in the per-set min/avg/max charts
AGG_METRICS = ("rmse", "psnr_db", "ssim", "elapsed_s")
STATS = ("min", "max", "mean")


class EvalError(RuntimeError):
    pass


@dataclass
class Enhancer:
    """A named restoration step: ``identity``, ``classical`` (resample kernel),
    ``neural`` (a loaded model) or ``external`` (a subprocess).

    External commands are templates with ``{in}``, ``{out}`` and ``{factor}``
    placeholders; the process must exit 0 and leave a PNG at ``{out}``.
    """

    name: str
    kind: str
    kernel: str | None = None
    model: Model | None = None
    command: str | None = None
    factors: tuple | None = None   # None means any factor
    patch_size: int = 256
    stride: int | None = None
    _local: threading.local = field(default_factory=threading.local, repr=False, compare=False)

    @classmethod
    def identity(cls, name="identity"):
        return cls(name, "identity", factors=(1,))

    @classmethod
    def classical(cls, kernel, name=None):
        if kernel not in KERNELS:
            raise EvalError(f"unknown kernel {kernel!r}")
        return cls(name or kernel, "classical", kernel=kernel)

    @classmethod
    def neural(cls, model, name=None, patch_size=256, stride=None):
        if not isinstance(model, Model):
            model = load_weights(model)
        return cls(name or model.kind, "neural", model=model, factors=(model.scale,),
                   patch_size=patch_size, stride=stride)

    @classmethod
    def external(cls, command, name="external", factors=None):
        if "{in}" not in command or "{out}" not in command:
            raise EvalError("external command needs {in} and {out} placeholders")
        return cls(name, "external", command=command, factors=factors)

    def supports(self, factor) -> bool:
        return self.factors is None or factor in self.factors

    def describe(self) -> dict:
        d = {"name": self.name, "kind": self.kind}
        if self.kernel:
            d["kernel"] = self.kernel
        if self.model is not None:
            d["model"] = self.model.config_dict()
        if self.command:
            d["command"] = self.command
        return d

    def _model(self) -> Model:
        # layers cache activations, so every worker thread gets its own replica
        rep = getattr(self._local, "model", None)
        if rep is None:
            rep = self._local.model = self.model.replica()
        return rep

    def apply(self, img, factor=1, size=None):
        """Restore ``img``; for SR, ``size`` is the expected HR ``(h, w)``."""
        if self.kind == "identity":
            return img
        if self.kind == "classical":
            return resample(img, ScaleSpec(factor, self.kernel), size=size)
        if self.kind == "neural":
            model = self._model()
            if model.scale == 1:
                return restore.denoise(img, model, self.patch_size, self.stride)
            return restore.super_resolve(img, model, factor)
        if self.kind == "external":
            return self._run_external(img, factor, size)
        raise EvalError(f"unknown enhancer kind {self.kind!r}")

    def _run_external(self, img, factor, size):
        with tempfile.TemporaryDirectory(prefix="restorekit-") as tmp:
            src, dst = os.path.join(tmp, "in.png"), os.path.join(tmp, "out.png")
            save_image(img, src)
            args = [tok.replace("{in}", src).replace("{out}", dst).replace("{factor}", f"{factor:g}")
                    for tok in shlex.split(self.command)]
            try:
                proc = subprocess.run(args, capture_output=True, text=True)
            except OSError as exc:
                raise EvalError(f"enhancer {self.name!r} could not start: {exc}") from exc
            if proc.returncode != 0:
                raise EvalError(f"enhancer {self.name!r} exited {proc.returncode}: {proc.stderr.strip()[-500:]}")
            try:
                out = load_image(dst)
            except (OSError, ImageError) as exc:
                raise EvalError(f"enhancer {self.name!r} produced no readable PNG: {exc}") from exc
        if size is not None and out.shape[1:] != tuple(size):
            raise EvalError(f"enhancer {self.name!r} returned {out.shape[1:]}, expected {tuple(size)}")
        return out


@dataclass
class ImageResult:
    group: str      # test set (denoise) or enhancer name (SR)
    image: str
    report: metrics.MetricReport
    split: str = ""

    def row(self) -> dict:
        r = self.report
        return {"set_or_enhancer": self.group, "image": self.image, "mse": r.mse, "rmse": r.rmse,
                "psnr_db": r.psnr, "ssim": r.ssim, "elapsed_s": r.elapsed}


@dataclass
class EvalRun:
    run_id: str
    task: str
    degradation: dict
    enhancers: list[dict]
    results: list[ImageResult]
    aggregates: list[metrics.AggregateRow] = field(default_factory=list)
    environment: str = ""
    scale: float = 1.0
    seed: int = 0

    def groups(self) -> list[str]:
        seen: dict[str, None] = {}
        for r in self.results:
            seen.setdefault(r.group, None)
        return list(seen)


def aggregate_rows(rows) -> list[metrics.AggregateRow]:
    """Per-group min/max/mean of each summarised metric, in first-seen group order."""
    by_group: dict[str, list[dict]] = {}
    for row in rows:
        by_group.setdefault(row["set_or_enhancer"], []).append(row)
    out = []
    for group, items in by_group.items():
        for m in AGG_METRICS:
            out.append(metrics.aggregate([it[m] for it in items], group, m))
    return out


def environment_note() -> str:
    return f"{platform.machine()} {platform.system()} cpus={os.cpu_count()} python={platform.python_version()} kernels={BACKEND}"


def _run_id(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _map(jobs, fn, threads):
    threads = max(1, int(threads or os.cpu_count() or 1))
    if threads == 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


def _test_entries(manifest: DatasetManifest, splits=None) -> list[tuple[str, Entry]]:
    names = list(splits) if splits else manifest.test_splits()
    missing = [n for n in names if n not in manifest.splits]
    if missing:
        raise EvalError(f"manifest has no split(s) {missing}")
    jobs = [(name, e) for name in names for e in manifest.splits[name]]
    if not jobs:
        raise EvalError("no test images: every selected split is empty")
    return jobs


def run_denoise_eval(manifest: DatasetManifest, enhancer: Enhancer, noise: NoiseSpec = NoiseSpec(),
                     threads=None, scale: float = 1.0, timing: bool = True, splits=None) -> EvalRun:
    """Noise every test image, restore it and score it against the clean image.

    The noise seed of each image is derived from ``noise.seed`` and the
    image's manifest index.  ``elapsed`` covers only the restoration call.
    """
    if not enhancer.supports(1):
        raise EvalError(f"enhancer {enhancer.name!r} is not a scale-1 model")
    jobs = _test_entries(manifest, splits)

    def job(item):
        split, entry = item
        clean = load_image(manifest.abspath(entry))
        spec = NoiseSpec(noise.mean, noise.std, derive_seed(noise.seed, entry.index), noise.clip)
        noisy = add_gaussian_noise(clean, spec)
        t0 = time.perf_counter()
        out = enhancer.apply(noisy)
        elapsed = time.perf_counter() - t0 if timing else 0.0
        return ImageResult(split, entry.path, metrics.compare(clean, out, scale=scale, elapsed=elapsed), split)

    results = _map(jobs, job, threads)
    payload = {"task": "denoise", "manifest": manifest.to_dict(), "noise": noise.__dict__,
               "enhancer": enhancer.describe(), "scale": scale}
    return EvalRun(_run_id(payload), "denoise",
                   {"kind": "gaussian", "mean": noise.mean, "std": noise.std, "clip": noise.clip},
                   [enhancer.describe()], results, aggregate_rows(r.row() for r in results),
                   environment_note(), scale, noise.seed)


def run_sr_eval(manifest: DatasetManifest, enhancers: list[Enhancer], factor: int = 2, threads=None,
                scale: float = 1.0, timing: bool = True, splits=None) -> EvalRun:
    """Area-downscale every test image by ``1/factor``, upscale it back with
    each enhancer and score against the original (cropped to a multiple of
    ``factor``)."""
    if not enhancers:
        raise EvalError("at least one enhancer is required")
    names = [e.name for e in enhancers]
    if len(set(names)) != len(names):
        raise EvalError(f"enhancer names must be unique: {names}")
    for e in enhancers:
        if not e.supports(factor):
            raise EvalError(f"enhancer {e.name!r} does not support x{factor}")
    jobs = _test_entries(manifest, splits)

    def job(item):
        split, entry = item
        hr = load_image(manifest.abspath(entry))
        h, w = (entry.height // factor) * factor, (entry.width // factor) * factor
        if h < factor or w < factor:
            raise EvalError(f"{entry.path} is smaller than the scale factor")
        hr = np.ascontiguousarray(hr[:, :h, :w])
        lr = resample(hr, ScaleSpec(1.0 / factor, "area"), size=(h // factor, w // factor))
        out = []
        for e in enhancers:
            t0 = time.perf_counter()
            sr = as_image(e.apply(lr, factor, (h, w)))
            elapsed = time.perf_counter() - t0 if timing else 0.0
            if sr.shape != hr.shape:
                raise EvalError(f"enhancer {e.name!r} returned {sr.shape}, expected {hr.shape}")
            out.append(ImageResult(e.name, entry.path, metrics.compare(hr, sr, scale=scale, elapsed=elapsed), split))
        return out

    nested = _map(jobs, job, threads)
    # group by enhancer, images in manifest order within each
    results = [r for e in enhancers for per_image in nested for r in per_image if r.group == e.name]
    payload = {"task": "super_resolve", "manifest": manifest.to_dict(), "factor": factor,
               "enhancers": [e.describe() for e in enhancers], "scale": scale}
    return EvalRun(_run_id(payload), "super_resolve", {"kind": "area_downscale", "factor": factor},
                   [e.describe() for e in enhancers], results, aggregate_rows(r.row() for r in results),
                   environment_note(), scale, 0)

