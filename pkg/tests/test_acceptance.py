"""Acceptance runs.  Each test prints one PASS/FAIL line for its criterion.

The natural-image corpus is 108 crops (128x128) of the scikit-image sample
photographs; the manifest holds 54 training images and four test sets of 13,
so training sees 216 and evaluation 208 non-overlapping 64x64 patches.
"""
import csv
import io
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from restorekit import metrics, tiling
from restorekit.degradation import NoiseSpec, ScaleSpec, resample
from restorekit.harness.data import noisy_pairs, patch_stack, sr_pairs
from restorekit.harness.evaluate import AGG_METRICS, Enhancer, run_sr_eval
from restorekit.harness.manifest import build_manifest
from restorekit.harness.report import AGGREGATE
from restorekit.nn import (Conv2d, DenoiserConfig, Model, NearestUpsample, PixelShuffle, ReLU, Sigmoid, SrNetConfig,
                           TrainConfig, gradcheck, save_weights, smooth_probe, train)
from restorekit.nn.layers import Shift, UpsampleSkip, residual_block
from restorekit.restore import denoise, super_resolve

SPLITS = {"train": 54, "test1": 13, "test2": 13, "test3": 13, "test4": 13}
SIGMA = 0.3


def verdict(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nacceptance criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


@pytest.fixture(scope="module")
def manifest(corpus_dir, tmp_path_factory):
    m = build_manifest(corpus_dir, seed=0, splits=SPLITS)
    path = tmp_path_factory.mktemp("acc") / "manifest.json"
    m.save(path)
    return m, path


@pytest.fixture(scope="module")
def patches(manifest):
    m, _ = manifest
    train_ = patch_stack([m.abspath(e) for e in m.splits["train"]], 64)
    test = patch_stack([m.abspath(e) for s in m.test_splits() for e in m.splits[s]], 64)
    return train_, test


# --- 1. metric oracle ---------------------------------------------------------

def _flat(img):
    c, h, w = img.shape
    return [float(img[k, i, j]) for k in range(c) for i in range(h) for j in range(w)]


def _oracle(a, b):
    xa, xb = _flat(a), _flat(b)
    n = len(xa)
    mse = math.fsum((p - q) ** 2 for p, q in zip(xa, xb)) / n
    psnr = math.inf if mse == 0 else 10 * math.log10(1.0 / mse)
    ma, mb = math.fsum(xa) / n, math.fsum(xb) / n
    va = math.fsum((p - ma) ** 2 for p in xa) / n
    vb = math.fsum((q - mb) ** 2 for q in xb) / n
    cov = math.fsum((p - ma) * (q - mb) for p, q in zip(xa, xb)) / n
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    c3 = c2 / 2
    sa, sb = math.sqrt(va), math.sqrt(vb)
    lum = (2 * ma * mb + c1) / (ma * ma + mb * mb + c1)
    con = (2 * sa * sb + c2) / (va + vb + c2)
    struct = (cov + c3) / (sa * sb + c3)
    return mse, math.sqrt(mse), psnr, lum * con * struct


def test_criterion_1_metric_oracle(capsys):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    identical = True
    for _ in range(100):
        a, b = rng.random((3, 8, 8)), rng.random((3, 8, 8))
        got = (metrics.mse(a, b), metrics.rmse(a, b), metrics.psnr(a, b), metrics.ssim(a, b))
        worst = max(worst, max(abs(g - e) for g, e in zip(got, _oracle(a, b))))
        identical &= metrics.ssim(a, a) == 1.0
    elapsed = time.perf_counter() - t0
    verdict(capsys, 1, worst <= 1e-9 and identical and elapsed < 5,
            f"max abs diff {worst:.2e} over 100 pairs, ssim(a,a)==1 exactly: {identical}, {elapsed:.2f}s")


# --- 2. tiling round trip -------------------------------------------------------

def test_criterion_2_tiling_roundtrip(capsys):
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    worst_half, exact = 0.0, True
    for i in range(50):
        h, w = rng.integers(100, 701, size=2)
        img = rng.random((3, h, w))
        patch = int(rng.choice([64, 128, 256]))
        stride = patch if i % 2 == 0 else patch // 2
        out = tiling.stitch(*tiling.split(img, patch, stride))
        if stride == patch:
            exact &= np.array_equal(out, img)
        else:
            worst_half = max(worst_half, float(np.max(np.abs(out - img))))
    elapsed = time.perf_counter() - t0
    verdict(capsys, 2, exact and worst_half <= 1e-12 and elapsed < 30,
            f"bit-exact at stride=patch: {exact}, max error at stride=patch/2 {worst_half:.1e}, {elapsed:.1f}s")


# --- 3. gradient checks ---------------------------------------------------------

def _layers():
    rng = np.random.default_rng(0)
    convs = {"conv3x3": Conv2d(3, 4, 3), "conv3x3_stride2": Conv2d(3, 4, 3, stride=2), "conv1x1": Conv2d(3, 4, 1)}
    for c in convs.values():
        c.init(rng)
        c.params["bias"][...] = rng.standard_normal(c.out_ch)
    block = residual_block(3)
    for c in block.layers:
        if isinstance(c, Conv2d):
            c.init(rng)
    skip = UpsampleSkip([Conv2d(3, 12, 3), PixelShuffle(2)], 2)
    skip.layers[0].init(rng)
    return {**convs, "relu": ReLU(), "sigmoid": Sigmoid(), "nearest_upsample": NearestUpsample(2),
            "pixel_shuffle": PixelShuffle(2), "residual_block": block, "shift": Shift(-0.5), "upsample_skip": skip}


def test_criterion_3_gradient_checks(capsys):
    t0 = time.perf_counter()
    errors = {}
    for name, layer in _layers().items():
        c = 12 if name == "pixel_shuffle" else 3
        x, _ = smooth_probe(layer, (2, c, 8, 8), seed=1)
        errors[name] = gradcheck(layer, x).max_relative_error
    den = Model(DenoiserConfig(), seed=0)
    x, _ = smooth_probe(den, (1, 3, 8, 8))
    errors["denoiser"] = gradcheck(den, x).max_relative_error
    # 4x4 input, 8x8 output: a full 8x8-input check of the SR net alone
    # takes about two minutes on one core
    sr = Model(SrNetConfig(), seed=0)
    x, _ = smooth_probe(sr, (1, 3, 4, 4))
    errors["srnet"] = gradcheck(sr, x).max_relative_error
    elapsed = time.perf_counter() - t0
    worst = max(errors, key=errors.get)
    verdict(capsys, 3, errors[worst] < 1e-4 and elapsed < 120,
            f"{len(errors)} checks, worst {worst} {errors[worst]:.2e}, {elapsed:.0f}s")


# --- 4. denoiser training run -----------------------------------------------------

@pytest.fixture(scope="module")
def trained_denoiser(patches, tmp_path_factory):
    train_, test = patches
    x, y = noisy_pairs(train_, NoiseSpec(std=SIGMA, seed=1))
    model = Model(DenoiserConfig(), seed=0)
    t0 = time.perf_counter()
    train(model, x, y, TrainConfig(epochs=20, lr=1e-3, batch_size=16, seed=0))
    elapsed = time.perf_counter() - t0
    path = tmp_path_factory.mktemp("den") / "denoiser.bin"
    save_weights(model, path)
    return model, path, elapsed


def test_criterion_4_denoiser_training(capsys, patches, trained_denoiser):
    _, test = patches
    model, _, train_s = trained_denoiser
    assert len(test) >= 200
    noisy, clean = noisy_pairs(test, NoiseSpec(std=SIGMA, seed=99))
    p_noisy, p_den, s_noisy, s_den = [], [], [], []
    for n, c in zip(noisy, clean):
        d = denoise(n, model, patch_size=64)
        p_noisy.append(metrics.psnr(c, n))
        p_den.append(metrics.psnr(c, d))
        s_noisy.append(metrics.ssim(c, n))
        s_den.append(metrics.ssim(c, d))
    pn, pd, sn, sd = map(np.mean, (p_noisy, p_den, s_noisy, s_den))
    verdict(capsys, 4, pd >= pn + 3 and sd > sn and train_s < 600,
            f"{len(test)} held-out patches: PSNR {pn:.2f} -> {pd:.2f} dB, SSIM {sn:.3f} -> {sd:.3f}, "
            f"20 epochs in {train_s:.0f}s")


# --- 5. SR training run -------------------------------------------------------------

def test_criterion_5_sr_training(capsys, patches):
    train_, test = patches
    lr_tr, hr_tr = sr_pairs(train_, 2)
    lr_te, hr_te = sr_pairs(test, 2)
    assert len(lr_tr) >= 200
    model = Model(SrNetConfig(scale=2), seed=0)
    t0 = time.perf_counter()
    train(model, lr_tr, hr_tr, TrainConfig(epochs=10, lr=1e-3, batch_size=16, seed=0))
    elapsed = time.perf_counter() - t0
    sr = model.predict(lr_te, batch_size=16)
    means = {"srnet": np.mean([metrics.psnr(h, np.clip(s, 0, 1)) for h, s in zip(hr_te, sr)])}
    for k in ("nearest", "bicubic"):
        means[k] = np.mean([metrics.psnr(h, resample(l, ScaleSpec(2, k))) for h, l in zip(hr_te, lr_te)])
    # reported only: how far a flat input drifts after training
    drift = float(np.max(np.abs(super_resolve(np.full((3, 32, 32), 0.5), model) - 0.5)))
    ok = means["srnet"] >= means["nearest"] + 1 and means["srnet"] >= means["bicubic"] - 1 and elapsed < 900
    verdict(capsys, 5, ok, f"mean PSNR srnet {means['srnet']:.2f}, nearest {means['nearest']:.2f}, "
                           f"bicubic {means['bicubic']:.2f} dB on {len(lr_te)} held-out pairs, trained in {elapsed:.0f}s; "
                           f"constant-image max deviation {drift:.4f}")


# --- 6. baseline ordering -------------------------------------------------------------

def test_criterion_6_baseline_ordering(capsys, manifest):
    m, _ = manifest
    run = run_sr_eval(m, [Enhancer.classical(k) for k in ("nearest", "bilinear", "bicubic")], factor=2,
                      timing=False)
    n = len(run.results) // 3
    mean = {a.label: a.mean for a in run.aggregates if a.metric == "psnr_db"}
    ok = n >= 20 and mean["bicubic"] >= mean["bilinear"] >= mean["nearest"]
    verdict(capsys, 6, ok, f"{n} images: bicubic {mean['bicubic']:.2f} >= bilinear {mean['bilinear']:.2f} "
                           f">= nearest {mean['nearest']:.2f} dB")


# --- 7. determinism -------------------------------------------------------------------

def cli(*args):
    out = subprocess.run([sys.executable, "-m", "restorekit.cli", "--quiet", *map(str, args)],
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    return out.stdout


def _tree(root):
    return {os.path.relpath(os.path.join(d, f), root): open(os.path.join(d, f), "rb").read()
            for d, _, files in os.walk(root) for f in files}


def _mask_elapsed(text):
    rows = list(csv.DictReader(io.StringIO(text)))
    for r in rows:
        r.pop("elapsed_s")
    return rows


@pytest.fixture(scope="module")
def eval_runs(manifest, trained_denoiser, tmp_path_factory):
    _, mpath = manifest
    _, wpath, _ = trained_denoiser
    root = tmp_path_factory.mktemp("eval")
    for name, extra in [("a", ["--no-timing"]), ("b", ["--no-timing"]), ("timed1", []), ("timed2", [])]:
        cli("--seed", 5, "--threads", 1, "eval-denoise", "--manifest", mpath, "--weights", wpath, "--std", SIGMA,
            "--patch-size", 64, "--out-dir", root / name, *extra)
    return root


def test_criterion_7_determinism(capsys, manifest, eval_runs, tmp_path):
    a, b = _tree(eval_runs / "a"), _tree(eval_runs / "b")
    same_eval = a.keys() == b.keys() and all(a[k] == b[k] for k in a)
    n_svg = sum(k.endswith(".svg") for k in a)
    # wall-clock timings differ between runs; everything else must not
    t1 = (eval_runs / "timed1" / "report.csv").read_text()
    t2 = (eval_runs / "timed2" / "report.csv").read_text()
    same_timed = _mask_elapsed(t1) == _mask_elapsed(t2)
    _, mpath = manifest
    weights = []
    for i in range(2):
        out = tmp_path / f"w{i}.bin"
        cli("--seed", 3, "train-denoiser", "--manifest", mpath, "--out", out, "--epochs", 2, "--train-patch", 32,
            "--channels", 8, 16, 32, "--val-fraction", 0.1)
        weights.append(out.read_bytes())
    same_weights = weights[0] == weights[1]
    verdict(capsys, 7, same_eval and n_svg == 4 and same_timed and same_weights,
            f"eval-denoise CSV+JSON+{n_svg} SVG byte-identical: {same_eval}, timed runs equal apart from elapsed_s: "
            f"{same_timed}, training weight files identical: {same_weights}")


# --- 8. report fidelity -------------------------------------------------------------

def test_criterion_8_report_fidelity(capsys, manifest, eval_runs):
    m, _ = manifest
    rows = list(csv.DictReader(io.StringIO((eval_runs / "timed1" / "report.csv").read_text())))
    detail = [r for r in rows if r["image"] != AGGREGATE]
    aggs = [r for r in rows if r["image"] == AGGREGATE]
    stored = {}
    for r in aggs:
        (metric,) = [k for k in AGG_METRICS if r[k] != ""]
        stored[(r["set_or_enhancer"], metric, r["stat"])] = float(r[metric])
    recomputed = {}
    for s in m.test_splits():
        for metric in AGG_METRICS:
            vals = [float(r[metric]) for r in detail if r["set_or_enhancer"] == s]
            recomputed[(s, metric, "min")] = min(vals)
            recomputed[(s, metric, "max")] = max(vals)
            recomputed[(s, metric, "mean")] = math.fsum(vals) / len(vals)
    layout = {(s, k, st) for s in m.test_splits() for k in AGG_METRICS for st in ("min", "max", "mean")}
    exact = stored == recomputed
    ok = exact and set(stored) == layout and len(aggs) == len(layout) and len(detail) == 52
    verdict(capsys, 8, ok, f"{len(aggs)} aggregate rows = {len(AGG_METRICS)} metrics x {len(m.test_splits())} sets "
                           f"x 3 stats, recomputed exactly from {len(detail)} detail rows: {exact}")
