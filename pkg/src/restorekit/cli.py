"""Command-line interface.

Every subcommand prints a one-line JSON summary on stdout and any prose on
stderr.  Exit status: 0 success, 1 usage error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import glob
import json
import math
import os
import sys

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class Ctx:
    def __init__(self, args):
        self.args = args
        self.quiet = args.quiet

    def say(self, msg: str):
        if not self.quiet:
            print(msg, file=sys.stderr, flush=True)


def _emit(summary: dict):
    print(json.dumps(summary, sort_keys=True, default=_json_default), flush=True)


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(f"not JSON serializable: {type(v).__name__}")


def _clean(v):
    return "inf" if isinstance(v, float) and math.isinf(v) else v


def _positive(kind):
    def conv(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a valid {kind.__name__}: {text!r}")
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return conv


def _nonneg_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _split_spec(text):
    name, sep, count = text.partition("=")
    if not sep or not name:
        raise argparse.ArgumentTypeError(f"split must look like NAME=COUNT, got {text!r}")
    try:
        n = int(count)
    except ValueError:
        raise argparse.ArgumentTypeError(f"split count must be an integer, got {count!r}")
    if n < 0:
        raise argparse.ArgumentTypeError("split count must be >= 0")
    return name, n


def _threads(args) -> int:
    return args.threads or os.cpu_count() or 1


# --- image-level commands -------------------------------------------------

def cmd_noise(ctx, a):
    from restorekit.degradation import NoiseSpec, add_gaussian_noise
    from restorekit.image import load_image, save_image
    img = load_image(a.input)
    spec = NoiseSpec(a.mean, a.std, a.seed, not a.no_clip)
    save_image(add_gaussian_noise(img, spec), a.output)
    ctx.say(f"added N({a.mean}, {a.std}^2) noise with seed {a.seed} -> {a.output}")
    return {"command": "noise", "output": a.output, "seed": a.seed, "std": a.std, "mean": a.mean}


def cmd_resample(ctx, a):
    from restorekit.degradation import ScaleSpec, resample
    from restorekit.image import load_image, save_image
    out = resample(load_image(a.input), ScaleSpec(a.factor, a.kernel))
    save_image(out, a.output)
    ctx.say(f"{a.kernel} x{a.factor:g} -> {out.shape[2]}x{out.shape[1]} {a.output}")
    return {"command": "resample", "output": a.output, "height": out.shape[1], "width": out.shape[2]}


def cmd_compare(ctx, a):
    from restorekit import metrics
    from restorekit.image import load_image
    ref, proc = load_image(a.reference), load_image(a.processed)
    scale = 255.0 if a.scale_255 else 1.0
    peak = None if a.peak_per_image else a.peak
    params = metrics.SsimParams.for_peak(scale, window=a.window)
    rep = metrics.compare(ref, proc, peak=peak, params=params, scale=scale)
    ctx.say(f"mse {rep.mse:.6g}  rmse {rep.rmse:.6g}  psnr {rep.psnr:.4f} dB  ssim {rep.ssim:.6f}")
    if a.json:
        return rep.to_json()
    return {"command": "compare", **rep.to_json()}


def cmd_split(ctx, a):
    from restorekit import tiling
    from restorekit.image import load_image, save_image
    patches, grid = tiling.split(load_image(a.input), a.patch_size, a.stride)
    os.makedirs(a.out_dir, exist_ok=True)
    for i, p in enumerate(patches):
        save_image(p, os.path.join(a.out_dir, f"patch_{i:05d}.png"))
    with open(os.path.join(a.out_dir, "grid.json"), "w") as fh:
        json.dump(grid.to_dict(), fh, sort_keys=True)
    ctx.say(f"{len(patches)} patches ({grid.rows}x{grid.cols}) -> {a.out_dir}")
    return {"command": "split", "patches": len(patches), "rows": grid.rows, "cols": grid.cols}


def cmd_stitch(ctx, a):
    from restorekit import tiling
    from restorekit.image import load_image, save_image
    try:
        with open(os.path.join(a.in_dir, "grid.json")) as fh:
            grid = tiling.TileGrid.from_dict(json.load(fh))
    except (OSError, ValueError, TypeError, KeyError) as exc:
        raise RuntimeError(f"cannot read grid.json in {a.in_dir}: {exc}") from exc
    paths = sorted(glob.glob(os.path.join(a.in_dir, "patch_*.png")))
    img = tiling.stitch([load_image(p) for p in paths], grid)
    save_image(img, a.output)
    ctx.say(f"stitched {len(paths)} patches -> {a.output}")
    return {"command": "stitch", "output": a.output, "height": img.shape[1], "width": img.shape[2]}


# --- training and inference -----------------------------------------------

def _training_images(a) -> list[str]:
    from restorekit.harness.manifest import DatasetManifest, scan_images
    if a.manifest:
        m = DatasetManifest.load(a.manifest)
        if "train" not in m.splits:
            raise RuntimeError("manifest has no 'train' split")
        paths = [m.abspath(e) for e in m.splits["train"]]
    else:
        paths = [os.path.join(a.data, rel) for rel, _, _ in scan_images(a.data)]
    if not paths:
        raise RuntimeError("no training images found")
    return paths


def _train_config(a):
    from restorekit.nn import TrainConfig
    workers = _threads(a) if a.nondeterministic_train else 1
    return TrainConfig(optimizer=a.optimizer, lr=a.lr, batch_size=a.batch_size, epochs=a.epochs,
                       seed=a.seed, workers=workers)


def _fit(ctx, a, model, x, y):
    from restorekit.harness.data import split_val
    from restorekit.nn import save_weights, train
    (xt, yt), val = split_val(x, y, a.val_fraction, a.seed)
    ctx.say(f"training {model.kind}: {len(xt)} pairs, {model.n_params()} parameters")
    cfg = _train_config(a)

    def progress(rec):
        extra = f"  val {rec['val_loss']:.6f}" if "val_loss" in rec else ""
        ctx.say(f"epoch {rec['epoch']:3d}  loss {rec['train_loss']:.6f}{extra}  ({rec['seconds']:.1f}s)")

    log = train(model, xt, yt, cfg, val=val, log_path=a.log, progress=progress)
    save_weights(model, a.out)
    return {"output": a.out, "pairs": len(xt), "epochs": cfg.epochs, "final_loss": log.losses[-1],
            "val_loss": log.epochs[-1].get("val_loss")}


def cmd_train_denoiser(ctx, a):
    from restorekit.degradation import NoiseSpec
    from restorekit.harness.data import noisy_pairs, patch_stack
    from restorekit.nn import DenoiserConfig, Model
    clean = patch_stack(_training_images(a), a.train_patch)
    noisy, clean = noisy_pairs(clean, NoiseSpec(a.mean, a.std, a.seed))
    model = Model(DenoiserConfig(channels=tuple(a.channels)), seed=a.seed)
    return {"command": "train-denoiser", **_fit(ctx, a, model, noisy, clean)}


def cmd_train_sr(ctx, a):
    from restorekit.harness.data import patch_stack, sr_pairs
    from restorekit.nn import Model, SrNetConfig
    lr, hr = sr_pairs(patch_stack(_training_images(a), a.train_patch), a.factor)
    model = Model(SrNetConfig(features=a.features, blocks=a.blocks, scale=a.factor), seed=a.seed)
    return {"command": "train-sr", **_fit(ctx, a, model, lr, hr)}


def cmd_denoise(ctx, a):
    from restorekit.image import load_image, save_image
    from restorekit.nn import load_weights
    from restorekit.restore import denoise
    out = denoise(load_image(a.input), load_weights(a.weights), a.patch_size, a.stride)
    save_image(out, a.output)
    ctx.say(f"denoised -> {a.output}")
    return {"command": "denoise", "output": a.output}


def cmd_upscale(ctx, a):
    from restorekit.degradation import ScaleSpec, resample
    from restorekit.image import load_image, save_image
    from restorekit.nn import load_weights
    from restorekit.restore import super_resolve
    img = load_image(a.input)
    if a.weights:
        out = super_resolve(img, load_weights(a.weights), a.factor)
    else:
        out = resample(img, ScaleSpec(a.factor or 2, a.kernel))
    save_image(out, a.output)
    ctx.say(f"upscaled to {out.shape[2]}x{out.shape[1]} -> {a.output}")
    return {"command": "upscale", "output": a.output, "height": out.shape[1], "width": out.shape[2]}


# --- harness ----------------------------------------------------------------

def cmd_manifest(ctx, a):
    from restorekit.harness.manifest import build_manifest, default_splits, scan_images
    splits = dict(a.split) if a.split else None
    if len(splits or {}) != len(a.split or []):
        raise UsageError("split names must be unique")
    if splits is None:
        splits = default_splits(len(scan_images(a.root)), a.tests)
    m = build_manifest(a.root, a.seed, splits)
    m.save(a.out)
    counts = {k: len(v) for k, v in m.splits.items()}
    ctx.say(f"manifest {a.out}: " + ", ".join(f"{k}={v}" for k, v in counts.items()))
    return {"command": "manifest", "output": a.out, "splits": counts}


def _write_run(ctx, a, run):
    from restorekit.harness import plots, report
    os.makedirs(a.out_dir, exist_ok=True)
    csv_path = os.path.join(a.out_dir, "report.csv")
    json_path = os.path.join(a.out_dir, "run.json")
    report.emit_report(run, "csv", csv_path)
    report.emit_report(run, "json", json_path)
    svgs = [] if a.no_plots else plots.emit_plots(run, os.path.join(a.out_dir, "plots"))
    for agg in run.aggregates:
        if agg.metric == "psnr_db":
            ctx.say(f"{agg.label:>12}: PSNR mean {agg.mean:.3f} dB (min {agg.min:.3f}, max {agg.max:.3f})")
    means = {f"{g.label}/{g.metric}": _clean(g.mean) for g in run.aggregates}
    return {"run_id": run.run_id, "report": csv_path, "run": json_path, "plots": svgs,
            "images": len(run.results), "means": means}


def _splits_arg(a):
    return a.splits.split(",") if a.splits else None


def cmd_eval_denoise(ctx, a):
    from restorekit.degradation import NoiseSpec
    from restorekit.harness.evaluate import Enhancer, run_denoise_eval
    from restorekit.harness.manifest import DatasetManifest
    if bool(a.weights) == bool(a.identity):
        raise UsageError("give exactly one of --weights or --identity")
    enh = Enhancer.identity() if a.identity else Enhancer.neural(a.weights, patch_size=a.patch_size,
                                                                  stride=a.stride)
    run = run_denoise_eval(DatasetManifest.load(a.manifest), enh, NoiseSpec(a.mean, a.std, a.seed),
                           threads=_threads(a), scale=255.0 if a.scale_255 else 1.0,
                           timing=not a.no_timing, splits=_splits_arg(a))
    return {"command": "eval-denoise", **_write_run(ctx, a, run)}


def parse_enhancer(text: str):
    """``nearest|bilinear|bicubic|area|identity``, ``neural:WEIGHTS`` or
    ``NAME=external:COMMAND``; ``NAME=`` may prefix any form."""
    from restorekit.degradation import KERNELS
    from restorekit.harness.evaluate import Enhancer
    name = None
    if "=" in text.split(":", 1)[0]:
        name, text = text.split("=", 1)
    kind, _, rest = text.partition(":")
    if text in KERNELS:
        return Enhancer.classical(text, name)
    if text == "identity":
        return Enhancer.identity(name or "identity")
    if kind == "neural" and rest:
        return Enhancer.neural(rest, name or os.path.splitext(os.path.basename(rest))[0])
    if kind == "external" and rest:
        return Enhancer.external(rest, name or "external")
    raise UsageError(f"cannot parse enhancer {text!r}")


def cmd_eval_sr(ctx, a):
    from restorekit.harness.evaluate import run_sr_eval
    from restorekit.harness.manifest import DatasetManifest
    specs = a.enhancer or ["nearest", "bilinear", "bicubic", "area"]
    enhancers = [parse_enhancer(s) for s in specs]
    run = run_sr_eval(DatasetManifest.load(a.manifest), enhancers, a.factor, threads=_threads(a),
                      scale=255.0 if a.scale_255 else 1.0, timing=not a.no_timing, splits=_splits_arg(a))
    return {"command": "eval-sr", **_write_run(ctx, a, run)}


def cmd_report(ctx, a):
    from restorekit.harness import report
    run = report.load_run(a.run)
    report.emit_report(run, a.format, a.out)
    ctx.say(f"{a.format} report -> {a.out}")
    return {"command": "report", "output": a.out, "rows": len(run.results) + 3 * len(run.aggregates)}


def cmd_plot(ctx, a):
    from restorekit.harness import plots, report
    paths = plots.emit_plots(report.load_run(a.run), a.out_dir)
    ctx.say(f"{len(paths)} charts -> {a.out_dir}")
    return {"command": "plot", "plots": paths}


def cmd_gradcheck(ctx, a):
    from restorekit.nn import DenoiserConfig, Model, SrNetConfig, gradcheck, load_weights, smooth_probe
    if a.weights:
        model = load_weights(a.weights)
    elif a.model == "denoiser":
        model = Model(DenoiserConfig(), seed=a.seed)
    elif a.model == "srnet":
        model = Model(SrNetConfig(), seed=a.seed)
    else:
        model = Model({"kind": "conv", "in_ch": 3, "out_ch": 3}, seed=a.seed)
    # finite differences are meaningless across a ReLU kink, so redraw the
    # probe until every ReLU input keeps well clear of zero
    x, probe_seed = smooth_probe(model, (a.batch, 3, a.size, a.size), margin=10 * a.step, seed=a.seed)
    rep = gradcheck(model, x, h=a.step, seed=a.seed)
    ok = rep.max_relative_error < a.tol
    ctx.say(f"{model.kind}: max relative error {rep.max_relative_error:.3e} over {rep.checked} entries "
            f"({'ok' if ok else 'FAILED'} at tol {a.tol:g})")
    return {"command": "gradcheck", "model": model.kind, "ok": ok, "probe_seed": probe_seed, **rep.to_json()}


# --- parser ---------------------------------------------------------------

def _train_flags(p, epochs):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="directory of clean training images (PNG/PPM)")
    src.add_argument("--manifest", help="manifest JSON; its 'train' split is used")
    p.add_argument("--out", required=True, help="output weight file")
    p.add_argument("--log", help="write the per-epoch loss trace here (JSON lines)")
    p.add_argument("--train-patch", type=_positive(int), default=64, help="training patch size (default 64)")
    p.add_argument("--epochs", type=_positive(int), default=epochs, help=f"training epochs (default {epochs})")
    p.add_argument("--lr", type=_nonneg_float, default=1e-3, help="learning rate (default 1e-3)")
    p.add_argument("--batch-size", type=_positive(int), default=16, help="minibatch size (default 16)")
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam", help="default adam")
    p.add_argument("--val-fraction", type=_nonneg_float, default=0.0,
                   help="fraction of pairs held out for a validation loss (default 0)")
    p.add_argument("--nondeterministic-train", action="store_true",
                   help="shard minibatches over --threads workers (not bit-reproducible)")


def _eval_flags(p):
    p.add_argument("--manifest", required=True, help="manifest JSON written by the manifest command")
    p.add_argument("--out-dir", required=True, help="directory for report.csv, run.json and plots/")
    p.add_argument("--splits", help="comma-separated test splits (default: all but 'train')")
    p.add_argument("--scale-255", action="store_true", help="compute metrics on the 0-255 scale")
    p.add_argument("--no-timing", action="store_true",
                   help="record elapsed_s as 0 so reports are byte-reproducible")
    p.add_argument("--no-plots", action="store_true", help="skip the SVG charts")


COMMANDS = {}


def build_parser() -> Parser:
    from restorekit.degradation import KERNELS

    parser = Parser(prog="restorekit", description="Image denoising, super-resolution and quality evaluation.")
    parser.add_argument("--seed", type=int, default=0, help="seed for noise, shuffles and initialization (default 0)")
    parser.add_argument("--threads", type=_positive(int), default=None,
                        help="worker threads for evaluation (default: all cores)")
    parser.add_argument("--quiet", action="store_true", help="no progress messages on stderr")
    parser.add_argument("--config", help="JSON file of flag defaults for the subcommand; flags override it")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=Parser)
    sub.required = True

    # global flags are accepted after the subcommand too
    common = Parser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, help="same as the global --seed")
    common.add_argument("--threads", type=_positive(int), help="same as the global --threads")
    common.add_argument("--quiet", action="store_true", help="same as the global --quiet")

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_, description=help_, parents=[common])
        COMMANDS[name] = fn
        return p

    p = add("noise", cmd_noise, "add seeded Gaussian noise to an image")
    p.add_argument("input", help="input PNG/PPM"), p.add_argument("output", help="output PNG")
    p.add_argument("--std", type=_nonneg_float, default=0.3, help="noise std on the [0,1] scale (default 0.3)")
    p.add_argument("--mean", type=float, default=0.0, help="noise mean (default 0)")
    p.add_argument("--no-clip", action="store_true", help="do not clamp to [0,1] before saving")

    p = add("resample", cmd_resample, "rescale an image with a classical kernel")
    p.add_argument("input", help="input PNG/PPM"), p.add_argument("output", help="output PNG")
    p.add_argument("--factor", type=_positive(float), required=True, help="scale factor, e.g. 0.5 or 2")
    p.add_argument("--kernel", choices=KERNELS, default="bicubic", help="default bicubic")

    p = add("compare", cmd_compare, "full-reference metrics of a processed image against a reference")
    p.add_argument("reference", help="reference image"), p.add_argument("processed", help="image to score")
    p.add_argument("--json", action="store_true", help="print only the metric object")
    peak = p.add_mutually_exclusive_group()
    peak.add_argument("--peak", type=_positive(float), default=1.0, help="PSNR peak on the [0,1] scale (default 1)")
    peak.add_argument("--peak-per-image", action="store_true", help="use the reference image's maximum as peak")
    p.add_argument("--scale-255", action="store_true", help="report metrics on the 0-255 scale")
    p.add_argument("--window", type=_positive(int), default=None, help="SSIM window size (default: global)")

    p = add("split", cmd_split, "cut an image into patches plus grid.json")
    p.add_argument("input", help="input PNG/PPM"), p.add_argument("out_dir", help="directory for the patches")
    p.add_argument("--patch-size", type=_positive(int), default=256, help="square patch side (default 256)")
    p.add_argument("--stride", type=_positive(int), default=None, help="default: patch size")

    p = add("stitch", cmd_stitch, "reassemble patches written by split")
    p.add_argument("in_dir", help="directory written by split"), p.add_argument("output", help="output PNG")

    p = add("train-denoiser", cmd_train_denoiser, "train the convolutional autoencoder denoiser")
    _train_flags(p, epochs=20)
    p.add_argument("--std", type=_nonneg_float, default=0.3, help="training noise std (default 0.3)")
    p.add_argument("--mean", type=float, default=0.0, help="training noise mean (default 0)")
    p.add_argument("--channels", type=_positive(int), nargs="+", default=[32, 64, 128],
                   help="encoder widths (default 32 64 128)")

    p = add("train-sr", cmd_train_sr, "train the residual super-resolution network")
    _train_flags(p, epochs=10)
    p.add_argument("--factor", type=_positive(int), default=2, help="upscale factor (default 2)")
    p.add_argument("--features", type=_positive(int), default=32, help="feature channels (default 32)")
    p.add_argument("--blocks", type=_positive(int), default=4, help="residual blocks (default 4)")

    p = add("denoise", cmd_denoise, "denoise an image patch by patch")
    p.add_argument("input", help="noisy PNG/PPM"), p.add_argument("output", help="output PNG")
    p.add_argument("--weights", required=True, help="denoiser weight file")
    p.add_argument("--patch-size", type=_positive(int), default=256, help="inference patch side (default 256)")
    p.add_argument("--stride", type=_positive(int), default=None, help="patch stride (default: patch size)")

    p = add("upscale", cmd_upscale, "super-resolve with trained weights or a classical kernel")
    p.add_argument("input", help="low-resolution PNG/PPM"), p.add_argument("output", help="output PNG")
    p.add_argument("--weights", help="SR weight file (default: classical --kernel)")
    p.add_argument("--factor", type=_positive(int), default=None,
                   help="upscale factor (default: the model's, or 2 for a kernel)")
    p.add_argument("--kernel", choices=KERNELS, default="bicubic", help="default bicubic")

    p = add("manifest", cmd_manifest, "build a seeded train/test manifest of an image directory")
    p.add_argument("root", help="directory of PNG/PPM images")
    p.add_argument("--out", required=True, help="manifest JSON to write")
    p.add_argument("--split", type=_split_spec, action="append",
                   help="NAME=COUNT, repeatable, in order (default: half train, rest over --tests sets)")
    p.add_argument("--tests", type=_positive(int), default=4, help="number of test sets by default (4)")

    p = add("eval-denoise", cmd_eval_denoise, "noise, denoise and score every test image")
    _eval_flags(p)
    p.add_argument("--weights", help="denoiser weight file")
    p.add_argument("--identity", action="store_true", help="pass noisy images through unchanged")
    p.add_argument("--std", type=_nonneg_float, default=0.3, help="noise std (default 0.3)")
    p.add_argument("--mean", type=float, default=0.0, help="noise mean (default 0)")
    p.add_argument("--patch-size", type=_positive(int), default=256, help="inference patch side (default 256)")
    p.add_argument("--stride", type=_positive(int), default=None, help="patch stride (default: patch size)")

    p = add("eval-sr", cmd_eval_sr, "downscale, upscale with each enhancer and score")
    _eval_flags(p)
    p.add_argument("--factor", type=_positive(int), default=2, help="downscale/upscale factor (default 2)")
    p.add_argument("--enhancer", action="append",
                   help="kernel name, identity, neural:WEIGHTS or NAME=external:'CMD {in} {out} {factor}'; "
                        "repeatable (default: nearest, bilinear, bicubic, area)")

    p = add("report", cmd_report, "re-emit a saved run as CSV or JSON")
    p.add_argument("--run", required=True, help="run.json written by an eval command")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="default csv")
    p.add_argument("--out", required=True, help="output file")

    p = add("plot", cmd_plot, "bar charts (SVG) of a saved run")
    p.add_argument("--run", required=True, help="run.json written by an eval command")
    p.add_argument("--out-dir", required=True, help="directory for the SVG files")

    p = add("gradcheck", cmd_gradcheck, "finite-difference check of backpropagated gradients")
    p.add_argument("--model", choices=("denoiser", "srnet", "conv"), default="conv",
                   help="freshly initialized model to check (default conv)")
    p.add_argument("--weights", help="check a saved model instead")
    p.add_argument("--size", type=_positive(int), default=8, help="probe input side (default 8)")
    p.add_argument("--batch", type=_positive(int), default=1, help="probe batch size (default 1)")
    p.add_argument("--step", type=_positive(float), default=1e-5, help="central-difference step (default 1e-5)")
    p.add_argument("--tol", type=_positive(float), default=1e-4, help="pass threshold (default 1e-4)")
    return parser


GLOBAL_VALUED = ("--seed", "--threads", "--config")


def _config_tokens(cfg: dict, actions: dict) -> list[str]:
    tokens = []
    for key, value in cfg.items():
        action = actions[key]
        flag = action.option_strings[-1]
        if isinstance(action, argparse._StoreTrueAction):
            if not isinstance(value, bool):
                raise UsageError(f"config key {key!r} must be true or false")
            tokens += [flag] if value else []
        elif isinstance(value, list):
            if isinstance(action, argparse._AppendAction):
                for v in value:
                    tokens += [flag, str(v)]
            else:
                tokens += [flag] + [str(v) for v in value]
        elif value is not None:
            tokens += [flag, str(value)]
    return tokens


def _apply_config(parser, argv, args):
    """Re-parse with the config file's entries spliced in ahead of the
    command-line flags, so they go through the same validation and any flag
    given explicitly wins."""
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[args.command]
    top_actions = {a.dest: a for a in parser._actions if a.option_strings and a.dest in ("seed", "threads", "quiet")}
    sub_actions = {a.dest: a for a in sub._actions
                   if a.option_strings and a.dest not in ("help", "seed", "threads", "quiet")}
    unknown = sorted(set(cfg) - set(top_actions) - set(sub_actions))
    if unknown:
        raise UsageError(f"unknown config key(s) for {args.command}: {', '.join(unknown)}")
    top = _config_tokens({k: v for k, v in cfg.items() if k in top_actions}, top_actions)
    rest = _config_tokens({k: v for k, v in cfg.items() if k not in top_actions}, sub_actions)
    # locate the subcommand token, skipping values of global options
    i = 0
    while argv[i] != args.command:
        i += 2 if argv[i] in GLOBAL_VALUED else 1
    return parser.parse_args(top + argv[:i + 1] + rest + argv[i + 1:])


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        if args.config:
            args = _apply_config(parser, argv, args)
        summary = COMMANDS[args.command](Ctx(args), args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        print(f"restorekit {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, RuntimeError, TypeError, KeyError) as exc:
        print(f"restorekit {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    _emit(summary)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
