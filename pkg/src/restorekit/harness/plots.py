"""Grouped bar charts of per-set aggregates, written as plain SVG.

One chart per metric: a bar at the mean of each group with a whisker from
min to max.  Coordinates are printed with fixed precision so identical runs
give byte-identical files.
"""
from __future__ import annotations

import math
import os
from xml.sax.saxutils import escape

from restorekit.harness.evaluate import AGG_METRICS, EvalRun

TITLES = {"rmse": "RMSE", "psnr_db": "PSNR (dB)", "ssim": "SSIM", "elapsed_s": "Time per image (s)"}
W, H = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 40, 70
PALETTE = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3", "#8c8c8c")


class PlotError(ValueError):
    pass


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    span = hi - lo
    raw = span / n
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.floor(lo / step) * step
    ticks = []
    t = start
    while t <= hi + step * 1e-9:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _f(v: float) -> str:
    return f"{v:.2f}"


def _label(v: float) -> str:
    return "inf" if math.isinf(v) else f"{v:.4g}"


def bar_chart(metric: str, groups: list[tuple[str, float, float, float]]) -> str:
    """SVG text for ``groups`` of ``(label, min, max, mean)``."""
    finite = [v for _, lo, hi, mean in groups for v in (lo, hi, mean) if math.isfinite(v)]
    lo = min([0.0] + finite)
    hi = max([0.0] + finite)
    if hi == lo:
        hi = lo + 1.0
    ticks = _nice_ticks(lo, hi)
    lo, hi = min(lo, ticks[0]), max(hi, ticks[-1])
    plot_w, plot_h = W - LEFT - RIGHT, H - TOP - BOTTOM

    def y(v):
        v = hi if v == math.inf else lo if v == -math.inf else v
        return TOP + plot_h * (hi - v) / (hi - lo)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
           f'font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2:.2f}" y="24" text-anchor="middle" font-size="15">{escape(TITLES.get(metric, metric))}'
           f' (mean, min-max whiskers)</text>']
    for t in ticks:
        ty = _f(y(t))
        out.append(f'<line x1="{LEFT}" y1="{ty}" x2="{W - RIGHT}" y2="{ty}" stroke="#dddddd"/>')
        out.append(f'<text x="{LEFT - 6}" y="{ty}" text-anchor="end" dominant-baseline="middle">{t:g}</text>')
    out.append(f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + plot_h}" stroke="black"/>')
    out.append(f'<line x1="{LEFT}" y1="{_f(y(0.0))}" x2="{W - RIGHT}" y2="{_f(y(0.0))}" stroke="black"/>')

    slot = plot_w / len(groups)
    bar = slot * 0.6
    for i, (label, vmin, vmax, mean) in enumerate(groups):
        cx = LEFT + slot * (i + 0.5)
        top, base = y(mean), y(0.0)
        colour = PALETTE[i % len(PALETTE)]
        out.append(f'<g class="group" data-label="{escape(label)}">')
        out.append(f'<rect x="{_f(cx - bar / 2)}" y="{_f(min(top, base))}" width="{_f(bar)}" '
                   f'height="{_f(abs(base - top))}" fill="{colour}"/>')
        y0, y1 = _f(y(vmin)), _f(y(vmax))
        out.append(f'<line x1="{_f(cx)}" y1="{y0}" x2="{_f(cx)}" y2="{y1}" stroke="black" stroke-width="1.5"/>')
        for yy in (y0, y1):
            out.append(f'<line x1="{_f(cx - bar / 6)}" y1="{yy}" x2="{_f(cx + bar / 6)}" y2="{yy}" stroke="black" stroke-width="1.5"/>')
        out.append(f'<text x="{_f(cx)}" y="{_f(min(top, y(vmax)) - 6)}" text-anchor="middle">{_label(mean)}</text>')
        out.append(f'<text x="{_f(cx)}" y="{H - BOTTOM + 18}" text-anchor="middle">{escape(label)}</text>')
        out.append('</g>')
    out.append('</svg>')
    return "\n".join(out) + "\n"


def emit_plots(run: EvalRun, out_dir) -> list[str]:
    """Write ``<metric>.svg`` for each summarised metric; returns the paths."""
    if not run.aggregates:
        raise PlotError("run has no aggregates to plot")
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for metric in AGG_METRICS:
        groups = [(a.label, a.min, a.max, a.mean) for a in run.aggregates if a.metric == metric]
        if not groups:
            continue
        path = os.path.join(out_dir, f"{metric}.svg")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(bar_chart(metric, groups))
        paths.append(path)
    return paths
