"""CSV and JSON reports for evaluation runs.

Numbers are written with 17 significant digits so every float64 survives a
write/parse round trip unchanged; an infinite PSNR is written as ``inf``.
Aggregate rows follow the detail rows, one per (group, metric, stat), with
``image = "__aggregate__"`` and the value in that metric's column.
"""
from __future__ import annotations

import csv
import io
import json
import math

from restorekit import metrics
from restorekit.harness.evaluate import AGG_METRICS, STATS, EvalRun, ImageResult, aggregate_rows

COLUMNS = ("run_id", "task", "set_or_enhancer", "image", "mse", "rmse", "psnr_db", "ssim", "elapsed_s", "stat")
VALUE_COLUMNS = ("mse", "rmse", "psnr_db", "ssim", "elapsed_s")
AGGREGATE = "__aggregate__"


class ReportError(ValueError):
    pass


def fmt(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(float(v), ".17g")


def _num(v):
    return fmt(v) if math.isinf(v) else float(v)


def _check(run: EvalRun):
    if not run.results:
        raise ReportError("cannot report an empty run")


def csv_rows(run: EvalRun) -> list[dict]:
    _check(run)
    rows = []
    for r in run.results:
        row = {k: (fmt(v) if k in VALUE_COLUMNS else v) for k, v in r.row().items()}
        rows.append({"run_id": run.run_id, "task": run.task, **row, "stat": ""})
    for agg in run.aggregates:
        for stat in STATS:
            row = dict.fromkeys(COLUMNS, "")
            row.update(run_id=run.run_id, task=run.task, set_or_enhancer=agg.label, image=AGGREGATE, stat=stat)
            row[agg.metric] = fmt(getattr(agg, stat))
            rows.append(row)
    return rows


def to_csv(run: EvalRun) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(csv_rows(run))
    return buf.getvalue()


def to_dict(run: EvalRun) -> dict:
    _check(run)
    return {
        "run_id": run.run_id,
        "task": run.task,
        "seed": run.seed,
        "scale": run.scale,
        "environment": run.environment,
        "degradation": run.degradation,
        "enhancers": run.enhancers,
        "results": [{"set_or_enhancer": r.group, "split": r.split, "image": r.image,
                     "mse": _num(r.report.mse), "rmse": _num(r.report.rmse), "psnr_db": _num(r.report.psnr),
                     "ssim": _num(r.report.ssim), "elapsed_s": _num(r.report.elapsed)} for r in run.results],
        "aggregates": [{"label": a.label, "metric": a.metric, "min": _num(a.min), "max": _num(a.max),
                        "mean": _num(a.mean)} for a in run.aggregates],
    }


def to_json(run: EvalRun) -> str:
    return json.dumps(to_dict(run), indent=1, sort_keys=True) + "\n"


def from_dict(d: dict) -> EvalRun:
    try:
        results = [ImageResult(r["set_or_enhancer"], r["image"],
                               metrics.MetricReport(float(r["mse"]), float(r["rmse"]), float(r["psnr_db"]),
                                                    float(r["ssim"]), float(r["elapsed_s"])), r.get("split", ""))
                   for r in d["results"]]
        aggs = [metrics.AggregateRow(a["label"], a["metric"], float(a["min"]), float(a["max"]), float(a["mean"]))
                for a in d["aggregates"]]
        return EvalRun(d["run_id"], d["task"], d["degradation"], d["enhancers"], results, aggs,
                       d.get("environment", ""), d.get("scale", 1.0), d.get("seed", 0))
    except (KeyError, TypeError, ValueError) as exc:
        raise ReportError(f"malformed run JSON: {exc}") from exc


def load_run(path) -> EvalRun:
    try:
        with open(path, encoding="utf-8") as fh:
            return from_dict(json.load(fh))
    except (OSError, json.JSONDecodeError) as exc:
        raise ReportError(f"cannot read run {path}: {exc}") from exc


def emit_report(run: EvalRun, fmt_name: str, path) -> str:
    """Write the run as ``csv`` or ``json`` to ``path`` and return the text."""
    if fmt_name == "csv":
        text = to_csv(run)
    elif fmt_name == "json":
        text = to_json(run)
    else:
        raise ReportError(f"unknown report format {fmt_name!r}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return text


def read_csv(path) -> tuple[list[dict], list[dict]]:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_csv(fh.read())


def parse_csv(text: str) -> tuple[list[dict], list[dict]]:
    """Parse a CSV report into ``(detail_rows, aggregate_rows)`` with floats."""
    detail, aggs = [], []
    for row in csv.DictReader(io.StringIO(text)):
        parsed = dict(row)
        for k in VALUE_COLUMNS:
            parsed[k] = float(row[k]) if row[k] != "" else None
        (aggs if row["image"] == AGGREGATE else detail).append(parsed)
    return detail, aggs


def recompute_aggregates(detail_rows) -> dict[tuple[str, str, str], float]:
    """``{(group, metric, stat): value}`` recomputed from detail rows."""
    out = {}
    for agg in aggregate_rows(detail_rows):
        for stat in STATS:
            out[(agg.label, agg.metric, stat)] = getattr(agg, stat)
    return out


def stored_aggregates(agg_rows) -> dict[tuple[str, str, str], float]:
    out = {}
    for row in agg_rows:
        metric = next(m for m in AGG_METRICS if row[m] is not None)
        out[(row["set_or_enhancer"], metric, row["stat"])] = row[metric]
    return out
