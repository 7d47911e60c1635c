"""Compare the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N] [--json] [--end-to-end]

Each case reports the best-of-N wall time per call for both backends and
checks that their outputs are bit-identical.  ``--end-to-end`` also times a
denoiser forward+backward step on a 16x3x64x64 batch under each backend
(the backend is fixed at import, so each runs in its own interpreter).
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from restorekit._backend import compiled_kernels, python_kernels


def cases():
    rng = np.random.default_rng(0)
    # shapes seen while training the denoiser (64x64 patches, batch 16) and SR net
    for n, c, h, k, s in [(16, 3, 64, 3, 2), (16, 32, 32, 3, 2), (16, 128, 8, 3, 1), (16, 32, 32, 3, 1)]:
        x = rng.standard_normal((n, c, h, h))
        ho = (h + 2 - k) // s + 1
        yield (f"im2col  {n}x{c}x{h}x{h} k{k} s{s}", "im2col", (x, k, s, 1, ho, ho))
        cols = rng.standard_normal((c * k * k, n * ho * ho))
        yield (f"col2im  {n}x{c}x{h}x{h} k{k} s{s}", "col2im", (cols, x.shape, k, s, 1, ho, ho))
    counters = np.arange(3 * 512 * 512, dtype=np.uint64)
    yield ("counter_uniform 786432 samples", "counter_uniform", (0x1234ABCD, counters))


def run(repeat: int):
    if compiled_kernels is None:
        sys.exit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    rows = []
    for label, fn, args in cases():
        py, cy = getattr(python_kernels, fn), getattr(compiled_kernels, fn)
        same = np.array_equal(py(*args), cy(*args))
        t_py = min(timeit.repeat(lambda: py(*args), number=1, repeat=repeat))
        t_cy = min(timeit.repeat(lambda: cy(*args), number=1, repeat=repeat))
        rows.append({"case": label, "python_ms": t_py * 1e3, "cython_ms": t_cy * 1e3,
                     "speedup": t_py / t_cy, "identical": bool(same)})
    return rows


STEP = """
import timeit, numpy as np
from restorekit._backend import NAME
from restorekit.nn import DenoiserConfig, Model
m = Model(DenoiserConfig(), seed=0)
x = np.random.default_rng(0).random((16, 3, 64, 64))
def step():
    m.zero_grad()
    m.backward(m.forward(x) - x)
print(NAME, min(timeit.repeat(step, number=1, repeat=%d)))
"""


def end_to_end(repeat: int):
    out = {}
    for pure in ("1", "0"):
        env = dict(os.environ, RESTOREKIT_PURE_PYTHON=pure)
        res = subprocess.run([sys.executable, "-c", STEP % repeat], env=env, capture_output=True, text=True,
                             check=True)
        name, secs = res.stdout.split()
        out[name] = float(secs) * 1e3
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", action="store_true")
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args(argv)
    rows = run(args.repeat)
    e2e = end_to_end(args.repeat) if args.end_to_end else None
    if args.json:
        print(json.dumps({"kernels": rows, "train_step_ms": e2e}, indent=1))
        return
    print(f"{'case':40s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s}  identical")
    for r in rows:
        print(f"{r['case']:40s} {r['python_ms']:10.3f} {r['cython_ms']:10.3f} {r['speedup']:8.2f}  {r['identical']}")
    if e2e:
        print(f"\ndenoiser train step (16x3x64x64): numpy {e2e['python']:.1f} ms, cython {e2e['cython']:.1f} ms")


if __name__ == "__main__":
    main()
