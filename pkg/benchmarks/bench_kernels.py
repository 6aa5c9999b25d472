"""Compiled vs numpy kernel timings at the shapes training actually uses.

    python benchmarks/bench_kernels.py [--repeat N] [--json PATH]

Also times one CNN and one U-Time training step end to end, since the
GEMMs in those steps run in numpy/BLAS under either backend.
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from airpark import _kernels


def _cases(rng):
    x2 = rng.standard_normal((32, 16, 24, 12))
    cols2 = _kernels.backend_module("numpy").im2col2d(x2, 5, 5)
    x1 = rng.standard_normal((32, 64, 160))
    cols1 = _kernels.backend_module("numpy").im2col1d(x1, 3, 1)
    p2 = rng.standard_normal((32, 64, 168, 12))
    p1 = rng.standard_normal((32, 64, 160))
    _, idx2 = _kernels.backend_module("numpy").maxpool2d_forward(p2)
    _, idx1 = _kernels.backend_module("numpy").maxpool1d_forward(p1)
    g2 = rng.standard_normal(idx2.shape)
    g1 = rng.standard_normal(idx1.shape)
    vals = rng.uniform(0, 100, size=(2000, 12, 6))
    thr = np.sort(rng.uniform(20, 90, size=(2000, 12, 3)), axis=2)
    return {
        "im2col2d 32x16x24x12 k5": lambda m: m.im2col2d(x2, 5, 5),
        "col2im2d 32x16x24x12 k5": lambda m: m.col2im2d(cols2, x2.shape, 5, 5),
        "im2col1d 32x64x160 k3": lambda m: m.im2col1d(x1, 3, 1),
        "col2im1d 32x64x160 k3": lambda m: m.col2im1d(cols1, x1.shape, 3, 1),
        "maxpool2d fwd 32x64x168x12": lambda m: m.maxpool2d_forward(p2),
        "maxpool2d bwd 32x64x168x12": lambda m: m.maxpool2d_backward(g2, idx2, p2.shape),
        "maxpool1d fwd 32x64x160": lambda m: m.maxpool1d_forward(p1),
        "maxpool1d bwd 32x64x160": lambda m: m.maxpool1d_backward(g1, idx1, p1.shape),
        "block_levels 2000 blocks": lambda m: m.block_levels(vals, thr, 3, 3, True),
    }


def _best(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def _train_step_time(kind: str, window: int, repeat: int, pure: bool) -> float:
    code = f"""
import timeit, numpy as np
from airpark.models import ModelSpec, build_model
from airpark.nn.functional import softmax_cross_entropy
m = build_model(ModelSpec({kind!r}, {window}, 12), 0)
rng = np.random.default_rng(0)
x = rng.uniform(size=(32, {window}, 12)); y = rng.integers(0, 4, 32)
def step():
    loss = softmax_cross_entropy(m.forward(x, training=True, rng=rng), y)
    loss.backward()
step()
print(min(timeit.repeat(step, number=1, repeat={repeat})))
"""
    env = dict(os.environ, AIRPARK_PURE_PYTHON="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--json", help="also write results to this file")
    args = ap.parse_args(argv)
    try:
        ext = _kernels.backend_module("cython")
    except RuntimeError:
        print("compiled kernels not built; only the numpy backend is available", file=sys.stderr)
        return 1
    pure = _kernels.backend_module("numpy")
    rng = np.random.default_rng(0)
    rows = []
    print(f"{'kernel':<30s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, fn in _cases(rng).items():
        tp = _best(lambda: fn(pure), args.repeat)
        tc = _best(lambda: fn(ext), args.repeat)
        rows.append({"kernel": name, "numpy_s": tp, "cython_s": tc})
        print(f"{name:<30s} {tp * 1e3:10.3f} {tc * 1e3:10.3f} {tp / tc:8.2f}x")
    for kind, window in (("cnn", 24), ("utime", 168)):
        tp = _train_step_time(kind, window, args.repeat, pure=True)
        tc = _train_step_time(kind, window, args.repeat, pure=False)
        name = f"train step {kind} L={window} N=32"
        rows.append({"kernel": name, "numpy_s": tp, "cython_s": tc})
        print(f"{name:<30s} {tp * 1e3:10.3f} {tc * 1e3:10.3f} {tp / tc:8.2f}x")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
