#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the numpy fallback.

Runs each hot kernel on representative workloads and prints per-backend
timings.  Results are checked for exact agreement before timing.

    python3 benchmarks/kernel_benchmark.py [--repeats N]
"""

import argparse
import time

import numpy as np

from bifrost._kernels import pyref

try:
    from bifrost._kernels import _core
except ImportError:
    _core = None


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def workloads(rng):
    x = rng.integers(-2, 3, (27, 27, 96)).astype(np.float32)
    w = rng.integers(-1, 2, (5, 5, 48, 256)).astype(np.float32)
    x_nchw = np.ascontiguousarray(x.transpose(2, 0, 1))
    w_kcrs = np.ascontiguousarray(w.transpose(3, 2, 0, 1))
    a = rng.integers(-2, 3, (256, 512)).astype(np.float32)
    b = rng.integers(-2, 3, (512, 256)).astype(np.float32)
    b_sparse = b.copy()
    b_sparse[rng.random(b.shape) < 0.5] = 0.0
    xs = rng.integers(-2, 3, (12, 12, 8)).astype(np.float32)
    ws = rng.integers(-1, 2, (3, 3, 4, 16)).astype(np.float32)
    xf = rng.integers(-2, 3, (4096,)).astype(np.float32)
    wf = rng.integers(-1, 2, (4096, 1024)).astype(np.float32)
    return [
        ("conv2d_nhwc 27x27x96 k256 g2",
         lambda k: k.conv2d_nhwc(x, w, 2, 2, 2, 1, 1)),
        ("conv2d_nchw 27x27x96 k256 g2",
         lambda k: k.conv2d_nchw(x_nchw, w_kcrs, 2, 2, 2, 1, 1)),
        ("im2col_nchw", lambda k: k.im2col_nchw(x_nchw, 5, 5, 2, 0, 2, 2, 1, 1)),
        ("gemm 256x512x256", lambda k: k.gemm(a, b)),
        ("sparse_gemm 50% zeros", lambda k: k.sparse_gemm(a, b_sparse)),
        ("systolic_gemm 16x16 mesh", lambda k: k.systolic_gemm(a, b, 16, 16)),
        ("flex_conv 12x12x8 k16 g2 wide tiles",
         lambda k: k.flex_conv(xs, ws, 2, 1, 1, 1, 1, 3, 3, 4, 2, 1, 2, 2)),
        ("flex_conv 12x12x8 k16 g2 all-ones",
         lambda k: k.flex_conv(xs, ws, 2, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1)),
        ("flex_fc 4096->1024 tiles (8,128)",
         lambda k: k.flex_fc(xf, wf, 8, 128)),
    ]


def as_arrays(result):
    if isinstance(result, tuple):
        return [r for r in result if isinstance(r, np.ndarray)]
    return [result]


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()
    if _core is None:
        print("compiled backend not built; run pip install -e . first")
        return 1
    rng = np.random.default_rng(0)
    rows = []
    for name, fn in workloads(rng):
        got_c, got_p = fn(_core), fn(pyref)
        for ac, ap in zip(as_arrays(got_c), as_arrays(got_p)):
            assert np.array_equal(ac, ap), f"backend mismatch in {name}"
        t_core = timeit(lambda: fn(_core), args.repeats)
        t_py = timeit(lambda: fn(pyref), args.repeats)
        rows.append((name, t_core, t_py))
    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'compiled':>10}  {'python':>10}  {'ratio':>7}")
    for name, t_core, t_py in rows:
        print(f"{name:<{width}}  {t_core * 1e3:>8.2f}ms  {t_py * 1e3:>8.2f}ms  "
              f"{t_py / t_core:>6.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
