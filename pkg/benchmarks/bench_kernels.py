#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the pure-numpy fallback.

The hot loops of a territory scan are tile resampling and block-variance
scoring; this script times both backends on scan-shaped workloads and
verifies their outputs stay bit-identical while doing so.

Usage: python benchmarks/bench_kernels.py [--tile-px 500] [--repeats 5]
"""

import argparse
import time

import numpy as np

from wastescan import _kernels_py

try:
    from wastescan import _kernels as _compiled
except ImportError:
    _compiled = None


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--tile-px", type=int, default=500)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if _compiled is None:
        raise SystemExit("compiled extension not built; run pip install -e . first")

    n = args.tile_px
    rng = np.random.default_rng(0)
    tile = rng.integers(0, 256, (n, n, 3), dtype=np.uint8)
    gray = _kernels_py.gray_u8(tile)
    smap = rng.random((n // 8, n // 8))

    cases = [
        (f"area downsample {n}->{int(n * 0.6)}",
         lambda impl: impl.resample_u8(tile, int(n * 0.6), int(n * 0.6), 5 / 3, 5 / 3)),
        (f"bilinear upsample {n}->{int(n * 1.5)}",
         lambda impl: impl.resample_u8(tile, int(n * 1.5), int(n * 1.5), 2 / 3, 2 / 3)),
        ("luma conversion", lambda impl: impl.gray_u8(tile)),
        ("block variance (8 px)", lambda impl: impl.block_variance(gray, 8)),
        (f"map upsample {n // 8}->{n}",
         lambda impl: impl.bilinear_f64(smap, n, n)),
    ]

    print(f"tile {n}x{n}, best of {args.repeats}")
    print(f"{'kernel':<28} {'compiled':>10} {'python':>10} {'speedup':>8}")
    for name, fn in cases:
        t_c, out_c = timeit(lambda: fn(_compiled), args.repeats)
        t_p, out_p = timeit(lambda: fn(_kernels_py), args.repeats)
        identical = np.array_equal(np.asarray(out_c), np.asarray(out_p))
        flag = "" if identical else "  OUTPUTS DIFFER!"
        print(f"{name:<28} {t_c * 1e3:>8.2f}ms {t_p * 1e3:>8.2f}ms "
              f"{t_p / t_c:>7.1f}x{flag}")


if __name__ == "__main__":
    main()
