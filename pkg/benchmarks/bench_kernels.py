"""Benchmark the compiled kernel backend against the NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats 5]

Times sq_dists and kernel_stats at several problem sizes, checks both
backends agree numerically, and reports the speedup ratio.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from f3i import _kernels_py as py_impl

try:
    from f3i import _kernels as c_impl
except ImportError:
    c_impl = None


SIZES = [(50, 50, 100), (200, 200, 100), (500, 500, 50), (1000, 200, 200)]


def _time(fn, *args, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if c_impl is None:
        print("compiled backend unavailable; nothing to compare")
        return

    rng = np.random.default_rng(0)
    print(f"{'shape (n,m,f)':>18} {'op':>14} {'fallback':>10} "
          f"{'compiled':>10} {'speedup':>8}")
    for n, m, f in SIZES:
        A = np.ascontiguousarray(rng.normal(size=(n, f)))
        B = np.ascontiguousarray(rng.normal(size=(m, f)))
        np.testing.assert_allclose(
            c_impl.sq_dists(A, B), py_impl.sq_dists(A, B), rtol=1e-10, atol=1e-10
        )
        lc, wc = c_impl.kernel_stats(A, B, 0.25)
        lp, wp = py_impl.kernel_stats(A, B, 0.25)
        np.testing.assert_allclose(lc, lp, rtol=1e-10)
        np.testing.assert_allclose(wc, wp, rtol=1e-9, atol=1e-12)

        for op, fc, fp, extra in (
            ("sq_dists", c_impl.sq_dists, py_impl.sq_dists, ()),
            ("kernel_stats", c_impl.kernel_stats, py_impl.kernel_stats, (0.25,)),
        ):
            tc = _time(fc, A, B, *extra, repeats=args.repeats)
            tp = _time(fp, A, B, *extra, repeats=args.repeats)
            print(f"{f'({n},{m},{f})':>18} {op:>14} {tp * 1e3:9.2f}ms "
                  f"{tc * 1e3:9.2f}ms {tp / tc:7.2f}x")


if __name__ == "__main__":
    main()
