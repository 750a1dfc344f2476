"""Benchmark the similarity-scan kernel: numba JIT vs pure numpy.

Run both backends in one process (the fallback functions are importable
directly) and print per-query timings across index sizes. The env flag
SEMSUM_NO_NUMBA=1 selects the numpy path package-wide; here we compare
them side by side.

Usage: python benchmarks/bench_scan.py [--dim 64] [--repeats 200]
"""

import argparse
import time

import numpy as np

from semsumcache import _kernels


def bench(fn, matrix, seqs, probes, repeats):
    # warm up (numba compilation happens on first call)
    fn(matrix, seqs, probes[0])
    start = time.perf_counter()
    for i in range(repeats):
        fn(matrix, seqs, probes[i % len(probes)])
    return (time.perf_counter() - start) / repeats


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    probes = rng.standard_normal((32, args.dim))
    probes /= np.linalg.norm(probes, axis=1, keepdims=True)
    probes = list(probes)

    if not _kernels.USE_NUMBA:
        print("numba disabled via SEMSUM_NO_NUMBA; benchmarking numpy only")

    print(f"{'n':>8} {'numpy (us)':>12} {'numba (us)':>12} {'speedup':>8}")
    for n in (100, 1_000, 10_000, 100_000):
        matrix = rng.standard_normal((n, args.dim))
        matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
        seqs = np.arange(n, dtype=np.int64)
        t_np = bench(_kernels._scan_best_numpy, matrix, seqs, probes, args.repeats)
        if _kernels.USE_NUMBA:
            t_nb = bench(_kernels.scan_best, matrix, seqs, probes, args.repeats)
            print(f"{n:>8} {t_np * 1e6:>12.1f} {t_nb * 1e6:>12.1f} {t_np / t_nb:>8.2f}")
        else:
            print(f"{n:>8} {t_np * 1e6:>12.1f} {'-':>12} {'-':>8}")


if __name__ == "__main__":
    main()
