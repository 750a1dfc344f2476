"""Hot numeric kernels for the similarity scan.

The brute-force dot-product scan over the stored vectors is the hot path of
every cache lookup. Kernels are compiled with numba by default; setting
``SEMSUM_NO_NUMBA=1`` in the environment selects the pure-numpy fallback
(useful on platforms without a working numba, and for benchmarking one
against the other — see benchmarks/bench_scan.py).
"""

from __future__ import annotations

import os

import numpy as np

USE_NUMBA = os.environ.get("SEMSUM_NO_NUMBA", "") not in ("1", "true", "yes")


def _scan_best_numpy(matrix: np.ndarray, seqs: np.ndarray, probe: np.ndarray):
    """Return (row, similarity) of the best match, ties broken by larger seq.

    Returns (-1, -2.0) for an empty matrix.
    """
    n = matrix.shape[0]
    if n == 0:
        return -1, -2.0
    sims = matrix @ probe
    best_sim = sims.max()
    # exact-tie candidates; recency (larger insertion seq) wins
    ties = np.nonzero(sims == best_sim)[0]
    best = ties[np.argmax(seqs[ties])]
    return int(best), float(best_sim)


def _pairwise_dots_numpy(matrix: np.ndarray) -> np.ndarray:
    """Dot products of all unordered row pairs, in (i, j>i) order."""
    n = matrix.shape[0]
    gram = matrix @ matrix.T
    iu = np.triu_indices(n, k=1)
    return gram[iu]


if USE_NUMBA:
    from numba import njit

    @njit(cache=True)
    def _scan_best_jit(matrix, seqs, probe):  # pragma: no cover - compiled
        best = -1
        best_sim = -2.0
        best_seq = np.int64(-1)
        for i in range(matrix.shape[0]):
            s = 0.0
            for j in range(matrix.shape[1]):
                s += matrix[i, j] * probe[j]
            if s > best_sim or (s == best_sim and seqs[i] > best_seq):
                best = i
                best_sim = s
                best_seq = seqs[i]
        return best, best_sim

    @njit(cache=True)
    def _pairwise_dots_jit(matrix):  # pragma: no cover - compiled
        n = matrix.shape[0]
        d = matrix.shape[1]
        out = np.empty(n * (n - 1) // 2, dtype=np.float64)
        k = 0
        for i in range(n):
            for j in range(i + 1, n):
                s = 0.0
                for c in range(d):
                    s += matrix[i, c] * matrix[j, c]
                out[k] = s
                k += 1
        return out

    def scan_best(matrix: np.ndarray, seqs: np.ndarray, probe: np.ndarray):
        if matrix.shape[0] == 0:
            return -1, -2.0
        best, best_sim = _scan_best_jit(matrix, seqs, probe)
        return int(best), float(best_sim)

    pairwise_dots = _pairwise_dots_jit
else:
    scan_best = _scan_best_numpy
    pairwise_dots = _pairwise_dots_numpy
