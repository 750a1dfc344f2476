"""Exact best-above-threshold nearest-neighbor index over unit vectors.

Deliberately a brute-force scan: at the scale this cache operates
(thousands of entries) exactness beats approximate structures, and the
scan itself is a compiled kernel (see _kernels). Ties on similarity break
toward the most recent insertion, which keeps lookups deterministic and
favors summaries of fresher document versions.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Hashable, Optional

import numpy as np

from ._kernels import scan_best
from .errors import DimensionError, DuplicateIdError
from .vectorspace import EmbeddingVector, normalize

_INITIAL_CAPACITY = 16


@dataclass(frozen=True)
class Match:
    """A lookup winner: entry id plus its cosine similarity to the probe."""

    entry_id: Hashable
    similarity: float


class SemanticIndex:
    """Threshold NN index with a fixed dimension.

    Concurrency: coarse readers-writer behavior via a single reentrant
    lock; queries never observe a partially inserted entry.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise DimensionError(f"dim must be >= 1, got {dim}")
        self._dim = dim
        self._lock = threading.RLock()
        self._matrix = np.zeros((_INITIAL_CAPACITY, dim), dtype=np.float64)
        self._seqs = np.zeros(_INITIAL_CAPACITY, dtype=np.int64)
        self._ids: list[Hashable] = []
        self._rows: dict[Hashable, int] = {}
        self._next_seq = 0

    @property
    def dim(self) -> int:
        return self._dim

    def size(self) -> int:
        with self._lock:
            return len(self._ids)

    def __contains__(self, entry_id: Hashable) -> bool:
        with self._lock:
            return entry_id in self._rows

    def _check_dim(self, vector: EmbeddingVector) -> None:
        if vector.dim != self._dim:
            raise DimensionError(f"index dim is {self._dim}, vector has {vector.dim}")

    def insert(self, vector: EmbeddingVector, entry_id: Hashable, seq: Optional[int] = None) -> int:
        """Store a vector (normalized in place) and return its insertion seq.

        `seq` is only supplied when rebuilding from a snapshot; normal
        inserts draw from the monotone internal counter.
        """
        self._check_dim(vector)
        unit = normalize(vector)
        with self._lock:
            if entry_id in self._rows:
                raise DuplicateIdError(f"entry id already present: {entry_id!r}")
            if seq is None:
                seq = self._next_seq
            self._next_seq = max(self._next_seq, seq + 1)
            row = len(self._ids)
            if row == self._matrix.shape[0]:
                self._matrix = np.vstack([self._matrix, np.zeros_like(self._matrix)])
                self._seqs = np.concatenate([self._seqs, np.zeros_like(self._seqs)])
            self._matrix[row] = unit.values
            self._seqs[row] = seq
            self._ids.append(entry_id)
            self._rows[entry_id] = row
            return seq

    def remove(self, entry_id: Hashable) -> bool:
        """Drop an entry; returns False if it was never there.

        Swap-with-last keeps the live rows contiguous for the scan kernel.
        """
        with self._lock:
            row = self._rows.pop(entry_id, None)
            if row is None:
                return False
            last = len(self._ids) - 1
            if row != last:
                self._matrix[row] = self._matrix[last]
                self._seqs[row] = self._seqs[last]
                moved = self._ids[last]
                self._ids[row] = moved
                self._rows[moved] = row
            self._ids.pop()
            return True

    def query_best(self, probe: EmbeddingVector, threshold: float) -> Optional[Match]:
        """Best entry with similarity >= threshold, or None.

        Exactly one deterministic winner: maximum similarity, most recent
        insertion on exact ties.
        """
        self._check_dim(probe)
        unit = normalize(probe)
        with self._lock:
            n = len(self._ids)
            if n == 0:
                return None
            row, sim = scan_best(self._matrix[:n], self._seqs[:n], unit.values)
            sim = max(-1.0, min(1.0, sim))
            if row < 0 or sim < threshold:
                return None
            return Match(entry_id=self._ids[row], similarity=sim)
