"""Embedding vectors and the similarity arithmetic behind cache decisions."""

from __future__ import annotations

from typing import Iterable, Union

import numpy as np

from .errors import DegenerateVectorError, DimensionError

# Norms below this are treated as the zero vector (upstream provider bug).
_ZERO_NORM = 1e-12

VectorLike = Union["EmbeddingVector", Iterable[float], np.ndarray]


class EmbeddingVector:
    """Fixed-dimension real vector; immutable once constructed.

    All values must be finite. Vectors are stored as a flat contiguous
    float64 array so that batched scans over many of them stay cheap.
    """

    __slots__ = ("_values",)

    def __init__(self, values: VectorLike):
        if isinstance(values, EmbeddingVector):
            arr = values._values
        else:
            arr = np.ascontiguousarray(values, dtype=np.float64)
        if arr.ndim != 1 or arr.shape[0] < 1:
            raise DimensionError(f"expected a 1-d vector with dim >= 1, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DegenerateVectorError("vector contains NaN or infinite values")
        arr = arr.copy()
        arr.setflags(write=False)
        self._values = arr

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def dim(self) -> int:
        return self._values.shape[0]

    def norm(self) -> float:
        return float(np.linalg.norm(self._values))

    def is_zero(self) -> bool:
        return self.norm() < _ZERO_NORM

    def tolist(self) -> list[float]:
        return self._values.tolist()

    def __len__(self) -> int:
        return self.dim

    def __eq__(self, other) -> bool:
        return isinstance(other, EmbeddingVector) and np.array_equal(self._values, other._values)

    def __repr__(self) -> str:
        return f"EmbeddingVector(dim={self.dim})"


def _as_vector(v: VectorLike) -> EmbeddingVector:
    return v if isinstance(v, EmbeddingVector) else EmbeddingVector(v)


def cosine_similarity(a: VectorLike, b: VectorLike) -> float:
    """Cosine of the angle between two non-zero vectors, clamped to [-1, 1].

    Clamping absorbs floating-point round-off so that threshold comparisons
    never see values outside the legal range.
    """
    a = _as_vector(a)
    b = _as_vector(b)
    if a.dim != b.dim:
        raise DimensionError(f"dimension mismatch: {a.dim} vs {b.dim}")
    na, nb = a.norm(), b.norm()
    if na < _ZERO_NORM or nb < _ZERO_NORM:
        raise DegenerateVectorError("cosine similarity is undefined for zero vectors")
    sim = float(np.dot(a.values, b.values)) / (na * nb)
    return max(-1.0, min(1.0, sim))


def normalize(a: VectorLike) -> EmbeddingVector:
    """Rescale to unit L2 norm so the index can use plain dot products."""
    a = _as_vector(a)
    n = a.norm()
    if n < _ZERO_NORM:
        raise DegenerateVectorError("cannot normalize the zero vector")
    return EmbeddingVector(a.values / n)
