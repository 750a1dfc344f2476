"""Summary cache keyed on query embeddings, scoped per document.

Entries live in per-document threshold indexes (or one shared index when
scope is "global", which is experimental: a similar query about a
different document could then be served the wrong summary). Eviction is
LRU by last access, evaluated on insert. Document invalidation is a full
per-document purge tied to a strictly increasing version number.
"""

from __future__ import annotations

import io
import struct
import threading
import time
from collections import OrderedDict
from dataclasses import dataclass
from typing import BinaryIO, Optional, Union

import numpy as np

from .errors import (
    DimensionError,
    SnapshotFormatError,
    StaleVersionError,
    UnknownDocumentError,
    VersionOrderError,
)
from .semindex import SemanticIndex
from .vectorspace import EmbeddingVector

_GLOBAL_SCOPE_KEY = "__global__"
_MAGIC = b"SSC1"

# Generator overshoot tolerance on the stored summary length.
SUMMARY_OVERSHOOT_FACTOR = 1.5


@dataclass
class CacheEntry:
    entry_id: str
    doc_id: str
    doc_version: int
    query_text: str
    query_embedding: EmbeddingVector
    summary_text: str
    summary_word_budget: int
    created_at: float
    insertion_seq: int
    hit_count: int = 0
    last_hit_at: Optional[float] = None


@dataclass
class CacheConfig:
    similarity_threshold: float = 0.8
    capacity: int = 100_000
    scope: str = "per-document"  # or "global"

    def __post_init__(self):
        if not 0.0 <= self.similarity_threshold <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {self.similarity_threshold}")
        if self.capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {self.capacity}")
        if self.scope not in ("per-document", "global"):
            raise ValueError(f"unknown scope {self.scope!r}")


@dataclass
class CacheStats:
    entries: int = 0
    lookups: int = 0
    hits: int = 0
    misses: int = 0
    evictions: int = 0
    invalidations: int = 0
    inserts: int = 0
    flushes: int = 0

    @property
    def hit_rate(self) -> float:
        return self.hits / self.lookups if self.lookups else 0.0

    def as_dict(self) -> dict:
        return {
            "entries": self.entries,
            "lookups": self.lookups,
            "hits": self.hits,
            "misses": self.misses,
            "evictions": self.evictions,
            "invalidations": self.invalidations,
            "inserts": self.inserts,
            "flushes": self.flushes,
            "hit_rate": self.hit_rate,
        }


def _quantize(embedding: EmbeddingVector) -> EmbeddingVector:
    # Snapshots persist vectors as float32; quantizing at insert time makes
    # the snapshot round-trip bit-exact and restored lookups identical.
    return EmbeddingVector(embedding.values.astype(np.float32).astype(np.float64))


class SummaryCache:
    """Maps (document, query embedding) to cached contextual summaries."""

    def __init__(self, dim: int, config: Optional[CacheConfig] = None):
        if dim < 1:
            raise DimensionError(f"dim must be >= 1, got {dim}")
        self._dim = dim
        self.config = config or CacheConfig()
        self._lock = threading.RLock()
        self._entries: dict[str, CacheEntry] = {}
        self._indexes: dict[str, SemanticIndex] = {}
        self._doc_versions: dict[str, int] = {}
        self._lru: OrderedDict[str, None] = OrderedDict()
        self._stats = CacheStats()
        self._entry_counter = 0
        self._seq_counter = 0

    @property
    def dim(self) -> int:
        return self._dim

    # -- document registry -------------------------------------------------

    def register_document(self, doc_id: str, version: int = 1) -> None:
        with self._lock:
            if doc_id in self._doc_versions:
                raise VersionOrderError(f"document already registered: {doc_id!r}")
            self._doc_versions[doc_id] = version

    def ensure_document(self, doc_id: str, version: int) -> None:
        """Register a document, or sync the live version upward."""
        with self._lock:
            current = self._doc_versions.get(doc_id)
            if current is None:
                self._doc_versions[doc_id] = version
            elif version > current:
                self.invalidate_document(doc_id, version)
            elif version < current:
                raise StaleVersionError(
                    f"document {doc_id!r} is at version {current}, got stale {version}"
                )

    def live_version(self, doc_id: str) -> int:
        with self._lock:
            try:
                return self._doc_versions[doc_id]
            except KeyError:
                raise UnknownDocumentError(f"unknown document: {doc_id!r}") from None

    def has_document(self, doc_id: str) -> bool:
        with self._lock:
            return doc_id in self._doc_versions

    def doc_entry_count(self, doc_id: str) -> int:
        """Entries a lookup for this document would scan (whole index when
        the scope is global)."""
        with self._lock:
            index = self._indexes.get(self._scope_key(doc_id))
            return index.size() if index is not None else 0

    # -- core operations ----------------------------------------------------

    def _scope_key(self, doc_id: str) -> str:
        return _GLOBAL_SCOPE_KEY if self.config.scope == "global" else doc_id

    def lookup(
        self,
        doc_id: str,
        query_text: str,
        query_embedding: EmbeddingVector,
        threshold_override: Optional[float] = None,
    ) -> Optional[tuple[CacheEntry, float]]:
        """Best current-version entry for the document above the threshold.

        A hit bumps the winner's hit_count/last_hit_at and its LRU slot; a
        miss leaves all metadata untouched.
        """
        if query_embedding.dim != self._dim:
            raise DimensionError(f"cache dim is {self._dim}, embedding has {query_embedding.dim}")
        threshold = (
            self.config.similarity_threshold if threshold_override is None else threshold_override
        )
        with self._lock:
            version = self.live_version(doc_id)
            self._stats.lookups += 1
            index = self._indexes.get(self._scope_key(doc_id))
            match = index.query_best(query_embedding, threshold) if index is not None else None
            if match is not None:
                entry = self._entries[match.entry_id]
                # stale or cross-document entries are purged eagerly, so a
                # winner is always scoped and current; keep the guard anyway
                if entry.doc_version == version and (
                    self.config.scope == "global" or entry.doc_id == doc_id
                ):
                    entry.hit_count += 1
                    entry.last_hit_at = time.time()
                    self._lru.move_to_end(entry.entry_id)
                    self._stats.hits += 1
                    return entry, match.similarity
            self._stats.misses += 1
            return None

    def insert_summary(
        self,
        doc_id: str,
        doc_version: int,
        query_text: str,
        query_embedding: EmbeddingVector,
        summary_text: str,
        word_budget: int,
    ) -> CacheEntry:
        """Store a fresh summary; evicts the LRU entry first when full."""
        if query_embedding.dim != self._dim:
            raise DimensionError(f"cache dim is {self._dim}, embedding has {query_embedding.dim}")
        if not summary_text:
            raise ValueError("summary_text must be non-empty")
        if word_budget < 1:
            raise ValueError(f"word_budget must be >= 1, got {word_budget}")
        words = len(summary_text.split())
        if words > SUMMARY_OVERSHOOT_FACTOR * word_budget:
            raise ValueError(
                f"summary has {words} words, above {SUMMARY_OVERSHOOT_FACTOR}x budget {word_budget}"
            )
        with self._lock:
            current = self.live_version(doc_id)
            if doc_version != current:
                raise StaleVersionError(
                    f"document {doc_id!r} is at version {current}, got {doc_version}"
                )
            if len(self._entries) >= self.config.capacity:
                self._evict_one()
            self._entry_counter += 1
            entry = CacheEntry(
                entry_id=f"e{self._entry_counter}",
                doc_id=doc_id,
                doc_version=doc_version,
                query_text=query_text,
                query_embedding=_quantize(query_embedding),
                summary_text=summary_text,
                summary_word_budget=word_budget,
                created_at=time.time(),
                insertion_seq=self._seq_counter,
            )
            self._seq_counter += 1
            key = self._scope_key(doc_id)
            index = self._indexes.get(key)
            if index is None:
                index = self._indexes[key] = SemanticIndex(self._dim)
            index.insert(entry.query_embedding, entry.entry_id, seq=entry.insertion_seq)
            self._entries[entry.entry_id] = entry
            self._lru[entry.entry_id] = None
            self._stats.inserts += 1
            self._stats.entries = len(self._entries)
            return entry

    def _evict_one(self) -> None:
        victim_id, _ = self._lru.popitem(last=False)
        entry = self._entries.pop(victim_id)
        self._indexes[self._scope_key(entry.doc_id)].remove(victim_id)
        self._stats.evictions += 1

    def invalidate_document(self, doc_id: str, new_version: int) -> int:
        """Purge every entry for the document and bump its live version."""
        with self._lock:
            current = self.live_version(doc_id)
            if new_version <= current:
                raise VersionOrderError(
                    f"new version {new_version} must exceed current {current} for {doc_id!r}"
                )
            removed = [e for e in self._entries.values() if e.doc_id == doc_id]
            for entry in removed:
                del self._entries[entry.entry_id]
                del self._lru[entry.entry_id]
                self._indexes[self._scope_key(doc_id)].remove(entry.entry_id)
            self._doc_versions[doc_id] = new_version
            self._stats.invalidations += len(removed)
            self._stats.entries = len(self._entries)
            return len(removed)

    def flush(self) -> int:
        """Drop all entries; counters are preserved and the flush counted."""
        with self._lock:
            removed = len(self._entries)
            self._entries.clear()
            self._lru.clear()
            self._indexes.clear()
            self._stats.flushes += 1
            self._stats.entries = 0
            return removed

    def stats(self) -> CacheStats:
        with self._lock:
            s = self._stats
            return CacheStats(
                entries=len(self._entries),
                lookups=s.lookups,
                hits=s.hits,
                misses=s.misses,
                evictions=s.evictions,
                invalidations=s.invalidations,
                inserts=s.inserts,
                flushes=s.flushes,
            )

    def size(self) -> int:
        with self._lock:
            return len(self._entries)

    # -- persistence ---------------------------------------------------------

    def snapshot(self, destination: Union[str, BinaryIO]) -> None:
        """Write a consistent point-in-time snapshot (see module docs)."""
        with self._lock:
            payload = self._encode()
        if isinstance(destination, (str, bytes)):
            with open(destination, "wb") as fh:
                fh.write(payload)
        else:
            destination.write(payload)

    def snapshot_bytes(self) -> bytes:
        with self._lock:
            return self._encode()

    def _encode(self) -> bytes:
        out = io.BytesIO()

        def w_str(s: str) -> None:
            data = s.encode("utf-8")
            out.write(struct.pack("<I", len(data)))
            out.write(data)

        out.write(_MAGIC)
        out.write(struct.pack("<II", self._dim, len(self._entries)))
        # entries in LRU order (least recent first) so restore rebuilds it
        for entry_id in self._lru:
            e = self._entries[entry_id]
            w_str(e.entry_id)
            w_str(e.doc_id)
            out.write(struct.pack("<Q", e.doc_version))
            w_str(e.query_text)
            w_str(e.summary_text)
            out.write(struct.pack("<Id", e.summary_word_budget, e.created_at))
            out.write(struct.pack("<Q", e.hit_count))
            out.write(struct.pack("<Bd", 1 if e.last_hit_at is not None else 0,
                                  e.last_hit_at or 0.0))
            out.write(struct.pack("<Q", e.insertion_seq))
            out.write(e.query_embedding.values.astype("<f4").tobytes())
        out.write(struct.pack("<I", len(self._doc_versions)))
        for doc_id in sorted(self._doc_versions):
            w_str(doc_id)
            out.write(struct.pack("<Q", self._doc_versions[doc_id]))
        out.write(struct.pack("<dQB", self.config.similarity_threshold, self.config.capacity,
                              1 if self.config.scope == "global" else 0))
        s = self._stats
        out.write(struct.pack("<7Q", s.lookups, s.hits, s.misses, s.evictions,
                              s.invalidations, s.inserts, s.flushes))
        out.write(struct.pack("<QQ", self._seq_counter, self._entry_counter))
        return out.getvalue()

    @classmethod
    def restore(cls, source: Union[str, bytes, BinaryIO]) -> "SummaryCache":
        """Rebuild a cache that is observationally equal to the snapshotted one."""
        if isinstance(source, bytes):
            data = source
        elif isinstance(source, str):
            with open(source, "rb") as fh:
                data = fh.read()
        else:
            data = source.read()
        return cls._decode(data)

    @classmethod
    def _decode(cls, data: bytes) -> "SummaryCache":
        pos = 0

        def take(n: int) -> bytes:
            nonlocal pos
            if pos + n > len(data):
                raise SnapshotFormatError("truncated snapshot", pos)
            chunk = data[pos:pos + n]
            pos += n
            return chunk

        def r_str() -> str:
            (length,) = struct.unpack("<I", take(4))
            raw = take(length)
            try:
                return raw.decode("utf-8")
            except UnicodeDecodeError:
                raise SnapshotFormatError("invalid UTF-8 in snapshot string", pos - length)

        if take(4) != _MAGIC:
            raise SnapshotFormatError("bad magic, not a summary-cache snapshot", 0)
        dim, n_entries = struct.unpack("<II", take(8))
        if dim < 1:
            raise SnapshotFormatError(f"invalid dimension {dim}", 4)
        entries = []
        for _ in range(n_entries):
            entry_id = r_str()
            doc_id = r_str()
            (doc_version,) = struct.unpack("<Q", take(8))
            query_text = r_str()
            summary_text = r_str()
            word_budget, created_at = struct.unpack("<Id", take(12))
            (hit_count,) = struct.unpack("<Q", take(8))
            has_last, last_hit_at = struct.unpack("<Bd", take(9))
            (seq,) = struct.unpack("<Q", take(8))
            vec = np.frombuffer(take(4 * dim), dtype="<f4").astype(np.float64)
            entries.append((entry_id, doc_id, doc_version, query_text, summary_text,
                            word_budget, created_at, hit_count,
                            last_hit_at if has_last else None, seq, vec))
        (n_docs,) = struct.unpack("<I", take(4))
        doc_versions = {}
        for _ in range(n_docs):
            doc_id = r_str()
            (version,) = struct.unpack("<Q", take(8))
            doc_versions[doc_id] = version
        threshold, capacity, scope_flag = struct.unpack("<dQB", take(17))
        counters = struct.unpack("<7Q", take(56))
        seq_counter, entry_counter = struct.unpack("<QQ", take(16))
        if pos != len(data):
            raise SnapshotFormatError("trailing bytes after snapshot payload", pos)

        config = CacheConfig(
            similarity_threshold=threshold,
            capacity=capacity,
            scope="global" if scope_flag else "per-document",
        )
        cache = cls(dim, config)
        cache._doc_versions = doc_versions
        for (entry_id, doc_id, doc_version, query_text, summary_text, word_budget,
             created_at, hit_count, last_hit_at, seq, vec) in entries:
            entry = CacheEntry(
                entry_id=entry_id,
                doc_id=doc_id,
                doc_version=doc_version,
                query_text=query_text,
                query_embedding=EmbeddingVector(vec),
                summary_text=summary_text,
                summary_word_budget=word_budget,
                created_at=created_at,
                insertion_seq=seq,
                hit_count=hit_count,
                last_hit_at=last_hit_at,
            )
            key = cache._scope_key(doc_id)
            index = cache._indexes.get(key)
            if index is None:
                index = cache._indexes[key] = SemanticIndex(dim)
            index.insert(entry.query_embedding, entry.entry_id, seq=seq)
            cache._entries[entry.entry_id] = entry
            cache._lru[entry.entry_id] = None
        cache._stats = CacheStats(
            entries=len(cache._entries),
            lookups=counters[0], hits=counters[1], misses=counters[2],
            evictions=counters[3], invalidations=counters[4],
            inserts=counters[5], flushes=counters[6],
        )
        cache._seq_counter = seq_counter
        cache._entry_counter = entry_counter
        return cache
