import io

import numpy as np
import pytest

from semsumcache.errors import (
    DimensionError,
    SnapshotFormatError,
    StaleVersionError,
    UnknownDocumentError,
    VersionOrderError,
)
from semsumcache.semcache import CacheConfig, SummaryCache
from semsumcache.vectorspace import EmbeddingVector

DIM = 8


def vec(seed):
    rng = np.random.default_rng(seed)
    return EmbeddingVector(np.abs(rng.standard_normal(DIM)) + 1e-3)


def make_cache(**kwargs):
    cache = SummaryCache(DIM, CacheConfig(**kwargs) if kwargs else None)
    cache.register_document("doc", 1)
    return cache


class TestConfig:
    def test_threshold_range(self):
        with pytest.raises(ValueError):
            CacheConfig(similarity_threshold=1.5)

    def test_capacity_positive(self):
        with pytest.raises(ValueError):
            CacheConfig(capacity=0)

    def test_scope_values(self):
        with pytest.raises(ValueError):
            CacheConfig(scope="per-user")

    def test_defaults(self):
        config = CacheConfig()
        assert config.similarity_threshold == 0.8
        assert config.capacity == 100_000
        assert config.scope == "per-document"


class TestDocumentRegistry:
    def test_register_twice_rejected(self):
        cache = make_cache()
        with pytest.raises(VersionOrderError):
            cache.register_document("doc", 1)

    def test_unknown_document(self):
        cache = make_cache()
        with pytest.raises(UnknownDocumentError):
            cache.live_version("missing")
        with pytest.raises(UnknownDocumentError):
            cache.lookup("missing", "q", vec(0))

    def test_ensure_document_registers(self):
        cache = make_cache()
        cache.ensure_document("new", 3)
        assert cache.live_version("new") == 3

    def test_ensure_document_upgrades_and_purges(self):
        cache = make_cache()
        cache.insert_summary("doc", 1, "q", vec(1), "summary", 10)
        cache.ensure_document("doc", 2)
        assert cache.live_version("doc") == 2
        assert cache.size() == 0

    def test_ensure_document_rejects_downgrade(self):
        cache = make_cache()
        cache.ensure_document("doc", 5)
        with pytest.raises(StaleVersionError):
            cache.ensure_document("doc", 3)


class TestLookupInsert:
    def test_miss_on_empty(self):
        cache = make_cache()
        assert cache.lookup("doc", "q", vec(1)) is None
        stats = cache.stats()
        assert stats.lookups == 1 and stats.misses == 1 and stats.hits == 0

    def test_hit_on_identical_query(self):
        cache = make_cache()
        cache.insert_summary("doc", 1, "q", vec(1), "summary text", 10)
        found = cache.lookup("doc", "q", vec(1))
        assert found is not None
        entry, sim = found
        assert entry.summary_text == "summary text"
        assert sim == pytest.approx(1.0, abs=1e-6)
        assert entry.hit_count == 1
        assert entry.last_hit_at is not None

    def test_miss_below_threshold(self):
        cache = make_cache(similarity_threshold=0.99)
        cache.insert_summary("doc", 1, "q", vec(1), "summary", 10)
        orthogonal = EmbeddingVector([1.0] + [0.0] * (DIM - 1))
        assert cache.lookup("doc", "q2", orthogonal) is None

    def test_threshold_override(self):
        cache = make_cache(similarity_threshold=0.999999)
        cache.insert_summary("doc", 1, "q", vec(1), "summary", 10)
        probe = vec(2)
        assert cache.lookup("doc", "q", probe) is None
        assert cache.lookup("doc", "q", probe, threshold_override=0.0) is not None

    def test_per_document_scope_isolation(self):
        cache = make_cache()
        cache.register_document("other", 1)
        cache.insert_summary("doc", 1, "q", vec(1), "summary", 10)
        assert cache.lookup("other", "q", vec(1)) is None

    def test_global_scope_crosses_documents(self):
        cache = SummaryCache(DIM, CacheConfig(scope="global"))
        cache.register_document("doc", 1)
        cache.register_document("other", 1)
        cache.insert_summary("doc", 1, "q", vec(1), "summary", 10)
        found = cache.lookup("other", "q", vec(1))
        assert found is not None and found[0].doc_id == "doc"

    def test_insert_validations(self):
        cache = make_cache()
        with pytest.raises(ValueError):
            cache.insert_summary("doc", 1, "q", vec(1), "", 10)
        with pytest.raises(ValueError):
            cache.insert_summary("doc", 1, "q", vec(1), "s", 0)
        with pytest.raises(ValueError):
            # 16 words > 1.5 * 10
            cache.insert_summary("doc", 1, "q", vec(1), "w " * 16, 10)
        with pytest.raises(StaleVersionError):
            cache.insert_summary("doc", 2, "q", vec(1), "summary", 10)
        with pytest.raises(DimensionError):
            cache.insert_summary("doc", 1, "q", EmbeddingVector([1.0]), "summary", 10)
        with pytest.raises(DimensionError):
            cache.lookup("doc", "q", EmbeddingVector([1.0]))


class TestEviction:
    def test_lru_evicts_least_recently_used(self):
        cache = make_cache(capacity=2, similarity_threshold=0.999)
        a, b, c = vec(1), vec(2), vec(3)
        cache.insert_summary("doc", 1, "qa", a, "summary a", 10)
        cache.insert_summary("doc", 1, "qb", b, "summary b", 10)
        assert cache.lookup("doc", "qa", a) is not None  # refresh a
        cache.insert_summary("doc", 1, "qc", c, "summary c", 10)  # evicts b
        assert cache.size() == 2
        assert cache.lookup("doc", "qb", b) is None
        assert cache.lookup("doc", "qa", a) is not None
        assert cache.lookup("doc", "qc", c) is not None
        assert cache.stats().evictions == 1

    def test_insertion_order_eviction_without_hits(self):
        cache = make_cache(capacity=2, similarity_threshold=0.999)
        a, b, c = vec(1), vec(2), vec(3)
        cache.insert_summary("doc", 1, "qa", a, "summary a", 10)
        cache.insert_summary("doc", 1, "qb", b, "summary b", 10)
        cache.insert_summary("doc", 1, "qc", c, "summary c", 10)  # evicts a
        assert cache.lookup("doc", "qa", a) is None
        assert cache.lookup("doc", "qb", b) is not None


class TestInvalidation:
    def test_invalidate_purges_and_bumps(self):
        cache = make_cache()
        for i in range(3):
            cache.insert_summary("doc", 1, f"q{i}", vec(i + 1), "summary", 10)
        removed = cache.invalidate_document("doc", 2)
        assert removed == 3
        assert cache.size() == 0
        assert cache.live_version("doc") == 2
        assert cache.stats().invalidations == 3

    def test_invalidate_requires_higher_version(self):
        cache = make_cache()
        with pytest.raises(VersionOrderError):
            cache.invalidate_document("doc", 1)

    def test_invalidate_leaves_other_documents(self):
        cache = make_cache()
        cache.register_document("other", 1)
        cache.insert_summary("doc", 1, "q", vec(1), "summary", 10)
        cache.insert_summary("other", 1, "q", vec(2), "summary", 10)
        assert cache.invalidate_document("doc", 2) == 1
        assert cache.lookup("other", "q", vec(2)) is not None

    def test_flush(self):
        cache = make_cache()
        cache.insert_summary("doc", 1, "q", vec(1), "summary", 10)
        assert cache.flush() == 1
        assert cache.size() == 0
        stats = cache.stats()
        assert stats.flushes == 1
        assert stats.inserts == 1  # counters survive the flush


class TestStats:
    def test_hit_rate(self):
        cache = make_cache()
        cache.insert_summary("doc", 1, "q", vec(1), "summary", 10)
        cache.lookup("doc", "q", vec(1))
        cache.lookup("doc", "q", EmbeddingVector([1.0] + [0.0] * (DIM - 1)))
        stats = cache.stats()
        assert stats.lookups == 2 and stats.hits == 1 and stats.misses == 1
        assert stats.hit_rate == 0.5
        assert stats.as_dict()["hit_rate"] == 0.5

    def test_empty_hit_rate_zero(self):
        assert SummaryCache(DIM).stats().hit_rate == 0.0


def populated_cache():
    cache = SummaryCache(DIM, CacheConfig(similarity_threshold=0.7, capacity=50))
    for d in range(3):
        cache.register_document(f"doc{d}", d + 1)
    rng = np.random.default_rng(42)
    for i in range(12):
        doc = f"doc{i % 3}"
        emb = EmbeddingVector(np.abs(rng.standard_normal(DIM)) + 1e-3)
        cache.insert_summary(doc, (i % 3) + 1, f"question {i}", emb,
                             f"summary number {i}", 20)
    cache.lookup("doc0", "question 0", vec(1), threshold_override=0.0)
    return cache


class TestSnapshot:
    def test_round_trip_is_byte_exact(self):
        cache = populated_cache()
        payload = cache.snapshot_bytes()
        restored = SummaryCache.restore(payload)
        assert restored.snapshot_bytes() == payload

    def test_round_trip_preserves_observable_state(self):
        cache = populated_cache()
        restored = SummaryCache.restore(cache.snapshot_bytes())
        assert restored.stats().as_dict() == cache.stats().as_dict()
        assert restored.config == cache.config
        for d in range(3):
            assert restored.live_version(f"doc{d}") == d + 1
        probe = vec(123)
        a = cache.lookup("doc1", "p", probe, threshold_override=0.0)
        b = restored.lookup("doc1", "p", probe, threshold_override=0.0)
        assert a[0].entry_id == b[0].entry_id
        assert a[1] == b[1]
        assert a[0].summary_text == b[0].summary_text

    def test_restored_cache_keeps_counting_from_snapshot(self):
        cache = populated_cache()
        restored = SummaryCache.restore(cache.snapshot_bytes())
        entry = restored.insert_summary("doc0", 1, "new q", vec(5), "new summary", 10)
        assert entry.entry_id not in {e for e in cache._entries}

    def test_file_and_stream_destinations(self, tmp_path):
        cache = populated_cache()
        path = tmp_path / "cache.snap"
        cache.snapshot(str(path))
        assert SummaryCache.restore(str(path)).snapshot_bytes() == cache.snapshot_bytes()
        buf = io.BytesIO()
        cache.snapshot(buf)
        buf.seek(0)
        assert SummaryCache.restore(buf).snapshot_bytes() == cache.snapshot_bytes()

    def test_bad_magic(self):
        with pytest.raises(SnapshotFormatError) as exc:
            SummaryCache.restore(b"XXXX" + b"\x00" * 32)
        assert exc.value.offset == 0

    def test_truncated_payload(self):
        payload = populated_cache().snapshot_bytes()
        with pytest.raises(SnapshotFormatError):
            SummaryCache.restore(payload[:len(payload) // 2])

    def test_trailing_garbage_rejected(self):
        payload = populated_cache().snapshot_bytes()
        with pytest.raises(SnapshotFormatError) as exc:
            SummaryCache.restore(payload + b"\x00")
        assert "trailing" in str(exc.value)
