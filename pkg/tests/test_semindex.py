import threading

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semsumcache.errors import DegenerateVectorError, DimensionError, DuplicateIdError
from semsumcache.semindex import SemanticIndex
from semsumcache.vectorspace import EmbeddingVector, cosine_similarity


def vec(*vals):
    return EmbeddingVector(list(vals))


class TestBasics:
    def test_rejects_bad_dim(self):
        with pytest.raises(DimensionError):
            SemanticIndex(0)

    def test_empty_index_returns_none(self):
        assert SemanticIndex(3).query_best(vec(1.0, 0.0, 0.0), 0.0) is None

    def test_insert_size_contains(self):
        index = SemanticIndex(2)
        index.insert(vec(1.0, 0.0), "a")
        index.insert(vec(0.0, 1.0), "b")
        assert index.size() == 2
        assert "a" in index and "b" in index and "c" not in index

    def test_duplicate_id_rejected(self):
        index = SemanticIndex(2)
        index.insert(vec(1.0, 0.0), "a")
        with pytest.raises(DuplicateIdError):
            index.insert(vec(0.0, 1.0), "a")

    def test_dimension_mismatch(self):
        index = SemanticIndex(2)
        with pytest.raises(DimensionError):
            index.insert(vec(1.0, 0.0, 0.0), "a")
        with pytest.raises(DimensionError):
            index.query_best(vec(1.0, 0.0, 0.0), 0.5)

    def test_zero_vector_rejected(self):
        index = SemanticIndex(2)
        with pytest.raises(DegenerateVectorError):
            index.insert(vec(0.0, 0.0), "a")

    def test_growth_beyond_initial_capacity(self):
        index = SemanticIndex(3)
        rng = np.random.default_rng(0)
        for i in range(100):
            index.insert(EmbeddingVector(rng.standard_normal(3)), i)
        assert index.size() == 100

    def test_seq_argument_restores_and_advances_counter(self):
        index = SemanticIndex(2)
        assert index.insert(vec(1.0, 0.0), "a", seq=10) == 10
        assert index.insert(vec(0.0, 1.0), "b") == 11


class TestQueryBest:
    def test_similarity_at_threshold_is_a_hit(self):
        index = SemanticIndex(2)
        index.insert(vec(1.0, 0.0), "a")
        match = index.query_best(vec(1.0, 0.0), 1.0)
        assert match is not None and match.entry_id == "a"
        assert match.similarity == 1.0

    def test_below_threshold_is_none(self):
        index = SemanticIndex(2)
        index.insert(vec(1.0, 0.0), "a")
        assert index.query_best(vec(0.0, 1.0), 0.5) is None

    def test_normalization_makes_scale_irrelevant(self):
        index = SemanticIndex(2)
        index.insert(vec(100.0, 0.0), "a")
        match = index.query_best(vec(0.001, 0.0), 0.99)
        assert match is not None and match.similarity == pytest.approx(1.0, abs=1e-12)

    def test_exact_tie_prefers_most_recent_insertion(self):
        index = SemanticIndex(2)
        index.insert(vec(1.0, 0.0), "old")
        index.insert(vec(0.0, 1.0), "other")
        index.insert(vec(2.0, 0.0), "new")  # same direction as "old"
        match = index.query_best(vec(1.0, 0.0), 0.9)
        assert match.entry_id == "new"

    def test_tie_break_follows_seq_not_row_position(self):
        index = SemanticIndex(2)
        index.insert(vec(1.0, 0.0), "late", seq=100)
        index.insert(vec(1.0, 0.0), "early", seq=1)
        match = index.query_best(vec(1.0, 0.0), 0.5)
        assert match.entry_id == "late"


class TestRemove:
    def test_remove_unknown_returns_false(self):
        assert SemanticIndex(2).remove("nope") is False

    def test_removed_entry_is_not_returned(self):
        index = SemanticIndex(2)
        index.insert(vec(1.0, 0.0), "a")
        assert index.remove("a") is True
        assert index.query_best(vec(1.0, 0.0), 0.0) is None
        assert index.size() == 0

    def test_swap_with_last_preserves_other_entries(self):
        index = SemanticIndex(3)
        index.insert(vec(1.0, 0.0, 0.0), "a")
        index.insert(vec(0.0, 1.0, 0.0), "b")
        index.insert(vec(0.0, 0.0, 1.0), "c")
        index.remove("a")
        assert index.query_best(vec(0.0, 1.0, 0.0), 0.9).entry_id == "b"
        assert index.query_best(vec(0.0, 0.0, 1.0), 0.9).entry_id == "c"
        assert index.query_best(vec(1.0, 0.0, 0.0), 0.5) is None

    def test_reinsert_after_remove(self):
        index = SemanticIndex(2)
        index.insert(vec(1.0, 0.0), "a")
        index.remove("a")
        index.insert(vec(0.0, 1.0), "a")
        assert index.query_best(vec(0.0, 1.0), 0.9).entry_id == "a"


raw_vectors = st.lists(
    st.lists(st.floats(min_value=-100, max_value=100, allow_nan=False),
             min_size=4, max_size=4).filter(lambda v: sum(x * x for x in v) > 1e-6),
    min_size=1, max_size=20,
)


@settings(max_examples=50, deadline=None)
@given(raw_vectors, st.floats(min_value=-1.0, max_value=1.0))
def test_winner_has_maximal_similarity(vectors, threshold):
    index = SemanticIndex(4)
    for i, v in enumerate(vectors):
        index.insert(EmbeddingVector(v), i)
    probe = vec(1.0, 0.5, -0.25, 0.125)
    sims = [cosine_similarity(probe, EmbeddingVector(v)) for v in vectors]
    match = index.query_best(probe, threshold)
    if match is None:
        assert max(sims) < threshold + 1e-12
    else:
        assert match.similarity >= threshold
        assert match.similarity == pytest.approx(max(sims), abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(raw_vectors, st.floats(min_value=0.0, max_value=0.5))
def test_threshold_monotonicity(vectors, low):
    high = low + 0.4
    index = SemanticIndex(4)
    for i, v in enumerate(vectors):
        index.insert(EmbeddingVector(v), i)
    probe = vec(0.3, -0.7, 0.2, 0.9)
    at_high = index.query_best(probe, high)
    at_low = index.query_best(probe, low)
    if at_high is not None:
        assert at_low is not None
        assert at_low.similarity >= at_high.similarity
    # and if nothing clears the low bar, nothing clears the high one
    if at_low is None:
        assert at_high is None


@settings(max_examples=30, deadline=None)
@given(st.permutations(list(range(8))))
def test_order_independence_for_distinct_vectors(order):
    rng = np.random.default_rng(99)
    vectors = rng.standard_normal((8, 6))
    probe = EmbeddingVector(rng.standard_normal(6))
    index = SemanticIndex(6)
    for i in order:
        index.insert(EmbeddingVector(vectors[i]), i)
    baseline = SemanticIndex(6)
    for i in range(8):
        baseline.insert(EmbeddingVector(vectors[i]), i)
    a = index.query_best(probe, 0.0)
    b = baseline.query_best(probe, 0.0)
    assert (a is None) == (b is None)
    if a is not None:
        assert a.entry_id == b.entry_id


def test_concurrent_insert_and_query():
    index = SemanticIndex(8)
    rng = np.random.default_rng(7)
    vectors = [EmbeddingVector(rng.standard_normal(8)) for _ in range(200)]
    errors = []

    def writer(offset):
        try:
            for i, v in enumerate(vectors[offset::2]):
                index.insert(v, f"w{offset}-{i}")
        except Exception as exc:  # pragma: no cover - failure path
            errors.append(exc)

    def reader():
        try:
            for v in vectors:
                index.query_best(v, 0.3)
        except Exception as exc:  # pragma: no cover - failure path
            errors.append(exc)

    threads = [threading.Thread(target=writer, args=(0,)),
               threading.Thread(target=writer, args=(1,)),
               threading.Thread(target=reader), threading.Thread(target=reader)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    assert index.size() == 200
