import pytest

from semsumcache.pipeline import (
    AnswerCache,
    Method,
    MethodConfig,
    MethodState,
    SEARCH_LATENCY,
    SearchLatencyModel,
    run_method,
)
from semsumcache.providers import (
    EMPTY_REFERENCE,
    build_answer_prompt,
    count_tokens,
    render_request,
)
from semsumcache.simulator import Document

DIM = 64


def make_doc(doc_id="d1"):
    sections = ["key1 spanA spanB spanC"]
    sections += [" ".join(f"fill{i}w{j}" for j in range(10)) for i in range(100)]
    return Document(doc_id=doc_id, version=1, title="", text=". ".join(sections) + ".")


@pytest.fixture
def doc():
    return make_doc()


def state_for(method, **kwargs):
    return MethodState.create(MethodConfig(method=method, **kwargs), DIM)


class TestMethodConfig:
    def test_threshold_range(self):
        with pytest.raises(ValueError):
            MethodConfig(method=Method.FULL_DOCUMENT, similarity_threshold=1.1)

    def test_budget_positive(self):
        with pytest.raises(ValueError):
            MethodConfig(method=Method.FULL_DOCUMENT, summary_word_budget=0)

    def test_method_coerced_from_string(self):
        config = MethodConfig(method="FullDocument")
        assert config.method is Method.FULL_DOCUMENT

    def test_unknown_method_rejected(self):
        with pytest.raises(ValueError):
            MethodConfig(method="MagicMethod")


class TestSearchLatencyModel:
    def test_linear_in_entries(self):
        model = SearchLatencyModel(base=1e-7, per_entry=1e-9)
        assert model.cost(0) == 1e-7
        assert model.cost(1000) == pytest.approx(1e-7 + 1e-6)

    def test_default_instance(self):
        assert SEARCH_LATENCY.cost(0) > 0


class TestFullDocument(object):
    def test_trace_shape(self, doc, providers):
        state = state_for(Method.FULL_DOCUMENT)
        trace = run_method(doc, "key1 question", providers, state, "q1")
        assert trace.method == "FullDocument"
        assert trace.cache_hit is False and trace.similarity_of_hit is None
        assert trace.answer_text == "spanA spanB spanC"
        expected_in = count_tokens(render_request(
            build_answer_prompt(doc.text, "key1 question")))
        assert trace.input_tokens == expected_in
        assert trace.latency_cache_search == 0.0
        assert trace.latency_encoding == 0.0
        assert trace.latency_total == trace.latency_llm


class TestNoRetrieval:
    def test_uses_stub_reference(self, doc, providers):
        state = state_for(Method.NO_RETRIEVAL)
        trace = run_method(doc, "key1 question", providers, state, "q1")
        expected_in = count_tokens(render_request(
            build_answer_prompt(EMPTY_REFERENCE, "key1 question")))
        assert trace.input_tokens == expected_in
        assert trace.doc_id == "d1"


class TestNonContextualSummary:
    def test_summary_generated_once_per_version(self, doc, providers):
        state = state_for(Method.NONCONTEXTUAL_SUMMARY)
        run_method(doc, "key1 q", providers, state, "q1")
        assert providers.chat.call_count == 2  # summary + answer
        run_method(doc, "other q", providers, state, "q2")
        assert providers.chat.call_count == 3  # answer only

    def test_version_bump_regenerates(self, doc, providers):
        state = state_for(Method.NONCONTEXTUAL_SUMMARY)
        run_method(doc, "key1 q", providers, state, "q1")
        doc.version = 2
        run_method(doc, "key1 q", providers, state, "q2")
        assert providers.chat.call_count == 4
        assert set(state.noncontextual_summaries) == {("d1", 1), ("d1", 2)}


class TestContextualCached:
    def test_miss_then_hit(self, doc, providers):
        state = state_for(Method.CONTEXTUAL_SUMMARY_CACHED)
        first = run_method(doc, "key1 question", providers, state, "q1")
        assert not first.cache_hit and first.similarity_of_hit is None
        assert providers.chat.call_count == 2  # summary + answer
        second = run_method(doc, "key1 question", providers, state, "q2")
        assert second.cache_hit
        assert second.similarity_of_hit >= 0.999
        assert providers.chat.call_count == 3  # answer only
        assert second.answer_text == first.answer_text

    def test_dissimilar_question_misses(self, doc, providers):
        state = state_for(Method.CONTEXTUAL_SUMMARY_CACHED)
        run_method(doc, "key1 aa bb cc", providers, state, "q1")
        other = run_method(doc, "zz yy xx ww", providers, state, "q2")
        assert not other.cache_hit

    def test_threshold_rides_on_config(self, doc, providers):
        state = state_for(Method.CONTEXTUAL_SUMMARY_CACHED, similarity_threshold=0.0)
        run_method(doc, "key1 aa bb cc", providers, state, "q1")
        always = run_method(doc, "zz yy xx ww", providers, state, "q2")
        assert always.cache_hit

    def test_encoding_and_search_latency_recorded(self, doc, providers):
        state = state_for(Method.CONTEXTUAL_SUMMARY_CACHED)
        trace = run_method(doc, "key1 question", providers, state, "q1")
        assert trace.latency_encoding == providers.embed.delay
        assert trace.latency_cache_search == SEARCH_LATENCY.cost(0)
        trace2 = run_method(doc, "key1 question", providers, state, "q2")
        assert trace2.latency_cache_search == SEARCH_LATENCY.cost(1)


class TestFullPromptAnswerCache:
    def test_hit_skips_llm_entirely(self, doc, providers):
        state = state_for(Method.FULL_PROMPT_ANSWER_CACHE)
        first = run_method(doc, "key1 question", providers, state, "q1")
        assert not first.cache_hit
        second = run_method(doc, "key1 question", providers, state, "q2")
        assert second.cache_hit
        assert second.latency_llm == 0.0
        assert second.input_tokens == 0 and second.output_tokens == 0
        assert second.answer_text == first.answer_text


class TestAnswerCache:
    def test_insert_lookup(self, providers):
        cache = AnswerCache(DIM)
        emb = providers.embed.embed("some prompt text")
        cache.insert(emb, "the answer")
        assert cache.size() == 1
        found = cache.lookup(emb, 0.9)
        assert found is not None
        answer, sim = found
        assert answer == "the answer"
        assert sim >= 0.999

    def test_below_threshold(self, providers):
        cache = AnswerCache(DIM)
        cache.insert(providers.embed.embed("aaa bbb ccc"), "x")
        assert cache.lookup(providers.embed.embed("zzz yyy xxx"), 0.95) is None


def test_latency_components_sum_exactly(doc, providers):
    for method in Method:
        state = state_for(method)
        for i in range(3):
            trace = run_method(doc, "key1 question", providers, state, f"q{i}")
            assert trace.latency_total == (trace.latency_llm
                                           + trace.latency_cache_search
                                           + trace.latency_encoding)
