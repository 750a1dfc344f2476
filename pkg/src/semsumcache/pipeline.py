"""The five answering strategies, each producing a fully accounted trace.

Latency accounting: a trace's total is exactly the sum of its LLM,
cache-search and encoding components. Under the mock providers all three
are injected deterministic values (the cache-search component is a linear
model of entries scanned), so whole runs reproduce byte-for-byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Protocol

from .providers import (
    ChatProvider,
    ChatResponse,
    EMPTY_REFERENCE,
    EmbedProvider,
    build_answer_prompt,
    build_contextual_summary_prompt,
    build_noncontextual_summary_prompt,
    render_request,
)
from .semcache import CacheConfig, SummaryCache
from .semindex import SemanticIndex
from .vectorspace import EmbeddingVector


class Method(str, Enum):
    FULL_DOCUMENT = "FullDocument"
    NO_RETRIEVAL = "NoRetrieval"
    NONCONTEXTUAL_SUMMARY = "NonContextualSummary"
    CONTEXTUAL_SUMMARY_CACHED = "ContextualSummaryCached"
    FULL_PROMPT_ANSWER_CACHE = "FullPromptAnswerCache"


@dataclass
class MethodConfig:
    method: Method
    similarity_threshold: float = 0.8
    summary_word_budget: int = 200

    def __post_init__(self):
        self.method = Method(self.method)
        if not 0.0 <= self.similarity_threshold <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {self.similarity_threshold}")
        if self.summary_word_budget < 1:
            raise ValueError(f"budget must be >= 1, got {self.summary_word_budget}")


@dataclass
class AnswerTrace:
    question_id: str
    doc_id: str
    method: str
    threshold: float
    budget: int
    answer_text: str
    cache_hit: bool
    similarity_of_hit: Optional[float]
    input_tokens: int
    output_tokens: int
    latency_llm: float
    latency_cache_search: float
    latency_encoding: float
    latency_total: float
    utility: Optional[float] = None


@dataclass
class SearchLatencyModel:
    """Deterministic stand-in for the wall-clock cost of a cache scan."""

    base: float = 1e-7
    per_entry: float = 1e-9

    def cost(self, entries_scanned: int) -> float:
        return self.base + self.per_entry * entries_scanned


SEARCH_LATENCY = SearchLatencyModel()


@dataclass
class ProviderBundle:
    chat: ChatProvider
    embed: EmbedProvider


class _DocumentLike(Protocol):
    doc_id: str
    version: int
    text: str


class AnswerCache:
    """Answer store keyed on full-prompt embeddings (one global index).

    This is the cautionary baseline: document tokens dominate the prompt
    embedding, so distinct questions about the same document collide.
    """

    def __init__(self, dim: int):
        self._index = SemanticIndex(dim)
        self._answers: dict[str, str] = {}
        self._counter = 0

    def size(self) -> int:
        return self._index.size()

    def lookup(self, embedding: EmbeddingVector, threshold: float) -> Optional[tuple[str, float]]:
        match = self._index.query_best(embedding, threshold)
        if match is None:
            return None
        return self._answers[match.entry_id], match.similarity

    def insert(self, embedding: EmbeddingVector, answer: str) -> None:
        self._counter += 1
        entry_id = f"a{self._counter}"
        self._index.insert(embedding, entry_id)
        self._answers[entry_id] = answer


@dataclass
class MethodState:
    """Mutable per-method stores shared across a question stream."""

    config: MethodConfig
    cache: Optional[SummaryCache] = None
    answer_cache: Optional[AnswerCache] = None
    noncontextual_summaries: dict[tuple[str, int], str] = field(default_factory=dict)

    @classmethod
    def create(cls, config: MethodConfig, dim: int,
               cache_config: Optional[CacheConfig] = None) -> "MethodState":
        state = cls(config=config)
        if config.method is Method.CONTEXTUAL_SUMMARY_CACHED:
            cc = cache_config or CacheConfig(similarity_threshold=config.similarity_threshold)
            state.cache = SummaryCache(dim, cc)
        elif config.method is Method.FULL_PROMPT_ANSWER_CACHE:
            state.answer_cache = AnswerCache(dim)
        return state


def _finish(trace_kwargs: dict, chats: list[ChatResponse],
            encoding: float, cache_search: float) -> AnswerTrace:
    llm = sum(c.provider_latency for c in chats)
    return AnswerTrace(
        input_tokens=sum(c.input_token_count for c in chats),
        output_tokens=sum(c.output_token_count for c in chats),
        latency_llm=llm,
        latency_cache_search=cache_search,
        latency_encoding=encoding,
        latency_total=llm + cache_search + encoding,
        **trace_kwargs,
    )


def answer_full_document(doc: _DocumentLike, question: str, providers: ProviderBundle,
                         config: MethodConfig, question_id: str = "") -> AnswerTrace:
    """One answer call over the whole document; touches no cache."""
    response = providers.chat.chat(build_answer_prompt(doc.text, question))
    return _finish(
        dict(question_id=question_id, doc_id=doc.doc_id, method=Method.FULL_DOCUMENT.value,
             threshold=config.similarity_threshold, budget=config.summary_word_budget,
             answer_text=response.text, cache_hit=False, similarity_of_hit=None),
        [response], encoding=0.0, cache_search=0.0,
    )


def answer_no_retrieval(question: str, providers: ProviderBundle, config: MethodConfig,
                        question_id: str = "", doc_id: str = "") -> AnswerTrace:
    """Answer from model knowledge alone; the reference slot is a stub."""
    response = providers.chat.chat(build_answer_prompt(EMPTY_REFERENCE, question))
    return _finish(
        dict(question_id=question_id, doc_id=doc_id, method=Method.NO_RETRIEVAL.value,
             threshold=config.similarity_threshold, budget=config.summary_word_budget,
             answer_text=response.text, cache_hit=False, similarity_of_hit=None),
        [response], encoding=0.0, cache_search=0.0,
    )


def answer_noncontextual_summary(doc: _DocumentLike, question: str, providers: ProviderBundle,
                                 state: MethodState, question_id: str = "") -> AnswerTrace:
    """Generate one general summary per document version, reuse it forever."""
    config = state.config
    chats: list[ChatResponse] = []
    key = (doc.doc_id, doc.version)
    summary = state.noncontextual_summaries.get(key)
    if summary is None:
        response = providers.chat.chat(
            build_noncontextual_summary_prompt(doc.text, config.summary_word_budget)
        )
        summary = response.text
        state.noncontextual_summaries[key] = summary
        chats.append(response)
    answer = providers.chat.chat(build_answer_prompt(summary, question))
    chats.append(answer)
    return _finish(
        dict(question_id=question_id, doc_id=doc.doc_id,
             method=Method.NONCONTEXTUAL_SUMMARY.value,
             threshold=config.similarity_threshold, budget=config.summary_word_budget,
             answer_text=answer.text, cache_hit=False, similarity_of_hit=None),
        chats, encoding=0.0, cache_search=0.0,
    )


def answer_contextual_cached(doc: _DocumentLike, question: str, providers: ProviderBundle,
                             state: MethodState, question_id: str = "") -> AnswerTrace:
    """Reuse a cached query-aware summary above the threshold, else make one.

    A hit never regenerates the summary; the miss path answers from the
    freshly generated summary, not the full document.
    """
    config = state.config
    cache = state.cache
    assert cache is not None
    cache.ensure_document(doc.doc_id, doc.version)
    embedding, encode_latency = providers.embed.embed_timed(question)
    search_latency = SEARCH_LATENCY.cost(cache.doc_entry_count(doc.doc_id))
    found = cache.lookup(doc.doc_id, question, embedding,
                         threshold_override=config.similarity_threshold)
    chats: list[ChatResponse] = []
    if found is not None:
        entry, similarity = found
        answer = providers.chat.chat(build_answer_prompt(entry.summary_text, question))
        chats.append(answer)
        hit, sim = True, similarity
    else:
        summary_resp = providers.chat.chat(
            build_contextual_summary_prompt(doc.text, question, config.summary_word_budget)
        )
        chats.append(summary_resp)
        cache.insert_summary(doc.doc_id, doc.version, question, embedding,
                             summary_resp.text, config.summary_word_budget)
        answer = providers.chat.chat(build_answer_prompt(summary_resp.text, question))
        chats.append(answer)
        hit, sim = False, None
    return _finish(
        dict(question_id=question_id, doc_id=doc.doc_id,
             method=Method.CONTEXTUAL_SUMMARY_CACHED.value,
             threshold=config.similarity_threshold, budget=config.summary_word_budget,
             answer_text=answer.text, cache_hit=hit, similarity_of_hit=sim),
        chats, encoding=encode_latency, cache_search=search_latency,
    )


def answer_prompt_cached(doc: _DocumentLike, question: str, providers: ProviderBundle,
                         state: MethodState, question_id: str = "") -> AnswerTrace:
    """Cache answers keyed on the embedding of the entire rendered prompt."""
    config = state.config
    answer_cache = state.answer_cache
    assert answer_cache is not None
    prompt = build_answer_prompt(doc.text, question)
    embedding, encode_latency = providers.embed.embed_timed(render_request(prompt))
    search_latency = SEARCH_LATENCY.cost(answer_cache.size())
    found = answer_cache.lookup(embedding, config.similarity_threshold)
    chats: list[ChatResponse] = []
    if found is not None:
        answer_text, sim = found
        hit = True
    else:
        response = providers.chat.chat(prompt)
        chats.append(response)
        answer_cache.insert(embedding, response.text)
        answer_text, sim, hit = response.text, None, False
    return _finish(
        dict(question_id=question_id, doc_id=doc.doc_id,
             method=Method.FULL_PROMPT_ANSWER_CACHE.value,
             threshold=config.similarity_threshold, budget=config.summary_word_budget,
             answer_text=answer_text, cache_hit=hit, similarity_of_hit=sim),
        chats, encoding=encode_latency, cache_search=search_latency,
    )


def run_method(doc: Optional[_DocumentLike], question: str, providers: ProviderBundle,
               state: MethodState, question_id: str = "") -> AnswerTrace:
    """Dispatch one question to the strategy configured in `state`."""
    method = state.config.method
    if method is Method.FULL_DOCUMENT:
        assert doc is not None
        return answer_full_document(doc, question, providers, state.config, question_id)
    if method is Method.NO_RETRIEVAL:
        return answer_no_retrieval(question, providers, state.config, question_id,
                                   doc_id=doc.doc_id if doc is not None else "")
    if method is Method.NONCONTEXTUAL_SUMMARY:
        assert doc is not None
        return answer_noncontextual_summary(doc, question, providers, state, question_id)
    if method is Method.CONTEXTUAL_SUMMARY_CACHED:
        assert doc is not None
        return answer_contextual_cached(doc, question, providers, state, question_id)
    assert doc is not None
    return answer_prompt_cached(doc, question, providers, state, question_id)
