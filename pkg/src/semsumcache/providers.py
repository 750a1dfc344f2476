"""Chat and embedding backends plus the canonical prompt templates.

The mock providers are pure functions of their inputs: the chat mock
answers extractively from the prompt text and the embedder feature-hashes
tokens, so whole simulation runs are reproducible byte-for-byte on any
host. Remote providers speak a minimal JSON schema; vendor adapters are
thin wrappers left to integrators.
"""

from __future__ import annotations

import hashlib
import math
import re
import time
from dataclasses import dataclass
from typing import NamedTuple, Optional, Protocol

import numpy as np

from .errors import (
    DegenerateVectorError,
    EmptyInputError,
    ProviderProtocolError,
    ProviderUnavailableError,
)
from .vectorspace import EmbeddingVector

TOKEN_ESTIMATOR_NAME = "ceil-bytes-over-4"

ROLE_SYSTEM = "system"
ROLE_ASSISTANT = "assistant"
ROLE_USER = "user"


class Message(NamedTuple):
    role: str
    content: str


@dataclass
class ChatRequest:
    messages: list[Message]
    temperature: float = 0.0
    top_p: float = 1.0
    max_output_words: Optional[int] = None

    def __post_init__(self):
        if not self.messages or self.messages[0].role != ROLE_SYSTEM:
            raise ValueError("first message must have role 'system'")
        for m in self.messages:
            if m.role not in (ROLE_SYSTEM, ROLE_ASSISTANT, ROLE_USER):
                raise ValueError(f"unknown role {m.role!r}")


@dataclass
class ChatResponse:
    text: str
    input_token_count: int
    output_token_count: int
    provider_latency: float


def count_tokens(text: str) -> int:
    """Token-cost estimate: ceil(utf-8 bytes / 4). Deliberately crude but
    stable across platforms; the estimator name goes into run metadata."""
    if not text:
        return 0
    return math.ceil(len(text.encode("utf-8")) / 4)


def render_request(request: ChatRequest) -> str:
    """Canonical flat rendering used for input-token accounting."""
    return "\n".join(f"{m.role}: {m.content}" for m in request.messages)


# -- prompt templates ---------------------------------------------------------

_SUMMARY_SYSTEM = (
    "You are an Expert at Summarizing text content and all your outputs are expertly "
    "curated. You will ask the user for a document. You will then write a precise, "
    "detailed {budget}-word summary for the document. The summary should be informative "
    "and stick to the information from the document."
)

_CONTEXTUAL_SUMMARY_SYSTEM = (
    "You are an Expert at Summarizing text content and all your outputs are expertly "
    "curated. You will ask the user for a document, then for a question. You will then "
    "write a precise, detailed {budget}-word summary for the document that will help "
    "answering the question and follow-up or related questions. The summary you write "
    "*must* contain a precise, detailed answer to the question, *if and only if* it is "
    "present in the document. The summary should be informative and stick to the "
    "information from the document."
)

_ANSWER_SYSTEM = (
    "You are an Expert at Answering questions using text content and all your outputs "
    "are expertly curated. You will ask the user for a document, then for a question. "
    "You will then write a concise (max. 3 words) answer to the question, *if and only "
    "if* it is present in the document. The answer should be informative and stick to "
    "the information from the document."
)

ASK_DOCUMENT = "What is the document you would like to summarize?"
ASK_DOCUMENT_FOR_ANSWER = "What is the document you would like to use?"
ASK_QUESTION = "What is the question you would like to answer?"
SUMMARY_LEAD_IN = "Here is a summary of the document:\n"
CONTEXTUAL_SUMMARY_LEAD_IN = "Here is a summary of the document that answers your question:\n"
ANSWER_LEAD_IN = "Here is the answer to your question:\n"

EMPTY_REFERENCE = "(no document provided)"


def build_noncontextual_summary_prompt(document: str, word_budget: int) -> ChatRequest:
    """Four-message general-summary prompt, budget substituted into the text."""
    if not document:
        raise EmptyInputError("document must be non-empty")
    if word_budget < 1:
        raise ValueError(f"word_budget must be >= 1, got {word_budget}")
    return ChatRequest(
        messages=[
            Message(ROLE_SYSTEM, _SUMMARY_SYSTEM.format(budget=word_budget)),
            Message(ROLE_ASSISTANT, ASK_DOCUMENT),
            Message(ROLE_USER, document),
            Message(ROLE_ASSISTANT, SUMMARY_LEAD_IN),
        ],
        max_output_words=word_budget,
    )


def build_contextual_summary_prompt(document: str, question: str, word_budget: int) -> ChatRequest:
    """Six-message query-aware summary prompt."""
    if not document:
        raise EmptyInputError("document must be non-empty")
    if not question:
        raise EmptyInputError("question must be non-empty")
    if word_budget < 1:
        raise ValueError(f"word_budget must be >= 1, got {word_budget}")
    return ChatRequest(
        messages=[
            Message(ROLE_SYSTEM, _CONTEXTUAL_SUMMARY_SYSTEM.format(budget=word_budget)),
            Message(ROLE_ASSISTANT, ASK_DOCUMENT),
            Message(ROLE_USER, document),
            Message(ROLE_ASSISTANT, ASK_QUESTION),
            Message(ROLE_USER, question),
            Message(ROLE_ASSISTANT, CONTEXTUAL_SUMMARY_LEAD_IN),
        ],
        max_output_words=word_budget,
    )


def build_answer_prompt(reference: str, question: str) -> ChatRequest:
    """Six-message answering prompt over a reference (summary or full doc)."""
    if not reference:
        raise EmptyInputError("reference must be non-empty")
    if not question:
        raise EmptyInputError("question must be non-empty")
    return ChatRequest(
        messages=[
            Message(ROLE_SYSTEM, _ANSWER_SYSTEM),
            Message(ROLE_ASSISTANT, ASK_DOCUMENT_FOR_ANSWER),
            Message(ROLE_USER, reference),
            Message(ROLE_ASSISTANT, ASK_QUESTION),
            Message(ROLE_USER, question),
            Message(ROLE_ASSISTANT, ANSWER_LEAD_IN),
        ],
        max_output_words=3,
    )


# -- provider contracts -------------------------------------------------------

class ChatProvider(Protocol):
    def chat(self, request: ChatRequest) -> ChatResponse: ...


class EmbedProvider(Protocol):
    dim: int

    def embed(self, text: str) -> EmbeddingVector: ...

    def embed_timed(self, text: str) -> tuple[EmbeddingVector, float]: ...


# -- text helpers shared by the mock ------------------------------------------

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def split_sentences(text: str) -> list[str]:
    parts = re.split(r"[.!?\n]+", text)
    return [p.strip() for p in parts if p.strip()]


# -- deterministic mock providers ----------------------------------------------

@dataclass
class MockLatencyModel:
    """Injected delays that stand in for wall-clock provider time.

    Nothing actually sleeps; the values land in latency accounting so the
    simulated breakdown has the expected LLM-dominated shape. Latencies are
    deterministic so reports are byte-reproducible.
    """

    chat_base: float = 0.100
    chat_per_100_output_tokens: float = 0.001
    embed_delay: float = 2e-6

    def chat_latency(self, output_tokens: int) -> float:
        return self.chat_base + self.chat_per_100_output_tokens * (output_tokens / 100.0)


class MockChatProvider:
    """Extractive stand-in for a chat LLM.

    Summaries greedily pick the sentences with the highest token overlap
    with the question (position order on ties; lead sentences when there is
    no question), stopping once the word budget is reached. Answers return
    the up-to-3 words following the first question-token match inside the
    best-overlapping sentence.
    """

    name = "mock-extractive"

    def __init__(self, latency: Optional[MockLatencyModel] = None):
        self.latency = latency or MockLatencyModel()
        self.call_count = 0

    def chat(self, request: ChatRequest) -> ChatResponse:
        self.call_count += 1
        text = self._generate(request)
        in_tokens = count_tokens(render_request(request))
        out_tokens = count_tokens(text)
        return ChatResponse(
            text=text,
            input_token_count=in_tokens,
            output_token_count=out_tokens,
            provider_latency=self.latency.chat_latency(out_tokens),
        )

    def _generate(self, request: ChatRequest) -> str:
        system = request.messages[0].content
        if system.startswith("You are an Expert at Summarizing"):
            budget = request.max_output_words or self._parse_budget(system)
            document = request.messages[2].content
            if len(request.messages) >= 6:
                question = request.messages[4].content
                return self._summarize(document, budget, question)
            return self._summarize(document, budget, None)
        if system.startswith("You are an Expert at Answering"):
            reference = request.messages[2].content
            question = request.messages[4].content
            return self._answer(reference, question)
        raise ProviderProtocolError("unrecognized prompt structure")

    @staticmethod
    def _parse_budget(system: str) -> int:
        m = re.search(r"(\d+)-word", system)
        if m is None:
            raise ProviderProtocolError("summary prompt carries no word budget")
        return int(m.group(1))

    @staticmethod
    def _summarize(document: str, budget: int, question: Optional[str]) -> str:
        sentences = split_sentences(document)
        if question is None:
            scored = list(enumerate(sentences))
        else:
            q_tokens = set(tokenize(question))
            scored = sorted(
                enumerate(sentences),
                key=lambda pair: (-len(set(tokenize(pair[1])) & q_tokens), pair[0]),
            )
        picked: list[tuple[int, str]] = []
        words = 0
        for pos, sent in scored:
            if words >= budget:
                break
            picked.append((pos, sent))
            words += len(sent.split())
        picked.sort()
        return ". ".join(sent for _, sent in picked) + "."

    @staticmethod
    def _answer(reference: str, question: str) -> str:
        q_tokens = set(tokenize(question))
        sentences = split_sentences(reference)
        if not sentences:
            return reference.strip() or "unknown"
        best_pos, best_sent, best_overlap = 0, sentences[0], -1
        for pos, sent in enumerate(sentences):
            overlap = len(set(tokenize(sent)) & q_tokens)
            if overlap > best_overlap:
                best_pos, best_sent, best_overlap = pos, sent, overlap
        words = best_sent.split()
        if best_overlap > 0:
            for i, word in enumerate(words):
                if tokenize(word) and tokenize(word)[0] in q_tokens:
                    tail = words[i + 1:i + 4]
                    if tail:
                        return " ".join(tail)
                    break
        return " ".join(words[:3])


class HashingEmbedder:
    """Feature-hashing bag-of-words embedder.

    Lowercase, split on non-alphanumerics, hash each token with a stable
    64-bit hash into `dim` buckets, accumulate term frequency, normalize.
    """

    name = "feature-hash-64"

    def __init__(self, dim: int = 64, delay: float = MockLatencyModel.embed_delay):
        self.dim = dim
        self.delay = delay

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little") % self.dim

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise EmptyInputError("cannot embed empty text")
        tokens = tokenize(text)
        counts = np.zeros(self.dim, dtype=np.float64)
        for token in tokens:
            counts[self._bucket(token)] += 1.0
        norm = np.linalg.norm(counts)
        if norm == 0.0:
            raise DegenerateVectorError("text has no hashable tokens")
        return EmbeddingVector(counts / norm)

    def embed_timed(self, text: str) -> tuple[EmbeddingVector, float]:
        return self.embed(text), self.delay


# -- remote providers ----------------------------------------------------------

@dataclass
class RetryPolicy:
    timeout: float = 30.0
    retries: int = 2
    backoff_base: float = 0.5


class _RemoteBase:
    def __init__(self, endpoint: str, bearer_token: Optional[str] = None,
                 retry: Optional[RetryPolicy] = None):
        self.endpoint = endpoint.rstrip("/")
        self.bearer_token = bearer_token
        self.retry = retry or RetryPolicy()

    def _post(self, path: str, payload: dict) -> dict:
        import requests

        headers = {}
        if self.bearer_token:
            headers["Authorization"] = f"Bearer {self.bearer_token}"
        last_exc: Optional[Exception] = None
        for attempt in range(self.retry.retries + 1):
            try:
                resp = requests.post(
                    f"{self.endpoint}{path}", json=payload,
                    headers=headers, timeout=self.retry.timeout,
                )
                if resp.status_code >= 500:
                    raise ProviderUnavailableError(f"server error {resp.status_code}")
                if resp.status_code != 200:
                    raise ProviderProtocolError(
                        f"unexpected status {resp.status_code}: {resp.text[:200]}"
                    )
                try:
                    return resp.json()
                except ValueError as exc:
                    raise ProviderProtocolError("response is not valid JSON") from exc
            except (requests.RequestException, ProviderUnavailableError) as exc:
                last_exc = exc
                if attempt < self.retry.retries:
                    time.sleep(self.retry.backoff_base * (2 ** attempt))
        raise ProviderUnavailableError(f"provider unreachable: {last_exc}")


class RemoteChatProvider(_RemoteBase):
    """POST {endpoint}/chat with {messages, temperature, top_p} -> {text}."""

    name = "remote-chat"

    def chat(self, request: ChatRequest) -> ChatResponse:
        started = time.perf_counter()
        body = self._post("/chat", {
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "top_p": request.top_p,
        })
        elapsed = time.perf_counter() - started
        if "text" not in body or not isinstance(body["text"], str):
            raise ProviderProtocolError("chat response missing 'text'")
        text = body["text"]
        return ChatResponse(
            text=text,
            input_token_count=count_tokens(render_request(request)),
            output_token_count=count_tokens(text),
            provider_latency=elapsed,
        )


class RemoteEmbedder(_RemoteBase):
    """POST {endpoint}/embed with {text} -> {vector: [...]}; normalizes."""

    name = "remote-embed"

    def __init__(self, endpoint: str, dim: int, bearer_token: Optional[str] = None,
                 retry: Optional[RetryPolicy] = None):
        super().__init__(endpoint, bearer_token, retry)
        self.dim = dim

    def embed(self, text: str) -> EmbeddingVector:
        return self.embed_timed(text)[0]

    def embed_timed(self, text: str) -> tuple[EmbeddingVector, float]:
        if not text:
            raise EmptyInputError("cannot embed empty text")
        started = time.perf_counter()
        body = self._post("/embed", {"text": text})
        elapsed = time.perf_counter() - started
        vector = body.get("vector")
        if not isinstance(vector, list) or len(vector) != self.dim:
            raise ProviderProtocolError("embed response missing well-formed 'vector'")
        from .vectorspace import normalize

        return normalize(EmbeddingVector(vector)), elapsed
