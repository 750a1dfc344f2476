"""Corpus handling and the question-stream replay loop.

The synthetic corpus generator builds documents out of topic sections with
disjoint vocabularies. Each section opens with a designated fact sentence
("<key> <answer span>"); each question carries that section's key token
plus tokens unique to the question, so the extractive mock providers can
answer it exactly, and questions about different sections are nearly
orthogonal under the hashing embedder. Duplicates and paraphrases are
injected at configurable rates to control achievable cache hit rates.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .errors import (
    CorpusFormatError,
    CorpusSpecError,
    IntegrityError,
    ProviderProtocolError,
    ProviderUnavailableError,
    SemsumError,
    UnknownDocumentError,
)
from .metrics import RunReport, utility as utility_score
from .pipeline import AnswerTrace, Method, MethodConfig, MethodState, ProviderBundle, run_method
from .providers import (
    HashingEmbedder,
    MockChatProvider,
    TOKEN_ESTIMATOR_NAME,
)
from .semcache import SummaryCache

logger = logging.getLogger(__name__)

MIN_DOC_WORDS = 800
MIN_QUESTIONS_PER_DOC = 10


@dataclass
class Document:
    doc_id: str
    version: int
    title: str
    text: str

    @property
    def word_count(self) -> int:
        return len(self.text.split())


@dataclass
class QuestionRecord:
    question_id: str
    doc_id: str
    question_text: str
    gold_answer: str


@dataclass
class Corpus:
    documents: dict[str, Document]
    questions: list[QuestionRecord]
    rejected: list[tuple[str, str]] = field(default_factory=list)

    def questions_by_doc(self) -> dict[str, list[str]]:
        grouped: dict[str, list[str]] = {}
        for q in self.questions:
            grouped.setdefault(q.doc_id, []).append(q.question_text)
        return grouped


# -- corpus ingestion -----------------------------------------------------------

def load_corpus(path: str) -> Corpus:
    """Load a line-delimited JSON corpus, applying the admission filters.

    Documents need >= 800 words and >= 10 questions; rejected items are
    logged with reasons. Every question must reference a loaded document.
    """
    documents: dict[str, Document] = {}
    questions: list[QuestionRecord] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"invalid JSON: {exc.msg}", lineno) from exc
            kind = record.get("kind")
            try:
                if kind == "doc":
                    doc = Document(
                        doc_id=record["doc_id"],
                        version=int(record.get("version", 1)),
                        title=record.get("title", ""),
                        text=record["text"],
                    )
                    if doc.doc_id in documents:
                        raise IntegrityError(f"duplicate doc_id {doc.doc_id!r}")
                    documents[doc.doc_id] = doc
                elif kind == "question":
                    questions.append(QuestionRecord(
                        question_id=record["question_id"],
                        doc_id=record["doc_id"],
                        question_text=record["question_text"],
                        gold_answer=record["gold_answer"],
                    ))
                else:
                    raise CorpusFormatError(f"unknown record kind {kind!r}", lineno)
            except KeyError as exc:
                raise CorpusFormatError(f"missing field {exc.args[0]!r}", lineno) from exc

    for q in questions:
        if q.doc_id not in documents:
            raise IntegrityError(
                f"question {q.question_id!r} references unknown doc {q.doc_id!r}"
            )

    rejected: list[tuple[str, str]] = []
    per_doc: dict[str, int] = {}
    for q in questions:
        per_doc[q.doc_id] = per_doc.get(q.doc_id, 0) + 1
    admitted_docs: dict[str, Document] = {}
    for doc_id, doc in documents.items():
        n_questions = per_doc.get(doc_id, 0)
        if doc.word_count < MIN_DOC_WORDS:
            reason = f"only {doc.word_count} words (< {MIN_DOC_WORDS})"
        elif n_questions < MIN_QUESTIONS_PER_DOC:
            reason = f"only {n_questions} questions (< {MIN_QUESTIONS_PER_DOC})"
        else:
            admitted_docs[doc_id] = doc
            continue
        rejected.append((doc_id, reason))
        logger.info("rejected document %s: %s", doc_id, reason)
    admitted_questions = [q for q in questions if q.doc_id in admitted_docs]
    return Corpus(documents=admitted_docs, questions=admitted_questions, rejected=rejected)


def write_corpus_jsonl(corpus: Corpus, path: str) -> None:
    with open(path, "w") as fh:
        for doc in corpus.documents.values():
            fh.write(json.dumps({
                "kind": "doc", "doc_id": doc.doc_id, "version": doc.version,
                "title": doc.title, "text": doc.text,
            }, sort_keys=True) + "\n")
        for q in corpus.questions:
            fh.write(json.dumps({
                "kind": "question", "question_id": q.question_id, "doc_id": q.doc_id,
                "question_text": q.question_text, "gold_answer": q.gold_answer,
            }, sort_keys=True) + "\n")


# -- synthetic corpus -----------------------------------------------------------

@dataclass
class SyntheticCorpusSpec:
    n_docs: int = 10
    words_per_doc_mean: float = 4057.0
    words_per_doc_std: float = 930.0
    questions_per_doc: int = 15
    question_words_mean: float = 8.0
    question_words_std: float = 3.0
    answer_words_mean: float = 3.0
    answer_words_std: float = 4.0
    duplicate_question_rate: float = 0.0
    paraphrase_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.duplicate_question_rate <= 1.0:
            raise CorpusSpecError(
                f"duplicate_question_rate must be in [0, 1], got {self.duplicate_question_rate}"
            )
        if not 0.0 <= self.paraphrase_rate <= 1.0:
            raise CorpusSpecError(
                f"paraphrase_rate must be in [0, 1], got {self.paraphrase_rate}"
            )
        if self.duplicate_question_rate + self.paraphrase_rate > 1.0:
            raise CorpusSpecError("duplicate + paraphrase rates exceed 1")
        if self.n_docs < 1 or self.questions_per_doc < 1:
            raise CorpusSpecError("need at least one document and one question per doc")


_SYLLABLES = ["ba", "ce", "di", "fo", "gu", "ha", "ki", "lo", "mu", "ne",
              "pa", "qi", "ro", "su", "ta", "ve", "wo", "xu", "ya", "zo"]


class _TokenFactory:
    """Emits globally unique pronounceable tokens; disjoint vocabularies
    across documents and sections fall out of uniqueness."""

    def __init__(self, rng: random.Random):
        self._rng = rng
        self._counter = 0

    def token(self) -> str:
        self._counter += 1
        stem = "".join(self._rng.choice(_SYLLABLES) for _ in range(3))
        return f"{stem}{self._counter}"


def generate_synthetic_corpus(spec: SyntheticCorpusSpec) -> Corpus:
    """Deterministic synthetic corpus; see the module docstring for shape."""
    rng = random.Random(spec.seed)
    tokens = _TokenFactory(rng)
    documents: dict[str, Document] = {}
    questions: list[QuestionRecord] = []

    for d in range(spec.n_docs):
        doc_id = f"doc{d:04d}"
        n_q = spec.questions_per_doc
        # slot 0 is always original so later duplicates have a referent
        slot_kinds = ["original"]
        for _ in range(1, n_q):
            r = rng.random()
            if r < spec.duplicate_question_rate:
                slot_kinds.append("duplicate")
            elif r < spec.duplicate_question_rate + spec.paraphrase_rate:
                slot_kinds.append("paraphrase")
            else:
                slot_kinds.append("original")

        original_slots = [i for i, k in enumerate(slot_kinds) if k == "original"]
        n_sections = len(original_slots)
        target_words = max(MIN_DOC_WORDS + 100, round(rng.gauss(
            spec.words_per_doc_mean, spec.words_per_doc_std)))
        words_per_section = max(20, target_words // n_sections)

        sections: list[str] = []
        originals: dict[int, tuple[str, str]] = {}  # slot -> (question, gold)
        for slot in original_slots:
            key = tokens.token()
            span_len = min(3, max(1, round(rng.gauss(
                spec.answer_words_mean, spec.answer_words_std))))
            span = [tokens.token() for _ in range(span_len)]
            fact_sentence = " ".join([key] + span)
            sentences = [fact_sentence]
            words = len(fact_sentence.split())
            while words < words_per_section:
                length = rng.randint(9, 14)
                filler = " ".join(tokens.token() for _ in range(length))
                sentences.append(filler)
                words += length
            sections.append(". ".join(sentences) + ".")

            q_len = max(3, round(rng.gauss(spec.question_words_mean, spec.question_words_std)))
            q_tokens = [key] + [tokens.token() for _ in range(q_len - 1)]
            originals[slot] = (" ".join(q_tokens), " ".join(span))

        text = " ".join(sections)
        documents[doc_id] = Document(
            doc_id=doc_id, version=1, title=f"Synthetic document {d}", text=text,
        )

        for slot, kind in enumerate(slot_kinds):
            qid = f"{doc_id}-q{slot:03d}"
            if kind == "original":
                q_text, gold = originals[slot]
            else:
                ref_slot = rng.choice([s for s in original_slots if s < slot])
                q_text, gold = originals[ref_slot]
                if kind == "paraphrase":
                    words = q_text.split()
                    # substitute 1-3 non-key tokens; keep >= 50% token overlap
                    k = min(rng.randint(1, 3), (len(words) - 1) // 2)
                    k = max(k, 1) if len(words) > 1 else 0
                    positions = rng.sample(range(1, len(words)), k) if k else []
                    for pos in positions:
                        words[pos] = tokens.token()
                    q_text = " ".join(words)
            questions.append(QuestionRecord(
                question_id=qid, doc_id=doc_id, question_text=q_text, gold_answer=gold,
            ))

    return Corpus(documents=documents, questions=questions)


# -- stream replay ----------------------------------------------------------------

class StreamAbortedError(SemsumError):
    """A provider failed mid-run; partial traces are attached."""

    def __init__(self, message: str, partial: list[AnswerTrace]):
        super().__init__(message)
        self.partial = partial


@dataclass
class StreamResult:
    config: MethodConfig
    report: RunReport
    state: MethodState


def default_providers() -> ProviderBundle:
    return ProviderBundle(chat=MockChatProvider(), embed=HashingEmbedder())


def run_stream(
    corpus: Corpus,
    method_configs: Sequence[MethodConfig],
    order_seed: int,
    providers: Optional[ProviderBundle] = None,
    utility_reference: str = "gold",
) -> list[StreamResult]:
    """Replay one seeded global shuffle of the questions for every config.

    All configs see the identical question order against fresh caches.
    `utility_reference` is normally the corpus gold answers;
    "full_document" scores against full-document answers instead (flagged
    in run metadata because it inflates that method's utility).
    """
    if not corpus.questions:
        raise IntegrityError("corpus has no questions")
    providers = providers or default_providers()
    order = list(corpus.questions)
    random.Random(order_seed).shuffle(order)

    references: dict[str, str] = {}
    if utility_reference == "full_document":
        ref_config = MethodConfig(method=Method.FULL_DOCUMENT)
        for q in order:
            doc = corpus.documents[q.doc_id]
            trace = run_method(doc, q.question_text, providers,
                               MethodState(config=ref_config), q.question_id)
            references[q.question_id] = trace.answer_text
    elif utility_reference == "gold":
        references = {q.question_id: q.gold_answer for q in order}
    else:
        raise ValueError(f"unknown utility reference {utility_reference!r}")

    results = []
    for config in method_configs:
        state = MethodState.create(config, providers.embed.dim)
        traces: list[AnswerTrace] = []
        for q in order:
            doc = corpus.documents[q.doc_id]
            try:
                trace = run_method(doc, q.question_text, providers, state, q.question_id)
            except (ProviderUnavailableError, ProviderProtocolError) as exc:
                raise StreamAbortedError(f"provider failure on {q.question_id}: {exc}",
                                         partial=traces) from exc
            trace.utility = utility_score(trace.answer_text, references[q.question_id],
                                          providers.embed)
            traces.append(trace)
        results.append(StreamResult(config=config, report=RunReport.from_traces(traces),
                                    state=state))
    return results


def run_sweep(
    corpus: Corpus,
    thresholds: Sequence[float] = (0.6, 0.8),
    budgets: Sequence[int] = (100, 200, 400),
    order_seed: int = 0,
    providers: Optional[ProviderBundle] = None,
) -> list[StreamResult]:
    """Threshold x budget grid for the cached-contextual method, identical
    stream per cell; rows come out via each result's aggregate."""
    if not thresholds or not budgets:
        raise ValueError("need at least one threshold and one budget")
    configs = [
        MethodConfig(method=Method.CONTEXTUAL_SUMMARY_CACHED,
                     similarity_threshold=t, summary_word_budget=b)
        for t in thresholds for b in budgets
    ]
    return run_stream(corpus, configs, order_seed, providers)


def threshold_selection_sweep(
    corpus: Corpus,
    thresholds: Sequence[float],
    config: MethodConfig,
    order_seed: int = 0,
    providers: Optional[ProviderBundle] = None,
) -> list[StreamResult]:
    """Operating-point selection: one cached-contextual run per threshold."""
    return run_sweep(corpus, thresholds=thresholds, budgets=[config.summary_word_budget],
                     order_seed=order_seed, providers=providers)


def apply_document_update(corpus: Corpus, doc_id: str, new_text: str,
                          caches: Sequence[SummaryCache]) -> Document:
    """Replace a document's text, bump its version, purge it from caches."""
    doc = corpus.documents.get(doc_id)
    if doc is None:
        raise UnknownDocumentError(f"unknown document: {doc_id!r}")
    if len(new_text.split()) < MIN_DOC_WORDS:
        raise IntegrityError(
            f"updated text has {len(new_text.split())} words (< {MIN_DOC_WORDS})"
        )
    doc.text = new_text
    doc.version += 1
    for cache in caches:
        if cache.has_document(doc_id):
            cache.invalidate_document(doc_id, doc.version)
    return doc


def run_metadata(order_seed: int, configs: Sequence[MethodConfig],
                 providers: ProviderBundle, utility_reference: str = "gold",
                 corpus_spec: Optional[SyntheticCorpusSpec] = None) -> dict:
    """Self-describing run manifest; enough to reproduce the run exactly."""
    meta = {
        "order_seed": order_seed,
        "methods": [
            {"method": c.method.value, "threshold": c.similarity_threshold,
             "budget": c.summary_word_budget}
            for c in configs
        ],
        "chat_provider": getattr(providers.chat, "name", type(providers.chat).__name__),
        "embed_provider": getattr(providers.embed, "name", type(providers.embed).__name__),
        "embed_dim": providers.embed.dim,
        "token_estimator": TOKEN_ESTIMATOR_NAME,
        "utility_reference": utility_reference,
    }
    if utility_reference == "full_document":
        meta["utility_reference_warning"] = (
            "full-document answers as reference inflate that method's utility"
        )
    if corpus_spec is not None:
        meta["corpus_spec"] = corpus_spec.__dict__
    return meta
