"""Evaluation metrics and analysis artifacts over answer traces.

Everything here is pure aggregation over immutable trace lists; the
per-trace CSV is the single source of truth and aggregates recompute from
it exactly.
"""

from __future__ import annotations

import csv
import json
import math
import statistics
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import EmptyInputError, InsufficientDataError
from .pipeline import AnswerTrace
from .providers import EmbedProvider
from .vectorspace import cosine_similarity

CSV_COLUMNS = [
    "question_id", "doc_id", "method", "threshold", "budget", "cache_hit",
    "similarity", "input_tokens", "output_tokens", "latency_llm_s",
    "latency_cache_s", "latency_encode_s", "latency_total_s", "utility",
]

BOOTSTRAP_RESAMPLES = 1000
BOOTSTRAP_SEED = 0
DEFAULT_BUCKET_WIDTH = 0.05


def utility(answer: str, gold: str, embed_provider: EmbedProvider) -> float:
    """Cosine similarity of answer and ground-truth embeddings, in [-1, 1]."""
    if not answer:
        raise EmptyInputError("answer must be non-empty")
    if not gold:
        raise EmptyInputError("gold answer must be non-empty")
    return cosine_similarity(embed_provider.embed(answer), embed_provider.embed(gold))


@dataclass
class HistogramReport:
    bucket_edges: list[float]
    counts: list[int]
    mean: float
    median: float
    std: float
    ci95: tuple[float, float]
    n_pairs: int


def question_pair_similarity_histogram(
    questions_by_doc: dict[str, Sequence[str]],
    embed_provider: EmbedProvider,
    bucket_width: float = DEFAULT_BUCKET_WIDTH,
) -> HistogramReport:
    """Distribution of within-document question-pair cosine similarities.

    Scores every unordered pair of questions sharing a document and pools
    the scores. The 95% interval is a percentile bootstrap of the pooled
    scores (fixed seed, 1000 resamples).
    """
    scores: list[float] = []
    for _, questions in sorted(questions_by_doc.items()):
        vectors = [embed_provider.embed(q) for q in questions]
        for i in range(len(vectors)):
            for j in range(i + 1, len(vectors)):
                scores.append(cosine_similarity(vectors[i], vectors[j]))
    if not scores:
        raise InsufficientDataError("need at least one document with >= 2 questions")
    arr = np.asarray(scores)
    n_buckets = math.ceil(1.0 / bucket_width)
    edges = [min(i * bucket_width, 1.0) for i in range(n_buckets + 1)]
    counts = [0] * n_buckets
    for s in scores:
        idx = min(int(max(s, 0.0) / bucket_width), n_buckets - 1)
        counts[idx] += 1
    rng = np.random.default_rng(BOOTSTRAP_SEED)
    means = [float(rng.choice(arr, size=arr.size, replace=True).mean())
             for _ in range(BOOTSTRAP_RESAMPLES)]
    lo, hi = np.percentile(means, [2.5, 97.5])
    return HistogramReport(
        bucket_edges=edges,
        counts=counts,
        mean=float(arr.mean()),
        median=float(np.median(arr)),
        std=float(arr.std(ddof=0)),
        ci95=(float(lo), float(hi)),
        n_pairs=len(scores),
    )


@dataclass
class SimilarityBucket:
    lo: float
    hi: float
    mean_utility: float
    count: int


def utility_vs_similarity_buckets(
    traces: Iterable[AnswerTrace],
    bucket_edges: Optional[Sequence[float]] = None,
) -> list[SimilarityBucket]:
    """Mean utility of hit traces grouped by the similarity of the hit."""
    if bucket_edges is None:
        n = round(1.0 / DEFAULT_BUCKET_WIDTH)
        bucket_edges = [i / n for i in range(n + 1)]
    edges = list(bucket_edges)
    hits = [t for t in traces
            if t.cache_hit and t.similarity_of_hit is not None and t.utility is not None]
    if not hits:
        raise InsufficientDataError("no hit traces with recorded similarity")
    buckets: list[SimilarityBucket] = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        # last bucket is closed on the right so similarity 1.0 lands somewhere
        members = [t for t in hits
                   if lo <= t.similarity_of_hit < hi
                   or (hi == edges[-1] and t.similarity_of_hit == hi)]
        mean_u = sum(t.utility for t in members) / len(members) if members else float("nan")
        buckets.append(SimilarityBucket(lo=lo, hi=hi, mean_utility=mean_u, count=len(members)))
    return buckets


@dataclass
class MethodAggregate:
    method: str
    threshold: float
    budget: int
    n_traces: int
    hit_rate: float
    utility_mean: float
    utility_std: float
    input_tokens_mean: float
    input_tokens_std: float
    output_tokens_mean: float
    output_tokens_std: float
    latency_mean: float
    latency_std: float
    input_tokens_total: int
    output_tokens_total: int


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    if not values:
        return 0.0, 0.0
    mean = statistics.fmean(values)
    std = statistics.pstdev(values) if len(values) > 1 else 0.0
    return mean, std


def aggregate_traces(traces: Sequence[AnswerTrace]) -> MethodAggregate:
    if not traces:
        raise InsufficientDataError("cannot aggregate an empty trace list")
    utilities = [t.utility for t in traces if t.utility is not None]
    u_mean, u_std = _mean_std(utilities)
    in_mean, in_std = _mean_std([t.input_tokens for t in traces])
    out_mean, out_std = _mean_std([t.output_tokens for t in traces])
    lat_mean, lat_std = _mean_std([t.latency_total for t in traces])
    return MethodAggregate(
        method=traces[0].method,
        threshold=traces[0].threshold,
        budget=traces[0].budget,
        n_traces=len(traces),
        hit_rate=sum(1 for t in traces if t.cache_hit) / len(traces),
        utility_mean=u_mean,
        utility_std=u_std,
        input_tokens_mean=in_mean,
        input_tokens_std=in_std,
        output_tokens_mean=out_mean,
        output_tokens_std=out_std,
        latency_mean=lat_mean,
        latency_std=lat_std,
        input_tokens_total=sum(t.input_tokens for t in traces),
        output_tokens_total=sum(t.output_tokens for t in traces),
    )


@dataclass
class RunReport:
    """Per-method result of replaying one question stream."""

    traces: list[AnswerTrace]
    aggregate: MethodAggregate
    cumulative_hit_rate: list[float] = field(default_factory=list)
    cumulative_input_tokens: list[int] = field(default_factory=list)
    cumulative_utility_mean: list[float] = field(default_factory=list)

    @classmethod
    def from_traces(cls, traces: Sequence[AnswerTrace]) -> "RunReport":
        traces = list(traces)
        hits = 0
        tokens = 0
        util_sum = 0.0
        util_n = 0
        cum_hit, cum_tokens, cum_util = [], [], []
        for i, t in enumerate(traces, start=1):
            hits += 1 if t.cache_hit else 0
            tokens += t.input_tokens
            if t.utility is not None:
                util_sum += t.utility
                util_n += 1
            cum_hit.append(hits / i)
            cum_tokens.append(tokens)
            cum_util.append(util_sum / util_n if util_n else 0.0)
        return cls(
            traces=traces,
            aggregate=aggregate_traces(traces),
            cumulative_hit_rate=cum_hit,
            cumulative_input_tokens=cum_tokens,
            cumulative_utility_mean=cum_util,
        )


# -- persistence ---------------------------------------------------------------

def _fmt_opt(value) -> str:
    return "" if value is None else repr(value) if isinstance(value, float) else str(value)


def trace_to_row(trace: AnswerTrace) -> list[str]:
    return [
        trace.question_id,
        trace.doc_id,
        trace.method,
        repr(trace.threshold),
        str(trace.budget),
        "true" if trace.cache_hit else "false",
        _fmt_opt(trace.similarity_of_hit),
        str(trace.input_tokens),
        str(trace.output_tokens),
        repr(trace.latency_llm),
        repr(trace.latency_cache_search),
        repr(trace.latency_encoding),
        repr(trace.latency_total),
        _fmt_opt(trace.utility),
    ]


def write_trace_csv(traces: Iterable[AnswerTrace], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for trace in traces:
            writer.writerow(trace_to_row(trace))


def read_trace_csv(path: str) -> list[AnswerTrace]:
    traces = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            traces.append(AnswerTrace(
                question_id=row["question_id"],
                doc_id=row["doc_id"],
                method=row["method"],
                threshold=float(row["threshold"]),
                budget=int(row["budget"]),
                answer_text="",
                cache_hit=row["cache_hit"] == "true",
                similarity_of_hit=float(row["similarity"]) if row["similarity"] else None,
                input_tokens=int(row["input_tokens"]),
                output_tokens=int(row["output_tokens"]),
                latency_llm=float(row["latency_llm_s"]),
                latency_cache_search=float(row["latency_cache_s"]),
                latency_encoding=float(row["latency_encode_s"]),
                latency_total=float(row["latency_total_s"]),
                utility=float(row["utility"]) if row["utility"] else None,
            ))
    return traces


def write_aggregate_json(aggregates: Sequence[MethodAggregate], path: str) -> None:
    with open(path, "w") as fh:
        json.dump([asdict(a) for a in aggregates], fh, indent=2, sort_keys=True)
        fh.write("\n")
