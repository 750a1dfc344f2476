"""Operator entry point: simulations, sweeps, corpus generation, serving.

Exit codes: 0 success, 2 corpus errors, 3 provider errors, 4 bad
configuration. All flags can be supplied via SEMSUM_* environment
variables (click's auto-envvar mechanism).
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
import sys
from pathlib import Path

import click

from . import metrics, simulator
from .errors import (
    CorpusFormatError,
    CorpusSpecError,
    IntegrityError,
    ProviderProtocolError,
    ProviderUnavailableError,
    SnapshotFormatError,
)
from .pipeline import Method, MethodConfig
from .providers import RemoteChatProvider, RemoteEmbedder
from .server import ServiceConfig, serve as serve_app
from .simulator import StreamAbortedError

EXIT_CORPUS = 2
EXIT_PROVIDER = 3
EXIT_CONFIG = 4

_CORPUS_ERRORS = (FileNotFoundError, CorpusFormatError, IntegrityError, CorpusSpecError)
_PROVIDER_ERRORS = (ProviderUnavailableError, ProviderProtocolError, StreamAbortedError)


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _parse_methods(spec: str) -> list[Method]:
    try:
        return [Method(name.strip()) for name in spec.split(",") if name.strip()]
    except ValueError as exc:
        _fail(EXIT_CONFIG, f"unknown method in {spec!r}: {exc}")


def _parse_floats(spec: str) -> list[float]:
    return [float(x) for x in spec.split(",") if x.strip()]


def _parse_ints(spec: str) -> list[int]:
    return [int(x) for x in spec.split(",") if x.strip()]


def _providers(chat_endpoint: str | None, embed_endpoint: str | None, embed_dim: int):
    bundle = simulator.default_providers()
    if chat_endpoint:
        bundle.chat = RemoteChatProvider(chat_endpoint)
    if embed_endpoint:
        bundle.embed = RemoteEmbedder(embed_endpoint, dim=embed_dim)
    return bundle


@click.group(context_settings={"auto_envvar_prefix": "SEMSUM"})
def main() -> None:
    """Semantic summary cache: simulation harness and service."""


@main.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--methods", default=",".join(m.value for m in Method), show_default=True)
@click.option("--threshold", default=0.8, show_default=True)
@click.option("--budget", default=200, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--utility-reference", default="gold",
              type=click.Choice(["gold", "full_document"]), show_default=True)
@click.option("--chat-endpoint", default=None)
@click.option("--embed-endpoint", default=None)
@click.option("--embed-dim", default=64, show_default=True)
def simulate(corpus_path, methods, threshold, budget, seed, out_dir, utility_reference,
             chat_endpoint, embed_endpoint, embed_dim) -> None:
    """Replay the corpus question stream and write report files."""
    method_list = _parse_methods(methods)
    try:
        configs = [MethodConfig(method=m, similarity_threshold=threshold,
                                summary_word_budget=budget) for m in method_list]
    except ValueError as exc:
        _fail(EXIT_CONFIG, str(exc))
    try:
        corpus = simulator.load_corpus(corpus_path)
    except _CORPUS_ERRORS as exc:
        _fail(EXIT_CORPUS, str(exc))
    providers = _providers(chat_endpoint, embed_endpoint, embed_dim)
    try:
        results = simulator.run_stream(corpus, configs, order_seed=seed,
                                       providers=providers,
                                       utility_reference=utility_reference)
    except _PROVIDER_ERRORS as exc:
        _fail(EXIT_PROVIDER, str(exc))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traces = [t for r in results for t in r.report.traces]
    metrics.write_trace_csv(traces, str(out / "report.csv"))
    metrics.write_aggregate_json([r.report.aggregate for r in results],
                                 str(out / "aggregate.json"))
    meta = simulator.run_metadata(seed, configs, providers,
                                  utility_reference=utility_reference)
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    for r in results:
        agg = r.report.aggregate
        click.echo(f"{agg.method}: utility {agg.utility_mean:.3f} "
                   f"hit_rate {agg.hit_rate:.3f} input_tokens {agg.input_tokens_total}")


@main.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--thresholds", default="0.6,0.8", show_default=True)
@click.option("--budgets", default="100,200,400", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def sweep(corpus_path, thresholds, budgets, seed, out_dir) -> None:
    """Threshold x budget grid over the cached-contextual method."""
    try:
        threshold_list = _parse_floats(thresholds)
        budget_list = _parse_ints(budgets)
    except ValueError as exc:
        _fail(EXIT_CONFIG, f"bad grid: {exc}")
    try:
        corpus = simulator.load_corpus(corpus_path)
    except _CORPUS_ERRORS as exc:
        _fail(EXIT_CORPUS, str(exc))
    providers = simulator.default_providers()
    try:
        results = simulator.run_sweep(corpus, thresholds=threshold_list,
                                      budgets=budget_list, order_seed=seed,
                                      providers=providers)
    except _PROVIDER_ERRORS as exc:
        _fail(EXIT_PROVIDER, str(exc))
    except ValueError as exc:
        _fail(EXIT_CONFIG, str(exc))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traces = [t for r in results for t in r.report.traces]
    metrics.write_trace_csv(traces, str(out / "report.csv"))
    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["threshold", "budget", "hit_rate",
                         "input_tokens_mean", "input_tokens_std",
                         "output_tokens_mean", "output_tokens_std",
                         "utility_mean", "utility_std",
                         "latency_mean", "latency_std"])
        for r in results:
            a = r.report.aggregate
            writer.writerow([repr(a.threshold), a.budget, repr(a.hit_rate),
                             repr(a.input_tokens_mean), repr(a.input_tokens_std),
                             repr(a.output_tokens_mean), repr(a.output_tokens_std),
                             repr(a.utility_mean), repr(a.utility_std),
                             repr(a.latency_mean), repr(a.latency_std)])
    configs = [r.config for r in results]
    meta = simulator.run_metadata(seed, configs, providers)
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    click.echo(f"wrote {len(results)} sweep rows to {out / 'sweep.csv'}")


@main.command("gen-corpus")
@click.option("--spec", "spec_path", default=None, type=click.Path(),
              help="JSON file with generator parameters; flags override it.")
@click.option("--n-docs", default=None, type=int)
@click.option("--words-mean", default=None, type=float)
@click.option("--words-std", default=None, type=float)
@click.option("--questions-per-doc", default=None, type=int)
@click.option("--duplicate-rate", default=None, type=float)
@click.option("--paraphrase-rate", default=None, type=float)
@click.option("--seed", default=None, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
def gen_corpus(spec_path, n_docs, words_mean, words_std, questions_per_doc,
               duplicate_rate, paraphrase_rate, seed, out_path) -> None:
    """Generate a deterministic synthetic corpus as JSONL."""
    params = {}
    if spec_path:
        try:
            params.update(json.loads(Path(spec_path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            _fail(EXIT_CORPUS, f"cannot read spec file: {exc}")
    overrides = {
        "n_docs": n_docs, "words_per_doc_mean": words_mean, "words_per_doc_std": words_std,
        "questions_per_doc": questions_per_doc, "duplicate_question_rate": duplicate_rate,
        "paraphrase_rate": paraphrase_rate, "seed": seed,
    }
    params.update({k: v for k, v in overrides.items() if v is not None})
    try:
        corpus_spec = simulator.SyntheticCorpusSpec(**params)
        corpus = simulator.generate_synthetic_corpus(corpus_spec)
    except (CorpusSpecError, TypeError) as exc:
        _fail(EXIT_CONFIG, str(exc))
    simulator.write_corpus_jsonl(corpus, out_path)
    click.echo(f"wrote {len(corpus.documents)} docs / {len(corpus.questions)} questions "
               f"to {out_path}")


@main.command("bucket-analysis")
@click.option("--run", "run_dir", required=True, type=click.Path())
@click.option("--bucket-width", default=0.05, show_default=True)
def bucket_analysis(run_dir, bucket_width) -> None:
    """Utility-vs-hit-similarity buckets from a stored run's traces."""
    report_path = Path(run_dir) / "report.csv"
    try:
        traces = metrics.read_trace_csv(str(report_path))
    except FileNotFoundError as exc:
        _fail(EXIT_CORPUS, str(exc))
    if not 0.0 < bucket_width <= 1.0:
        _fail(EXIT_CONFIG, f"bucket width must be in (0, 1], got {bucket_width}")
    n = round(1.0 / bucket_width)
    edges = [min(i * bucket_width, 1.0) for i in range(n + 1)]
    try:
        buckets = metrics.utility_vs_similarity_buckets(traces, edges)
    except Exception as exc:
        _fail(EXIT_CORPUS, str(exc))
    out_path = Path(run_dir) / "buckets.csv"
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["similarity_lo", "similarity_hi", "mean_utility", "count"])
        for b in buckets:
            writer.writerow([repr(b.lo), repr(b.hi),
                             "" if b.count == 0 else repr(b.mean_utility), b.count])
    click.echo(f"wrote {len(buckets)} buckets to {out_path}")


@main.command("snapshot-inspect")
@click.argument("path", type=click.Path())
def snapshot_inspect(path) -> None:
    """Dump snapshot header and file digest without loading providers."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        _fail(EXIT_CORPUS, str(exc))
    if len(data) < 12:
        _fail(EXIT_CORPUS, SnapshotFormatError("file shorter than header", len(data)))
    magic = data[:4]
    if magic != b"SSC1":
        _fail(EXIT_CORPUS, SnapshotFormatError("bad magic", 0))
    dim, n_entries = struct.unpack("<II", data[4:12])
    click.echo(f"magic: {magic.decode()}")
    click.echo(f"dim: {dim}")
    click.echo(f"entries: {n_entries}")
    click.echo(f"bytes: {len(data)}")
    click.echo(f"sha256: {hashlib.sha256(data).hexdigest()}")


@main.command()
@click.option("--listen", default="127.0.0.1:8080", show_default=True)
@click.option("--threshold", default=0.8, show_default=True)
@click.option("--budget", default=200, show_default=True)
@click.option("--method", default=Method.CONTEXTUAL_SUMMARY_CACHED.value, show_default=True)
@click.option("--bearer-token", default=None)
@click.option("--snapshot-path", default=None, type=click.Path())
@click.option("--snapshot-interval", default=0.0, show_default=True)
@click.option("--chat-endpoint", default=None)
@click.option("--embed-endpoint", default=None)
@click.option("--embed-dim", default=64, show_default=True)
def serve(listen, threshold, budget, method, bearer_token, snapshot_path,
          snapshot_interval, chat_endpoint, embed_endpoint, embed_dim) -> None:
    """Run the HTTP answering service."""
    try:
        config = ServiceConfig(
            listen_address=listen,
            default_method=Method(method),
            default_threshold=threshold,
            default_budget=budget,
            bearer_token=bearer_token,
            snapshot_path=snapshot_path,
            snapshot_interval=snapshot_interval,
        )
    except ValueError as exc:
        _fail(EXIT_CONFIG, str(exc))
    serve_app(config, providers=_providers(chat_endpoint, embed_endpoint, embed_dim))


if __name__ == "__main__":
    main()
