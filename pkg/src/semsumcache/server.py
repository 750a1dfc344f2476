"""HTTP service exposing cache-augmented answering and cache administration.

One shared cache per process (documented risk: cached summaries are
visible to every client of the service). Responses mirror the trace
fields so scripted sessions are field-comparable with direct pipeline
calls.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass, field
from typing import Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .errors import ProviderProtocolError, ProviderUnavailableError
from .pipeline import Method, MethodConfig, MethodState, ProviderBundle, run_method
from .semcache import CacheConfig, SummaryCache

logger = logging.getLogger("semsumcache.server")


@dataclass
class ServiceConfig:
    listen_address: str = "127.0.0.1:8080"
    cache: CacheConfig = field(default_factory=CacheConfig)
    default_method: Method = Method.CONTEXTUAL_SUMMARY_CACHED
    default_threshold: float = 0.8
    default_budget: int = 200
    bearer_token: Optional[str] = None
    snapshot_path: Optional[str] = None
    snapshot_interval: float = 0.0  # seconds; 0 disables periodic snapshots

    def __post_init__(self):
        if not 0.0 <= self.default_threshold <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {self.default_threshold}")
        if self.snapshot_interval < 0:
            raise ValueError("snapshot interval must be >= 0")


@dataclass
class _ServerDocument:
    doc_id: str
    version: int
    text: str
    title: str = ""


class DocumentBody(BaseModel):
    text: str
    title: str = ""


class AnswerBody(BaseModel):
    doc_id: str
    question: str
    method: Optional[str] = None
    threshold: Optional[float] = None
    budget: Optional[int] = None


class ServiceState:
    """Shared mutable state behind the endpoints."""

    def __init__(self, config: ServiceConfig, providers: ProviderBundle):
        self.config = config
        self.providers = providers
        self.documents: dict[str, _ServerDocument] = {}
        self.cache = SummaryCache(providers.embed.dim, config.cache)
        self._shared_states: dict[Method, MethodState] = {}
        self.lock = threading.RLock()

    def method_state(self, config: MethodConfig) -> MethodState:
        """Per-method stores persist across requests; thresholds/budgets are
        per-request and ride on the config object."""
        shared = self._shared_states.get(config.method)
        if shared is None:
            shared = MethodState.create(config, self.providers.embed.dim)
            if shared.cache is not None:
                shared.cache = self.cache  # single service-wide summary cache
            self._shared_states[config.method] = shared
        return MethodState(
            config=config,
            cache=self.cache if config.method is Method.CONTEXTUAL_SUMMARY_CACHED else None,
            answer_cache=shared.answer_cache,
            noncontextual_summaries=shared.noncontextual_summaries,
        )

    def maybe_snapshot(self) -> None:
        if self.config.snapshot_path:
            self.cache.snapshot(self.config.snapshot_path)


def create_app(config: Optional[ServiceConfig] = None,
               providers: Optional[ProviderBundle] = None,
               restore_snapshot: bool = False) -> FastAPI:
    from .simulator import default_providers

    config = config or ServiceConfig()
    providers = providers or default_providers()
    state = ServiceState(config, providers)
    if restore_snapshot and config.snapshot_path and os.path.exists(config.snapshot_path):
        state.cache = SummaryCache.restore(config.snapshot_path)
    app = FastAPI(title="semsumcache")
    app.state.service = state

    def _authorize(request: Request) -> None:
        if config.bearer_token is None:
            return
        header = request.headers.get("Authorization", "")
        if header != f"Bearer {config.bearer_token}":
            raise HTTPException(status_code=401, detail="invalid bearer token")

    @app.put("/v1/documents/{doc_id}")
    def put_document(doc_id: str, body: DocumentBody, request: Request):
        _authorize(request)
        if not body.text.strip():
            raise HTTPException(status_code=422, detail="document text must be non-empty")
        with state.lock:
            existing = state.documents.get(doc_id)
            if existing is None:
                doc = _ServerDocument(doc_id=doc_id, version=1, text=body.text,
                                      title=body.title)
                state.documents[doc_id] = doc
                state.cache.ensure_document(doc_id, 1)
            else:
                existing.text = body.text
                existing.title = body.title or existing.title
                existing.version += 1
                state.cache.ensure_document(doc_id, existing.version)
                doc = existing
            state.maybe_snapshot()
        return {"doc_id": doc.doc_id, "version": doc.version,
                "word_count": len(doc.text.split())}

    @app.post("/v1/answer")
    def post_answer(body: AnswerBody, request: Request):
        _authorize(request)
        if not body.question.strip():
            raise HTTPException(status_code=422, detail="question must be non-empty")
        with state.lock:
            doc = state.documents.get(body.doc_id)
        if doc is None:
            raise HTTPException(status_code=404, detail=f"unknown document {body.doc_id!r}")
        try:
            method_config = MethodConfig(
                method=Method(body.method) if body.method else config.default_method,
                similarity_threshold=(body.threshold if body.threshold is not None
                                      else config.default_threshold),
                summary_word_budget=body.budget or config.default_budget,
            )
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        with state.lock:
            method_state = state.method_state(method_config)
            try:
                trace = run_method(doc, body.question, state.providers, method_state,
                                   question_id=f"req-{id(body)}")
            except ProviderUnavailableError as exc:
                return JSONResponse(status_code=502,
                                    content={"detail": str(exc), "retryable": True})
            except ProviderProtocolError as exc:
                return JSONResponse(status_code=502,
                                    content={"detail": str(exc), "retryable": False})
            state.maybe_snapshot()
        payload = {
            "answer": trace.answer_text,
            "method": trace.method,
            "cache_hit": trace.cache_hit,
            "similarity": trace.similarity_of_hit,
            "tokens_in": trace.input_tokens,
            "tokens_out": trace.output_tokens,
            "latency_ms": {
                "llm_ms": trace.latency_llm * 1000.0,
                "cache_search_ms": trace.latency_cache_search * 1000.0,
                "encoding_ms": trace.latency_encoding * 1000.0,
                "total_ms": trace.latency_total * 1000.0,
            },
        }
        logger.info("%s", json.dumps({
            "event": "answer", "doc_id": body.doc_id, "method": trace.method,
            "cache_hit": trace.cache_hit, "tokens_in": trace.input_tokens,
            "tokens_out": trace.output_tokens,
        }, sort_keys=True))
        return payload

    @app.get("/v1/cache/stats")
    def cache_stats(request: Request):
        _authorize(request)
        return state.cache.stats().as_dict()

    @app.delete("/v1/cache")
    def flush_cache(request: Request):
        _authorize(request)
        with state.lock:
            removed = state.cache.flush()
            state.maybe_snapshot()
        return {"removed": removed}

    return app


def serve(config: ServiceConfig, providers: Optional[ProviderBundle] = None) -> None:
    """Blocking entry point used by the CLI `serve` subcommand."""
    import uvicorn

    host, _, port = config.listen_address.partition(":")
    app = create_app(config, providers, restore_snapshot=bool(config.snapshot_path))
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8080))
