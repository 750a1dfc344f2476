"""Semantic caching of query-aware document summaries for multi-step QA."""

from .pipeline import AnswerTrace, Method, MethodConfig
from .semcache import CacheConfig, CacheEntry, SummaryCache
from .semindex import Match, SemanticIndex
from .vectorspace import EmbeddingVector, cosine_similarity, normalize

__all__ = [
    "AnswerTrace",
    "CacheConfig",
    "CacheEntry",
    "EmbeddingVector",
    "Match",
    "Method",
    "MethodConfig",
    "SemanticIndex",
    "SummaryCache",
    "cosine_similarity",
    "normalize",
]

__version__ = "0.1.0"
