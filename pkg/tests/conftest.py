"""Shared fixtures and independent oracle implementations.

The oracle helpers deliberately avoid the package's own code paths
(pure-python arithmetic, dict-based hashing) so differential tests mean
something.
"""

import hashlib
import math
import re

import pytest

from semsumcache.pipeline import ProviderBundle
from semsumcache.providers import HashingEmbedder, MockChatProvider


def oracle_cosine(a, b):
    """Plain-python cosine similarity, no numpy."""
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    return dot / (na * nb)


def oracle_hash_embed(text, dim=64):
    """Independent reimplementation of the feature-hash embedding."""
    counts = {}
    for token in re.findall(r"[a-z0-9]+", text.lower()):
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        bucket = int.from_bytes(digest, "little") % dim
        counts[bucket] = counts.get(bucket, 0) + 1
    norm = math.sqrt(sum(v * v for v in counts.values()))
    return [counts.get(i, 0) / norm if norm else 0.0 for i in range(dim)]


@pytest.fixture
def providers():
    return ProviderBundle(chat=MockChatProvider(), embed=HashingEmbedder())


# One human-readable pass/fail line per acceptance criterion, echoed in the
# terminal summary regardless of capture settings.
ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(line)
