"""Scorer backends for the re-ranking stages.

Two scoring contracts exist: pointwise scorers map (query, document) to an
unbounded scalar similarity, pairwise scorers map (query, document A,
document B) to the probability that A fits the query better. A pairwise
stage aggregates all ordered-pair probabilities into per-document
similarities.

Every concrete scorer counts the scalar inferences it performs in
``.inferences`` so stage telemetry reflects actual backend work, not an
assumed formula.
"""

from __future__ import annotations

import hashlib
import math
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import Document, Qrels, Query, token_spans, tokenize

# Latent synthetic scores mix the relevance grade with hash noise spanning
# [0, NOISE_SPAN): at quality q the noise amplitude is (1-q) * NOISE_SPAN,
# so rank errors against adjacent grades vanish once q >= 0.75.
NOISE_SPAN = 3.0
PAIR_SHARPNESS = 4.0


class _CountsInferences:
    """Thread-safe inference tally shared by all concrete scorers."""

    def __init__(self):
        self._tally_lock = threading.Lock()
        self._inferences = 0

    def _count(self, n: int) -> None:
        with self._tally_lock:
            self._inferences += n

    @property
    def inferences(self) -> int:
        return self._inferences


class PointwiseScorer(ABC):
    """Scores one document at a time against the query."""

    name: str
    max_input_tokens: int

    @abstractmethod
    def score_documents(self, query: Query, docs: Sequence[Document]) -> list[float]:
        """One score per document, order-aligned with the input."""

    @property
    def inferences(self) -> int:  # overridden by _CountsInferences subclasses
        return 0

    def clone(self) -> "PointwiseScorer":
        """Independent instance for a worker thread; stateful backends override."""
        return self


class PairwiseScorer(ABC):
    """Scores ordered document pairs: p in [0, 1] that the first document
    of the pair fits the query better than the second."""

    name: str
    max_input_tokens: int

    @abstractmethod
    def score_pairs(
        self, query: Query, pairs: Sequence[tuple[Document, Document]]
    ) -> list[float]:
        """One probability per ordered pair, order-aligned with the input."""

    @property
    def inferences(self) -> int:
        return 0

    def clone(self) -> "PairwiseScorer":
        """Independent instance for a worker thread; stateful backends override."""
        return self


def _unit_noise(seed: int, query_id: str, doc_id: str) -> float:
    digest = hashlib.blake2b(
        f"{seed}:{query_id}:{doc_id}".encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big") / 2**64


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


class SyntheticScorer(_CountsInferences, PointwiseScorer, PairwiseScorer):
    """Deterministic test backend graded by a qrels oracle.

    The latent score of a document is ``quality * grade + (1 - quality) *
    NOISE_SPAN * u`` with ``u`` a hash-derived uniform in [0, 1) keyed by
    (seed, query id, doc id). ``quality=1.0`` reproduces the oracle grades
    exactly; lower quality mixes in rank noise. Pair probabilities squash
    the latent difference through a sigmoid, so pairwise and pointwise
    rankings agree for the same quality and seed.
    """

    def __init__(
        self,
        quality: float,
        seed: int,
        oracle: Qrels,
        name: str | None = None,
        max_input_tokens: int = 512,
    ):
        super().__init__()
        if not 0.0 <= quality <= 1.0:
            raise ValueError(f"quality must be in [0, 1], got {quality}")
        self.quality = quality
        self.seed = seed
        self.oracle = oracle
        self.name = name or f"synthetic(q={quality}, seed={seed})"
        self.max_input_tokens = max_input_tokens

    def latent(self, query: Query, doc: Document) -> float:
        grade = self.oracle.grade(query.id, doc.id)
        noise = _unit_noise(self.seed, query.id, doc.id)
        return self.quality * grade + (1.0 - self.quality) * NOISE_SPAN * noise

    def score_documents(self, query: Query, docs: Sequence[Document]) -> list[float]:
        self._count(len(docs))
        return [self.latent(query, doc) for doc in docs]

    def score_pairs(
        self, query: Query, pairs: Sequence[tuple[Document, Document]]
    ) -> list[float]:
        self._count(len(pairs))
        return [
            _sigmoid(PAIR_SHARPNESS * (self.latent(query, a) - self.latent(query, b)))
            for a, b in pairs
        ]

    def clone(self) -> "SyntheticScorer":
        return SyntheticScorer(
            self.quality, self.seed, self.oracle, self.name, self.max_input_tokens
        )


class EnsembleScorer(PointwiseScorer):
    """Arithmetic mean of several pointwise scorers.

    All-or-nothing: a failing member fails the whole call, never a partial
    average. Inference counts sum over members.
    """

    def __init__(self, members: Sequence[PointwiseScorer], name: str | None = None):
        if not members:
            raise ValueError("ensemble needs at least one member")
        self.members = list(members)
        self.name = name or f"ensemble({', '.join(m.name for m in self.members)})"
        self.max_input_tokens = min(m.max_input_tokens for m in self.members)

    def score_documents(self, query: Query, docs: Sequence[Document]) -> list[float]:
        return score_ensemble(self.members, query, docs)

    @property
    def inferences(self) -> int:
        return sum(m.inferences for m in self.members)

    def clone(self) -> "EnsembleScorer":
        return EnsembleScorer([m.clone() for m in self.members], self.name)


def score_pointwise(
    scorer: PointwiseScorer, query: Query, docs: Sequence[Document]
) -> list[float]:
    """Score each document against the query; order-aligned raw scores."""
    docs = list(docs)
    if not docs:
        raise ValueError("score_pointwise requires at least one document")
    scores = scorer.score_documents(query, docs)
    if len(scores) != len(docs):
        raise ValueError(
            f"scorer {scorer.name!r} returned {len(scores)} scores for {len(docs)} documents"
        )
    return [float(s) for s in scores]


def score_ensemble(
    members: Sequence[PointwiseScorer], query: Query, docs: Sequence[Document]
) -> list[float]:
    """Elementwise arithmetic mean of the members' score lists."""
    members = list(members)
    if not members:
        raise ValueError("score_ensemble requires at least one member")
    docs = list(docs)
    if not docs:
        raise ValueError("score_ensemble requires at least one document")
    score_lists = [score_pointwise(m, query, docs) for m in members]
    return [sum(column) / len(members) for column in zip(*score_lists, strict=True)]


@dataclass
class PairwiseScoreMatrix:
    """All ordered-pair probabilities for n documents.

    ``p[i, j]`` is the probability that document i beats document j; the
    diagonal is never read. Off-diagonal entries must lie in [0, 1].
    """

    n: int
    p: np.ndarray

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"pairwise matrix needs n >= 2, got {self.n}")
        if self.p.shape != (self.n, self.n):
            raise ValueError(f"expected shape {(self.n, self.n)}, got {self.p.shape}")
        off_diag = ~np.eye(self.n, dtype=bool)
        values = self.p[off_diag]
        if np.any(values < 0.0) or np.any(values > 1.0):
            raise ValueError("off-diagonal pair probabilities must be in [0, 1]")

    @classmethod
    def from_flat(cls, n: int, flat: Sequence[float]) -> "PairwiseScoreMatrix":
        """Build from probabilities listed in ordered_pairs(n) order."""
        if len(flat) != n * (n - 1):
            raise ValueError(f"expected {n * (n - 1)} pair scores, got {len(flat)}")
        p = np.zeros((n, n), dtype=np.float64)
        for (i, j), value in zip(ordered_pairs(n), flat, strict=True):
            p[i, j] = value
        return cls(n=n, p=p)


def ordered_pairs(n: int) -> list[tuple[int, int]]:
    """All ordered index pairs (i, j), i != j: exactly n*(n-1) of them."""
    return [(i, j) for i in range(n) for j in range(n) if i != j]


def aggregate_pairwise(matrix: PairwiseScoreMatrix) -> list[float]:
    """Per-document similarity: sum over opponents j of p[i,j] + (1 - p[j,i]).

    The similarities always total n*(n-1): each ordered pair contributes one
    unit of preference mass, split between winner and loser.
    """
    q = matrix.p.copy()
    np.fill_diagonal(q, 0.0)
    sims = q.sum(axis=1) + (matrix.n - 1) - q.sum(axis=0)
    return [float(s) for s in sims]


def score_pairwise_aggregate(
    scorer: PairwiseScorer, query: Query, docs: Sequence[Document]
) -> list[float]:
    """Score all n*(n-1) ordered pairs and aggregate into per-document
    similarities, order-aligned with the input."""
    docs = list(docs)
    n = len(docs)
    if n < 2:
        raise ValueError(f"pairwise aggregation needs at least 2 documents, got {n}")
    pairs = [(docs[i], docs[j]) for i, j in ordered_pairs(n)]
    flat = scorer.score_pairs(query, pairs)
    if len(flat) != len(pairs):
        raise ValueError(
            f"scorer {scorer.name!r} returned {len(flat)} pair scores for {len(pairs)} pairs"
        )
    matrix = PairwiseScoreMatrix.from_flat(n, [float(p) for p in flat])
    return aggregate_pairwise(matrix)


# --- payload truncation ----------------------------------------------------
#
# The engine truncates scorer payloads with its word tokenizer as a proxy;
# model hosts re-truncate with true subword counts. Tail cutting is
# idempotent, so the double cut is harmless.


def _keep_prefix(text: str, keep: int) -> str:
    if keep <= 0:
        return ""
    spans = token_spans(text)
    if len(spans) <= keep:
        return text
    return text[: spans[keep - 1][1]]


def truncate_for_pointwise(query_text: str, doc_text: str, max_tokens: int) -> str:
    """Cut the document tail so query plus document fit in ``max_tokens``."""
    budget = max_tokens - len(tokenize(query_text))
    return _keep_prefix(doc_text, budget)


def truncate_for_pair(
    query_text: str, a_text: str, b_text: str, max_tokens: int
) -> tuple[str, str]:
    """Cut both documents of a pair by the same number of tokens (rounded
    up) so the query and both documents fit in ``max_tokens``."""
    a_len = len(tokenize(a_text))
    b_len = len(tokenize(b_text))
    overflow = len(tokenize(query_text)) + a_len + b_len - max_tokens
    if overflow <= 0:
        return a_text, b_text
    cut = -(-overflow // 2)  # ceil: equal cuts, rounding up
    keep_a = a_len - cut
    keep_b = b_len - cut
    if keep_a < 0:  # one document shorter than the cut: push the rest onto the other
        keep_b += keep_a
        keep_a = 0
    if keep_b < 0:
        keep_a = max(0, keep_a + keep_b)
        keep_b = 0
    return _keep_prefix(a_text, keep_a), _keep_prefix(b_text, keep_b)
