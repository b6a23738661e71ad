"""Scorers the sidecar can host: a deterministic fake and real checkpoints.

Both expose the same surface: ``score_documents(query, docs)`` returns one
scalar per document text, ``score_pairs(query, pairs)`` returns one
probability per ordered pair, and ``max_input_tokens`` is the limit the
handshake advertises. Each scorer re-truncates its inputs with its own
tokenizer before scoring (document tail for pointwise, equal tail cuts for
a pair), so oversized and pre-truncated inputs score identically.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

PAIR_SHARPNESS = 4.0


class LoadError(Exception):
    """A checkpoint that cannot be loaded; fatal at startup."""


@dataclass(frozen=True)
class ModelBinding:
    """What to host and how to announce it."""

    model: str
    mode: str = "both"
    max_input_tokens: int = 512
    device: str = "cpu"

    def __post_init__(self):
        if self.mode not in ("pointwise", "pairwise", "both"):
            raise ValueError(f"mode must be pointwise, pairwise, or both, got {self.mode!r}")
        if self.max_input_tokens < 1:
            raise ValueError(f"max_input_tokens must be >= 1, got {self.max_input_tokens}")


def doc_budget(query_tokens: int, limit: int) -> int:
    """Tokens left for a document once the query has claimed its share."""
    return max(limit - query_tokens, 0)


def pair_budgets(query_tokens: int, a_tokens: int, b_tokens: int, limit: int) -> tuple[int, int]:
    """Tokens to keep of each pair member: equal tail cuts, rounded up, with
    the remainder shifted onto the longer member when one runs out."""
    overflow = query_tokens + a_tokens + b_tokens - limit
    if overflow <= 0:
        return a_tokens, b_tokens
    cut = -(-overflow // 2)
    keep_a = a_tokens - cut
    keep_b = b_tokens - cut
    if keep_a < 0:
        keep_b += keep_a
        keep_a = 0
    if keep_b < 0:
        keep_a = max(0, keep_a + keep_b)
        keep_b = 0
    return keep_a, keep_b


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


class FakeScorer:
    """Deterministic hash-based scores: full protocol behavior, no model.

    Tokenization is whitespace words. Scores depend only on the seed, the
    query, and the truncated document text, so replays are reproducible
    byte-for-byte across hosts.
    """

    def __init__(self, binding: ModelBinding, seed: int = 0):
        self.binding = binding
        self.seed = seed
        self.max_input_tokens = binding.max_input_tokens

    def _unit(self, query: str, payload: str) -> float:
        material = f"{self.seed}\x1f{query}\x1f{payload}".encode("utf-8")
        digest = hashlib.blake2b(material, digest_size=8, person=b"fake-score").digest()
        return int.from_bytes(digest, "big") / 2.0**64

    def truncate_doc(self, query: str, doc: str) -> str:
        budget = doc_budget(len(query.split()), self.max_input_tokens)
        return " ".join(doc.split()[:budget])

    def truncate_pair(self, query: str, a: str, b: str) -> tuple[str, str]:
        a_words, b_words = a.split(), b.split()
        keep_a, keep_b = pair_budgets(
            len(query.split()), len(a_words), len(b_words), self.max_input_tokens
        )
        return " ".join(a_words[:keep_a]), " ".join(b_words[:keep_b])

    def score_documents(self, query: str, docs: list[str]) -> list[float]:
        return [4.0 * self._unit(query, self.truncate_doc(query, doc)) - 2.0 for doc in docs]

    def score_pairs(self, query: str, pairs: list[tuple[str, str]]) -> list[float]:
        probabilities = []
        for a, b in pairs:
            a_cut, b_cut = self.truncate_pair(query, a, b)
            gap = self._unit(query, a_cut) - self._unit(query, b_cut)
            probabilities.append(_sigmoid(PAIR_SHARPNESS * gap))
        return probabilities


class CrossEncoderScorer:
    """Hosts a cross-encoder checkpoint (query-document classification head).

    Pointwise requests return the head's scalar per document. Pairwise
    requests score both members pointwise and squash the difference through
    a sigmoid, standing in for a natively pairwise head. Truncation uses
    the checkpoint's own subword tokenizer; the advertised limit is clamped
    to what the tokenizer actually supports.
    """

    # one [CLS] plus two [SEP] slots in a two-segment encoding
    _SPECIAL_SLOTS = 3

    def __init__(self, binding: ModelBinding):
        try:
            from sentence_transformers import CrossEncoder
        except ImportError as exc:
            raise LoadError(f"sentence-transformers is not installed: {exc}") from None
        try:
            self._model = CrossEncoder(binding.model, device=binding.device)
        except Exception as exc:
            raise LoadError(f"cannot load checkpoint {binding.model!r}: {exc}") from None
        self.binding = binding
        self._tokenizer = self._model.tokenizer
        # Loaded without a max_length override so these report the
        # checkpoint's own limits, not ours echoed back.
        limits = [binding.max_input_tokens]
        tokenizer_limit = getattr(self._tokenizer, "model_max_length", None)
        if isinstance(tokenizer_limit, int) and 0 < tokenizer_limit < 1_000_000:
            limits.append(tokenizer_limit)
        config = getattr(getattr(self._model, "model", None), "config", None)
        positions = getattr(config, "max_position_embeddings", None)
        if isinstance(positions, int) and positions > 0:
            limits.append(positions)
        self.max_input_tokens = min(limits)
        if hasattr(self._model, "max_seq_length"):
            self._model.max_seq_length = self.max_input_tokens
        else:
            self._model.max_length = self.max_input_tokens

    def _ids(self, text: str) -> list[int]:
        return self._tokenizer.encode(text, add_special_tokens=False)

    def _detok(self, ids: list[int]) -> str:
        return self._tokenizer.decode(ids, skip_special_tokens=True)

    def truncate_doc(self, query: str, doc: str) -> str:
        budget = doc_budget(
            len(self._ids(query)) + self._SPECIAL_SLOTS, self.max_input_tokens
        )
        ids = self._ids(doc)
        return doc if len(ids) <= budget else self._detok(ids[:budget])

    def truncate_pair(self, query: str, a: str, b: str) -> tuple[str, str]:
        a_ids, b_ids = self._ids(a), self._ids(b)
        keep_a, keep_b = pair_budgets(
            len(self._ids(query)) + self._SPECIAL_SLOTS,
            len(a_ids),
            len(b_ids),
            self.max_input_tokens,
        )
        a_out = a if keep_a >= len(a_ids) else self._detok(a_ids[:keep_a])
        b_out = b if keep_b >= len(b_ids) else self._detok(b_ids[:keep_b])
        return a_out, b_out

    def _predict(self, texts: list[tuple[str, str]]) -> list[float]:
        values = self._model.predict(texts, convert_to_numpy=True, show_progress_bar=False)
        return [float(v) for v in values]

    def score_documents(self, query: str, docs: list[str]) -> list[float]:
        if not docs:
            return []
        return self._predict([(query, self.truncate_doc(query, doc)) for doc in docs])

    def score_pairs(self, query: str, pairs: list[tuple[str, str]]) -> list[float]:
        if not pairs:
            return []
        texts = []
        for a, b in pairs:
            a_cut, b_cut = self.truncate_pair(query, a, b)
            texts.append((query, a_cut))
            texts.append((query, b_cut))
        values = self._predict(texts)
        return [
            _sigmoid(values[i] - values[i + 1]) for i in range(0, len(values), 2)
        ]
