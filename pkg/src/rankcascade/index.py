"""Inverted index and BM25 retrieval: the cascade's first stage.

Scoring uses the always-positive idf variant
``idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))`` and the term part
``tf / (tf + k1 * (1 - b + b * len/avglen))``. Ties are broken by
ascending document id so runs are reproducible across platforms.
"""

from __future__ import annotations

import math
import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .corpus import Corpus, Query, tokenize
from .errors import IngestError

_SNAPSHOT_MAGIC = b"RKCASIDX"
_SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class Bm25Params:
    """BM25 free parameters. Defaults mirror common Lucene-style toolkits."""

    k1: float = 0.9
    b: float = 0.4

    def __post_init__(self):
        if self.k1 < 0:
            raise ValueError(f"k1 must be non-negative, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError(f"b must be in [0, 1], got {self.b}")


@dataclass
class RankedList:
    """Ordered (doc_id, score) candidates produced by one stage.

    Scores are non-increasing in list order and doc ids are unique.
    """

    entries: list[tuple[str, float]]
    provenance: str

    def doc_ids(self) -> list[str]:
        return [doc_id for doc_id, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


class InvertedIndex:
    """Postings plus corpus statistics backing BM25 scoring.

    Immutable after build; safe for any number of concurrent readers.
    """

    def __init__(
        self,
        postings: dict[str, tuple[np.ndarray, np.ndarray]],
        doc_lengths: np.ndarray,
        doc_ids: list[str],
        params: Bm25Params,
    ):
        self.postings = postings
        self.doc_lengths = doc_lengths.astype(np.int64)
        self.doc_ids = list(doc_ids)
        self.doc_count = len(self.doc_ids)
        if self.doc_count == 0:
            raise IngestError("cannot index an empty corpus")
        self.avg_doc_length = float(self.doc_lengths.sum()) / self.doc_count
        self.default_params = params
        self._ordinal_of = {doc_id: i for i, doc_id in enumerate(self.doc_ids)}
        # Kernels divide by avg length per posting; keep a float view around.
        self._doc_lengths_f = self.doc_lengths.astype(np.float64)

    @property
    def vocab_size(self) -> int:
        return len(self.postings)

    def ordinal(self, doc_id: str) -> int:
        return self._ordinal_of[doc_id]

    def doc_id(self, ordinal: int) -> str:
        return self.doc_ids[ordinal]

    def df(self, term: str) -> int:
        posting = self.postings.get(term)
        return 0 if posting is None else int(posting[0].shape[0])

    def idf(self, term: str) -> float:
        df = self.df(term)
        return math.log(1.0 + (self.doc_count - df + 0.5) / (df + 0.5))


def build_index(
    corpus: Corpus,
    params: Bm25Params | None = None,
    tokenizer: Callable[[str], list[str]] = tokenize,
) -> InvertedIndex:
    """Build an in-memory inverted index over *corpus*.

    Deterministic given corpus order: ordinals follow ingest order and each
    posting list is strictly increasing in ordinal.
    """
    if len(corpus) == 0:
        raise IngestError("cannot index an empty corpus")
    params = params or Bm25Params()
    raw: dict[str, tuple[list[int], list[int]]] = {}
    doc_lengths = np.zeros(len(corpus), dtype=np.int64)
    doc_ids: list[str] = []
    for ordinal, doc in enumerate(corpus):
        doc_ids.append(doc.id)
        tokens = tokenizer(doc.full_text)
        doc_lengths[ordinal] = len(tokens)
        for term, tf in Counter(tokens).items():
            ords, tfs = raw.setdefault(term, ([], []))
            ords.append(ordinal)
            tfs.append(tf)
    postings = {
        term: (np.asarray(ords, dtype=np.int32), np.asarray(tfs, dtype=np.float64))
        for term, (ords, tfs) in raw.items()
    }
    return InvertedIndex(postings, doc_lengths, doc_ids, params)


def _query_term_weights(
    index: InvertedIndex, query_tokens: Sequence[str]
) -> list[tuple[str, float]]:
    """Unique query terms in first-occurrence order, weighted by idf times
    the term's multiplicity in the query."""
    weights = []
    for term, count in Counter(query_tokens).items():
        posting = index.postings.get(term)
        if posting is None:
            continue
        weights.append((term, count * index.idf(term)))
    return weights


def bm25_all_scores(
    index: InvertedIndex, params: Bm25Params, query_tokens: Sequence[str]
) -> np.ndarray:
    """BM25 scores for every document in the corpus, as a dense array."""
    scores = np.zeros(index.doc_count, dtype=np.float64)
    for term, weight in _query_term_weights(index, query_tokens):
        ordinals, tfs = index.postings[term]
        _kernels.accumulate_term(
            ordinals, tfs, index._doc_lengths_f, scores,
            weight, params.k1, params.b, index.avg_doc_length,
        )
    return scores


def bm25_score(
    index: InvertedIndex,
    params: Bm25Params,
    query_tokens: Sequence[str],
    doc_ordinal: int,
) -> float:
    """BM25 score of a single document against tokenized query terms.

    Zero when the document shares no term with the query; repeated query
    terms contribute once per occurrence.
    """
    if not 0 <= doc_ordinal < index.doc_count:
        raise IndexError(f"doc ordinal {doc_ordinal} out of range")
    doc_length = float(index.doc_lengths[doc_ordinal])
    score = 0.0
    for term, weight in _query_term_weights(index, query_tokens):
        ordinals, tfs = index.postings[term]
        pos = int(np.searchsorted(ordinals, doc_ordinal))
        if pos >= ordinals.shape[0] or ordinals[pos] != doc_ordinal:
            continue
        tf = float(tfs[pos])
        denom = tf + params.k1 * (1.0 - params.b + params.b * (doc_length / index.avg_doc_length))
        score += weight * (tf / denom)
    return score


def bm25_topk(
    index: InvertedIndex, params: Bm25Params, query: Query, k: int
) -> RankedList:
    """Top-k BM25 retrieval, ordered by (score desc, doc_id asc).

    Documents scoring exactly zero are excluded; if fewer than *k* documents
    score above zero the list is short rather than padded.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scores = bm25_all_scores(index, params, tokenize(query.text))
    positive = np.flatnonzero(scores > 0.0)
    if positive.size == 0:
        return RankedList([], "bm25")
    if k < positive.size:
        sub = scores[positive]
        top = np.argpartition(sub, positive.size - k)[positive.size - k:]
        threshold = sub[top].min()
        candidates = positive[sub >= threshold]
    else:
        candidates = positive
    entries = sorted(
        ((index.doc_ids[o], float(scores[o])) for o in candidates),
        key=lambda entry: (-entry[1], entry[0]),
    )[:k]
    return RankedList(entries, "bm25")


# --- binary snapshot -------------------------------------------------------
#
# Little-endian layout (full field table in docs/snapshot-format.md):
#   magic "RKCASIDX" | u32 version | f64 k1 | f64 b | u64 doc_count
#   | f64 avg_doc_length | doc-id table | doc-length block | term blocks.


def save_index(index: InvertedIndex, path: str | Path) -> None:
    """Write a deterministic binary snapshot (terms sorted lexicographically)."""
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_SNAPSHOT_MAGIC)
        fh.write(struct.pack("<I", _SNAPSHOT_VERSION))
        fh.write(struct.pack("<dd", index.default_params.k1, index.default_params.b))
        fh.write(struct.pack("<Q", index.doc_count))
        fh.write(struct.pack("<d", index.avg_doc_length))
        for doc_id in index.doc_ids:
            encoded = doc_id.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
        fh.write(index.doc_lengths.astype("<u4").tobytes())
        fh.write(struct.pack("<Q", len(index.postings)))
        for term in sorted(index.postings):
            ordinals, tfs = index.postings[term]
            encoded = term.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<Q", ordinals.shape[0]))
            fh.write(ordinals.astype("<u4").tobytes())
            fh.write(tfs.astype("<u4").tobytes())


class _Reader:
    def __init__(self, path: Path):
        self._data = path.read_bytes()
        self._pos = 0
        self._path = path

    def take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise IngestError(f"{self._path}: truncated snapshot")
        chunk = self._data[self._pos:self._pos + n]
        self._pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_index(path: str | Path) -> InvertedIndex:
    """Reload a snapshot written by :func:`save_index`."""
    path = Path(path)
    reader = _Reader(path)
    if reader.take(len(_SNAPSHOT_MAGIC)) != _SNAPSHOT_MAGIC:
        raise IngestError(f"{path}: not an index snapshot (bad magic)")
    (version,) = reader.unpack("<I")
    if version != _SNAPSHOT_VERSION:
        raise IngestError(f"{path}: unsupported snapshot version {version}")
    k1, b = reader.unpack("<dd")
    (doc_count,) = reader.unpack("<Q")
    (avg_doc_length,) = reader.unpack("<d")
    doc_ids = []
    for _ in range(doc_count):
        (length,) = reader.unpack("<I")
        doc_ids.append(reader.take(length).decode("utf-8"))
    doc_lengths = np.frombuffer(reader.take(4 * doc_count), dtype="<u4").astype(np.int64)
    (term_count,) = reader.unpack("<Q")
    postings: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for _ in range(term_count):
        (length,) = reader.unpack("<I")
        term = reader.take(length).decode("utf-8")
        (n,) = reader.unpack("<Q")
        ordinals = np.frombuffer(reader.take(4 * n), dtype="<u4").astype(np.int32)
        tfs = np.frombuffer(reader.take(4 * n), dtype="<u4").astype(np.float64)
        postings[term] = (ordinals, tfs)
    index = InvertedIndex(postings, doc_lengths, doc_ids, Bm25Params(k1=k1, b=b))
    if abs(index.avg_doc_length - avg_doc_length) > 1e-9 * max(1.0, avg_doc_length):
        raise IngestError(f"{path}: inconsistent average document length")
    return index
