"""Seeded synthetic benchmark: corpus, queries, and judgments in one piece.

The generator plants one topic per query. Relevant documents mention the
topic terms sparsely; a band of distractors repeats them more often, so
lexical retrieval pulls relevant documents into its candidate list but
ranks several distractors above them. That leaves deliberate headroom for
the re-scoring stages. A small pool of common words appears in every
document and every query, which keeps lexical scores positive corpus-wide
and stage-0 candidate lists full.
"""

from __future__ import annotations

import random
from pathlib import Path

from .corpus import Corpus, Qrels, Query, QuerySet, make_document, write_corpus, write_qrels, write_queries
from .errors import ConfigError

_COMMON_WORDS = 8
_TOPIC_WORDS = 6
_DISTRACTORS_PER_QUERY = 10


def gen_benchmark(
    seed: int,
    n_docs: int = 1000,
    n_queries: int = 50,
    vocab_size: int = 2000,
    relevance_per_query: int = 5,
) -> tuple[Corpus, QuerySet, Qrels]:
    """Deterministic (corpus, queries, qrels) triple from one seed.

    Every query receives ``relevance_per_query`` relevant documents (the
    first graded 2, the rest 1) plus unjudged distractors. Document order
    is shuffled so ids carry no relevance signal.
    """
    if vocab_size < 10:
        raise ConfigError(f"vocab_size must be >= 10, got {vocab_size}")
    if n_docs < 10:
        raise ConfigError(f"n_docs must be >= 10, got {n_docs}")
    if n_queries < 1:
        raise ConfigError(f"n_queries must be >= 1, got {n_queries}")
    if relevance_per_query < 1:
        raise ConfigError(f"relevance_per_query must be >= 1, got {relevance_per_query}")
    special = n_queries * (relevance_per_query + _DISTRACTORS_PER_QUERY)
    if special > n_docs:
        raise ConfigError(
            f"{n_docs} docs cannot host {special} relevant+distractor slots;"
            " lower n_queries or relevance_per_query"
        )

    rng = random.Random(seed)
    width = max(4, len(str(vocab_size)))
    vocab = [f"w{i:0{width}d}" for i in range(vocab_size)]
    common = vocab[:_COMMON_WORDS]
    content = vocab[_COMMON_WORDS:]

    def filler_body(extra: list[str]) -> str:
        words = list(extra)
        words += rng.choices(content, k=rng.randint(30, 60) - len(words))
        # common[0] is universal so every query matches every document
        words += [common[0]] + rng.sample(common[1:], k=2)
        rng.shuffle(words)
        return " ".join(words)

    topics = [rng.sample(content, _TOPIC_WORDS) for _ in range(n_queries)]

    bodies: list[str] = []
    qrels = Qrels()
    query_of_doc: list[tuple[int, bool]] = []  # (query idx, relevant?) per planted doc
    for qi, topic in enumerate(topics):
        for r in range(relevance_per_query):
            # sparse topic mentions: present, but lexically understated
            mentions = []
            for term in rng.sample(topic, 3):
                mentions += [term] * rng.randint(1, 2)
            bodies.append(filler_body(mentions))
            query_of_doc.append((qi, True))
        for _ in range(_DISTRACTORS_PER_QUERY):
            # dense topic mentions without relevance: lexical bait
            mentions = []
            for term in rng.sample(topic, 3):
                mentions += [term] * rng.randint(3, 5)
            bodies.append(filler_body(mentions))
            query_of_doc.append((qi, False))
    while len(bodies) < n_docs:
        bodies.append(filler_body([]))
        query_of_doc.append((-1, False))

    order = list(range(n_docs))
    rng.shuffle(order)
    id_width = len(str(n_docs))
    documents = []
    relevant_ids: dict[int, list[str]] = {qi: [] for qi in range(n_queries)}
    for position, source in enumerate(order):
        doc_id = f"d{position:0{id_width}d}"
        title = " ".join(rng.sample(content, rng.randint(0, 3)))
        documents.append(make_document(doc_id, title, bodies[source]))
        qi, relevant = query_of_doc[source]
        if relevant:
            relevant_ids[qi].append(doc_id)

    queries = []
    q_width = len(str(n_queries))
    for qi, topic in enumerate(topics):
        query_id = f"q{qi:0{q_width}d}"
        terms = rng.sample(topic, 4) + [common[0]]
        queries.append(Query(id=query_id, text=" ".join(terms)))
        for j, doc_id in enumerate(sorted(relevant_ids[qi])):
            qrels.set(query_id, doc_id, 2 if j == 0 else 1)

    return Corpus(documents), QuerySet(queries), qrels


def write_benchmark(
    out_dir: str | Path,
    corpus: Corpus,
    queries: QuerySet,
    qrels: Qrels,
) -> dict[str, Path]:
    """Write the triple in the loaders' file layout; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "corpus": out / "corpus.jsonl",
        "queries": out / "queries.jsonl",
        "qrels": out / "qrels.tsv",
    }
    write_corpus(corpus, paths["corpus"])
    write_queries(queries, paths["queries"])
    write_qrels(qrels, paths["qrels"])
    return paths
