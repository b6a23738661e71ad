"""NDCG@k evaluation, per-stage cost accounting, and the final hand-off sweep.

``evaluate`` runs a cascade over a query set and reports mean NDCG@k, mean
wall-clock search time (one discarded warmup query first), and mean scorer
calls per stage. ``sweep_a2`` repeats the evaluation while resizing how many
documents the last stage re-ranks, tracing the accuracy/cost trade-off.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .corpus import Qrels, QuerySet
from .errors import ConfigError
from .index import RankedList
from .pipeline import Cascade, CascadeResult, PipelineConfig, with_a2


def ndcg_at_k(ranking: RankedList, qrels: Qrels, query_id: str, k: int) -> float:
    """Normalized DCG over the top k of the ranking.

    Gain is 2^grade - 1 with a log2(rank + 1) discount; the normalizer is
    the DCG of the grade-sorted ideal prefix. Zero when the query has no
    positively graded document.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    grades = qrels.for_query(query_id)
    ideal = sorted((g for g in grades.values() if g > 0), reverse=True)[:k]
    if not ideal:
        return 0.0
    idcg = sum((2.0**g - 1.0) / math.log2(r + 1) for r, g in enumerate(ideal, start=1))
    dcg = 0.0
    for r, (doc_id, _) in enumerate(ranking, start=1):
        if r > k:
            break
        grade = grades.get(doc_id, 0)
        if grade > 0:
            dcg += (2.0**grade - 1.0) / math.log2(r + 1)
    return dcg / idcg


def config_digest(config: PipelineConfig) -> str:
    """Digest of the canonical config JSON; timing never feeds the digest."""
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class EvalReport:
    """Aggregated quality and cost of one cascade over one query set."""

    k: int
    per_query_ndcg: dict[str, float]
    mean_ndcg: float
    mean_search_time: float
    mean_scorer_calls_per_stage: list[float]
    mean_scorer_calls: float
    stage_labels: list[str]
    evaluated_queries: int
    skipped_queries: list[str]
    config_digest: str
    results: list[CascadeResult] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "mean_ndcg": self.mean_ndcg,
            "evaluated_queries": self.evaluated_queries,
            "skipped_queries": self.skipped_queries,
            "per_query_ndcg": dict(sorted(self.per_query_ndcg.items())),
            "stage_labels": self.stage_labels,
            "mean_scorer_calls_per_stage": self.mean_scorer_calls_per_stage,
            "mean_scorer_calls": self.mean_scorer_calls,
            "mean_search_time_ms": self.mean_search_time * 1000.0,
            "config_digest": self.config_digest,
        }

    def format_table(self) -> str:
        lines = [
            f"queries evaluated  {self.evaluated_queries}"
            + (f"  (skipped without positive judgments: {len(self.skipped_queries)})"
               if self.skipped_queries else ""),
            f"mean NDCG@{self.k}       {self.mean_ndcg:.4f}",
            f"mean search time   {self.mean_search_time * 1000.0:.2f} ms/query",
            f"mean scorer calls  {self.mean_scorer_calls:.1f}/query",
            "per-stage mean calls:",
        ]
        for label, calls in zip(self.stage_labels, self.mean_scorer_calls_per_stage):
            lines.append(f"  {label:<24} {calls:.1f}")
        lines.append(f"config digest      {self.config_digest[:16]}")
        return "\n".join(lines)


def _run_all(
    cascade: Cascade, queries: Sequence, workers: int
) -> tuple[dict[str, CascadeResult], dict[str, float]]:
    """Cascade results and wall times per query id, warmup already done."""
    results: dict[str, CascadeResult] = {}
    wall: dict[str, float] = {}

    def run_chunk(runner: Cascade, chunk) -> None:
        for query in chunk:
            started = time.perf_counter()
            result = runner.run(query)
            wall[query.id] = time.perf_counter() - started
            results[query.id] = result

    if workers <= 1:
        run_chunk(cascade, queries)
        return results, wall
    chunks = [list(queries)[i::workers] for i in range(workers)]
    runners = [cascade.for_worker() for _ in chunks]
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(run_chunk, runner, chunk)
            for runner, chunk in zip(runners, chunks)
            if chunk
        ]
        for future in futures:
            future.result()
    return results, wall


def evaluate(
    cascade: Cascade,
    queries: QuerySet,
    qrels: Qrels,
    k: int = 10,
    workers: int = 1,
) -> EvalReport:
    """Run every query through the cascade and aggregate NDCG@k and costs.

    Queries without a positively graded judgment are still searched (their
    cost counts) but excluded from the NDCG mean, trec_eval style. One
    warmup query runs first and is discarded from every aggregate.
    """
    query_list = list(queries)
    if not query_list:
        raise ValueError("cannot evaluate an empty query set")
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    cascade.run(query_list[0])  # warmup: JIT, lazy caches, connection spin-up
    results, wall = _run_all(cascade, query_list, workers)

    per_query: dict[str, float] = {}
    skipped: list[str] = []
    for query in query_list:
        if qrels.has_positive(query.id):
            per_query[query.id] = ndcg_at_k(results[query.id].final, qrels, query.id, k)
        else:
            skipped.append(query.id)
    if not per_query:
        raise ValueError("no query has a positively graded judgment")

    n = len(query_list)
    stage_count = max(len(r.per_stage) for r in results.values())
    labels: list[str] = []
    per_stage_means: list[float] = []
    for i in range(stage_count):
        rows = [r.per_stage[i] for r in results.values() if len(r.per_stage) > i]
        labels.append(rows[0].stage)
        per_stage_means.append(sum(t.scorer_calls for t in rows) / n)

    ordered_results = [results[q.id] for q in query_list]
    return EvalReport(
        k=k,
        per_query_ndcg=per_query,
        mean_ndcg=sum(per_query.values()) / len(per_query),
        mean_search_time=sum(wall.values()) / n,
        mean_scorer_calls_per_stage=per_stage_means,
        mean_scorer_calls=sum(r.scorer_calls for r in ordered_results) / n,
        stage_labels=labels,
        evaluated_queries=len(per_query),
        skipped_queries=skipped,
        config_digest=config_digest(cascade.config),
        results=ordered_results,
    )


@dataclass
class SweepPoint:
    """One sweep sample: hand-off size versus quality and cost."""

    a2: int
    mean_ndcg: float
    mean_search_time: float
    mean_scorer_calls: float


def sweep_a2(
    cascade: Cascade,
    queries: QuerySet,
    qrels: Qrels,
    a2_values: Sequence[int],
    k: int = 10,
    workers: int = 1,
) -> list[SweepPoint]:
    """Evaluate the cascade at each final hand-off size, identical queries.

    Every value must fit inside the first-stage cutoff; duplicates are
    rejected so each point is a distinct sample.
    """
    if len(set(a2_values)) != len(a2_values):
        raise ConfigError("sweep values must be distinct")
    a1 = cascade.config.stages[0].cutoff
    bad = [a2 for a2 in a2_values if a2 < 0 or a2 > a1]
    if bad:
        raise ConfigError(f"sweep values out of range [0, {a1}]: {bad}")
    points = []
    for a2 in a2_values:
        resized = Cascade(
            cascade.index,
            cascade.corpus,
            with_a2(cascade.config, a2),
            cascade.scorers,
            cascade.fallback_on_error,
        )
        report = evaluate(resized, queries, qrels, k=k, workers=workers)
        points.append(
            SweepPoint(
                a2=a2,
                mean_ndcg=report.mean_ndcg,
                mean_search_time=report.mean_search_time,
                mean_scorer_calls=report.mean_scorer_calls,
            )
        )
    return points


def write_sweep_csv(points: Sequence[SweepPoint], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write("a2,mean_ndcg,mean_search_time_ms,mean_scorer_calls\n")
        for p in points:
            fh.write(
                f"{p.a2},{p.mean_ndcg:.6f},{p.mean_search_time * 1000.0:.3f},"
                f"{p.mean_scorer_calls:.2f}\n"
            )


def write_report(report: EvalReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=False) + "\n", encoding="utf-8"
    )
