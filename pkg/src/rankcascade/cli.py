"""Command-line driver: index, search, evaluate, sweep, gen-benchmark,
serve-check.

Exit codes: 0 success, 1 data error (corpora, queries, judgments,
snapshots), 2 configuration error (also argparse usage errors), 3 scorer
backend error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .corpus import Query, load_corpus, load_qrels, load_queries, qrels_coverage
from .errors import ConfigError, IngestError, ScorerBackendError
from .evaluation import evaluate, sweep_a2, write_report, write_sweep_csv
from .external import check_endpoint
from .index import Bm25Params, build_index, load_index, save_index
from .pipeline import Cascade, build_scorers, load_config, validate_config, write_trec_run
from .synth import gen_benchmark, write_benchmark


def _cmd_index(args) -> int:
    corpus = load_corpus(args.corpus)
    index = build_index(corpus, Bm25Params(k1=args.k1, b=args.b))
    save_index(index, args.out)
    print(f"indexed {index.doc_count} documents")
    print(f"vocabulary {index.vocab_size} terms")
    print(f"avg doc length {index.avg_doc_length:.2f} tokens")
    print(f"snapshot written to {args.out}")
    return 0


def _load_cascade(args, oracle=None) -> Cascade:
    config = load_config(args.config)
    violations = validate_config(config)
    if violations:
        raise ConfigError("; ".join(violations))
    index = load_index(args.index)
    corpus = load_corpus(args.corpus)
    scorers = build_scorers(config, oracle=oracle, base_dir=Path(args.config).parent)
    return Cascade(
        index,
        corpus,
        config,
        scorers,
        fallback_on_error=getattr(args, "fallback_on_error", False),
    )


def _cmd_search(args) -> int:
    cascade = _load_cascade(args)
    result = cascade.run(Query(id="cli", text=args.query))
    print("stage telemetry:")
    for t in result.per_stage:
        print(
            f"  {t.stage:<24} in={t.input_size} out={t.output_size}"
            f" calls={t.scorer_calls} {t.elapsed * 1000.0:.2f}ms"
        )
    print("results:")
    for rank, (doc_id, score) in enumerate(result.final, start=1):
        if args.topk is not None and rank > args.topk:
            break
        print(f"  {rank:>4}  {doc_id}  {score:g}")
    return 0


def _load_eval_inputs(args):
    queries = load_queries(args.queries)
    qrels = load_qrels(args.qrels)
    cascade = _load_cascade(args, oracle=qrels)
    missing_queries, missing_docs = qrels_coverage(qrels, queries, cascade.corpus)
    if missing_queries:
        print(
            f"warning: {len(missing_queries)} judged queries are not in the query set",
            file=sys.stderr,
        )
    if missing_docs:
        print(
            f"warning: {len(missing_docs)} judged documents are not in the corpus",
            file=sys.stderr,
        )
    return cascade, queries, qrels


def _cmd_evaluate(args) -> int:
    cascade, queries, qrels = _load_eval_inputs(args)
    report = evaluate(cascade, queries, qrels, k=args.k, workers=args.workers)
    print(report.format_table())
    if args.out:
        write_report(report, args.out)
        print(f"report written to {args.out}")
    if args.run_file:
        write_trec_run(report.results, args.run_file)
        print(f"run file written to {args.run_file}")
    return 0


def _cmd_sweep(args) -> int:
    try:
        values = [int(v) for v in args.a2_values.split(",") if v.strip() != ""]
    except ValueError:
        raise ConfigError(f"--a2-values must be comma-separated integers, got {args.a2_values!r}")
    if not values:
        raise ConfigError("--a2-values is empty")
    cascade, queries, qrels = _load_eval_inputs(args)
    points = sweep_a2(cascade, queries, qrels, values, k=args.k, workers=args.workers)
    for p in points:
        print(
            f"a2={p.a2:<4} ndcg={p.mean_ndcg:.4f}"
            f" time={p.mean_search_time * 1000.0:.2f}ms calls={p.mean_scorer_calls:.1f}"
        )
    write_sweep_csv(points, args.out)
    print(f"sweep written to {args.out}")
    return 0


def _cmd_gen_benchmark(args) -> int:
    corpus, queries, qrels = gen_benchmark(
        seed=args.seed,
        n_docs=args.n_docs,
        n_queries=args.n_queries,
        vocab_size=args.vocab_size,
        relevance_per_query=args.relevance_per_query,
    )
    paths = write_benchmark(args.out, corpus, queries, qrels)
    print(f"corpus  {paths['corpus']} ({len(corpus)} documents)")
    print(f"queries {paths['queries']} ({len(queries)} queries)")
    print(f"qrels   {paths['qrels']} ({len(qrels)} judgments)")
    return 0


def _cmd_serve_check(args) -> int:
    info = check_endpoint(args.endpoint, args.mode, timeout=args.timeout)
    print(f"endpoint {info['endpoint']} ok")
    print(f"mode {info['mode']}, max_input_tokens {info['max_input_tokens']}")
    values = ", ".join(f"{v:g}" for v in info["probe_values"])
    print(f"probe scores: {values}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rankcascade",
        description="Multi-stage retrieval cascade: BM25 plus re-scoring stages.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build and snapshot an inverted index")
    p.add_argument("--corpus", required=True, help="corpus JSON-lines file")
    p.add_argument("--out", required=True, help="snapshot output path")
    p.add_argument("--k1", type=float, default=0.9, help="BM25 k1 (default 0.9)")
    p.add_argument("--b", type=float, default=0.4, help="BM25 b (default 0.4)")
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("search", help="run one query through a cascade")
    p.add_argument("--index", required=True, help="index snapshot path")
    p.add_argument("--corpus", required=True, help="corpus JSON-lines file")
    p.add_argument("--config", required=True, help="pipeline config JSON")
    p.add_argument("--query", required=True, help="query text")
    p.add_argument("--topk", type=int, default=None, help="print at most N results")
    p.add_argument(
        "--fallback-on-error",
        action="store_true",
        help="serve the previous stages' ranking if a scorer backend fails",
    )
    p.set_defaults(func=_cmd_search)

    for name, help_text in (
        ("evaluate", "evaluate a cascade with NDCG@k"),
        ("sweep", "evaluate across final hand-off sizes"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--index", required=True, help="index snapshot path")
        p.add_argument("--corpus", required=True, help="corpus JSON-lines file")
        p.add_argument("--config", required=True, help="pipeline config JSON")
        p.add_argument("--queries", required=True, help="queries JSON-lines file")
        p.add_argument("--qrels", required=True, help="judgments TSV file")
        p.add_argument("--k", type=int, default=10, help="NDCG cutoff (default 10)")
        p.add_argument("--workers", type=int, default=1, help="query workers (default 1)")
        if name == "evaluate":
            p.add_argument("--out", default=None, help="JSON report output path")
            p.add_argument("--run-file", default=None, help="TREC run file output path")
            p.set_defaults(func=_cmd_evaluate)
        else:
            p.add_argument(
                "--a2-values",
                required=True,
                help="comma-separated hand-off sizes, e.g. 0,10,20",
            )
            p.add_argument("--out", required=True, help="CSV output path")
            p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("gen-benchmark", help="generate a seeded synthetic benchmark")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n-docs", type=int, default=1000)
    p.add_argument("--n-queries", type=int, default=50)
    p.add_argument("--vocab-size", type=int, default=2000)
    p.add_argument("--relevance-per-query", type=int, default=5)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_gen_benchmark)

    p = sub.add_parser("serve-check", help="handshake and probe a scorer endpoint")
    p.add_argument("--endpoint", required=True, help="host:port, tcp:host:port, or stdio:CMD")
    p.add_argument("--mode", required=True, choices=("pointwise", "pairwise"))
    p.add_argument("--timeout", type=float, default=30.0, help="seconds (default 30)")
    p.set_defaults(func=_cmd_serve_check)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except IngestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ScorerBackendError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
