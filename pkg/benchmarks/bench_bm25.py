"""Compare the JIT-compiled and pure-numpy scoring kernels on one corpus.

Builds a seeded synthetic benchmark, runs every query's full BM25 scan
through both kernel paths, and reports per-query latency. The two paths are
bitwise-identical in output (asserted here as well), so the only difference
worth printing is time.

Usage:
    python3 benchmarks/bench_bm25.py [--n-docs 20000] [--n-queries 200] [--repeats 3]
"""

import argparse
import time

import numpy as np

from rankcascade._kernels import numba_available, set_use_numba, using_numba
from rankcascade.corpus import tokenize
from rankcascade.index import bm25_all_scores, build_index
from rankcascade.synth import gen_benchmark


def time_path(index, params, token_lists, repeats):
    """Best-of-N total scan time and per-query latencies for one kernel path."""
    totals = []
    for _ in range(repeats):
        started = time.perf_counter()
        for tokens in token_lists:
            bm25_all_scores(index, params, tokens)
        totals.append(time.perf_counter() - started)
    best = min(totals)
    return best, best / len(token_lists)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--n-docs", type=int, default=20000)
    parser.add_argument("--n-queries", type=int, default=200)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    if not numba_available():
        print("numba is not importable; only the numpy path can run")
        return 1

    corpus, queries, _ = gen_benchmark(
        seed=args.seed, n_docs=args.n_docs, n_queries=args.n_queries
    )
    index = build_index(corpus)
    params = index.default_params
    token_lists = [tokenize(q.text) for q in queries]
    print(
        f"corpus: {index.doc_count} docs, {index.vocab_size} terms,"
        f" avg length {index.avg_doc_length:.1f}"
    )
    print(f"queries: {len(token_lists)}, repeats: {args.repeats} (best-of)")

    set_use_numba(True)
    assert using_numba()
    bm25_all_scores(index, params, token_lists[0])  # trigger compilation
    jit_total, jit_query = time_path(index, params, token_lists, args.repeats)
    jit_scores = [bm25_all_scores(index, params, t) for t in token_lists]

    set_use_numba(False)
    plain_total, plain_query = time_path(index, params, token_lists, args.repeats)
    plain_scores = [bm25_all_scores(index, params, t) for t in token_lists]
    set_use_numba(True)

    for a, b in zip(jit_scores, plain_scores):
        assert np.array_equal(a, b), "kernel paths diverged"

    print(f"{'path':<10} {'total':>10} {'per query':>12}")
    print(f"{'numba':<10} {jit_total:>9.3f}s {jit_query * 1e3:>10.3f}ms")
    print(f"{'numpy':<10} {plain_total:>9.3f}s {plain_query * 1e3:>10.3f}ms")
    ratio = plain_total / jit_total if jit_total > 0 else float("inf")
    print(f"numba speedup: {ratio:.2f}x (outputs bitwise-identical)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
