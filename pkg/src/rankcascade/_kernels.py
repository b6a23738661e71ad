"""Hot scoring kernels: numba-compiled with a pure-numpy fallback.

The accumulation over a term's posting list dominates query latency, so it
is JIT-compiled when numba is importable. Set ``RANKCASCADE_NUMBA=0`` to
force the numpy path (same arithmetic, element for element, so both paths
produce bitwise-identical scores). ``benchmarks/bench_bm25.py`` compares
the two.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False


def _env_enabled() -> bool:
    value = os.environ.get("RANKCASCADE_NUMBA", "1").strip().lower()
    return value not in {"0", "false", "off", "no"}


_use_numba = _HAVE_NUMBA and _env_enabled()


def numba_available() -> bool:
    return _HAVE_NUMBA


def using_numba() -> bool:
    """Whether the JIT path is currently selected."""
    return _use_numba


def set_use_numba(flag: bool) -> bool:
    """Select the kernel path at runtime; returns the effective setting."""
    global _use_numba
    _use_numba = bool(flag) and _HAVE_NUMBA
    return _use_numba


def _accumulate_term_numpy(ordinals, tfs, doc_lengths, scores, weight, k1, b, avg_doc_length):
    denom = tfs + k1 * (1.0 - b + b * (doc_lengths[ordinals] / avg_doc_length))
    # Ordinals are unique within one posting list, so fancy-index += is safe.
    scores[ordinals] += weight * (tfs / denom)


if _HAVE_NUMBA:

    @numba.njit(cache=True)
    def _accumulate_term_numba(ordinals, tfs, doc_lengths, scores, weight, k1, b, avg_doc_length):  # pragma: no cover - compiled
        for p in range(ordinals.shape[0]):
            o = ordinals[p]
            tf = tfs[p]
            denom = tf + k1 * (1.0 - b + b * (doc_lengths[o] / avg_doc_length))
            scores[o] += weight * (tf / denom)


def accumulate_term(
    ordinals: np.ndarray,
    tfs: np.ndarray,
    doc_lengths: np.ndarray,
    scores: np.ndarray,
    weight: float,
    k1: float,
    b: float,
    avg_doc_length: float,
) -> None:
    """Add one query term's weighted BM25 contribution into ``scores``.

    ``weight`` is idf times the term's multiplicity in the query, so a
    repeated query term still contributes once per occurrence.
    """
    if _use_numba:
        _accumulate_term_numba(ordinals, tfs, doc_lengths, scores, weight, k1, b, avg_doc_length)
    else:
        _accumulate_term_numpy(ordinals, tfs, doc_lengths, scores, weight, k1, b, avg_doc_length)
