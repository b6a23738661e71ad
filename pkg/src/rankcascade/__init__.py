"""Multi-stage retrieval cascade: BM25 candidates re-scored by pointwise,
ensemble, and pairwise stages, with evaluation and cost accounting."""

from .corpus import (
    Corpus,
    Document,
    Qrels,
    Query,
    QuerySet,
    load_corpus,
    load_qrels,
    load_queries,
    make_document,
    tokenize,
)
from .errors import (
    ConfigError,
    IngestError,
    ProtocolError,
    RankCascadeError,
    ScorerBackendError,
)
from .evaluation import (
    EvalReport,
    SweepPoint,
    evaluate,
    ndcg_at_k,
    sweep_a2,
    write_sweep_csv,
)
from .external import (
    ExternalPairwiseScorer,
    ExternalPointwiseScorer,
    check_endpoint,
    make_external_scorer,
)
from .index import (
    Bm25Params,
    InvertedIndex,
    RankedList,
    bm25_score,
    bm25_topk,
    build_index,
    load_index,
    save_index,
)
from .pipeline import (
    Cascade,
    CascadeResult,
    PipelineConfig,
    StageSpec,
    build_scorers,
    load_config,
    run_cascade,
    validate_config,
    write_trec_run,
)
from .scorers import (
    EnsembleScorer,
    PairwiseScorer,
    PairwiseScoreMatrix,
    PointwiseScorer,
    SyntheticScorer,
    aggregate_pairwise,
    score_ensemble,
    score_pairwise_aggregate,
    score_pointwise,
)
from .synth import gen_benchmark, write_benchmark

__version__ = "0.1.0"

__all__ = [
    "Bm25Params",
    "Cascade",
    "CascadeResult",
    "ConfigError",
    "Corpus",
    "Document",
    "EnsembleScorer",
    "EvalReport",
    "ExternalPairwiseScorer",
    "ExternalPointwiseScorer",
    "IngestError",
    "InvertedIndex",
    "PairwiseScoreMatrix",
    "PairwiseScorer",
    "PipelineConfig",
    "PointwiseScorer",
    "ProtocolError",
    "Qrels",
    "Query",
    "QuerySet",
    "RankCascadeError",
    "RankedList",
    "ScorerBackendError",
    "StageSpec",
    "SweepPoint",
    "SyntheticScorer",
    "aggregate_pairwise",
    "bm25_score",
    "bm25_topk",
    "build_index",
    "build_scorers",
    "check_endpoint",
    "evaluate",
    "gen_benchmark",
    "load_config",
    "load_corpus",
    "load_index",
    "load_qrels",
    "load_queries",
    "make_document",
    "make_external_scorer",
    "ndcg_at_k",
    "run_cascade",
    "save_index",
    "score_ensemble",
    "score_pairwise_aggregate",
    "score_pointwise",
    "sweep_a2",
    "tokenize",
    "validate_config",
    "write_benchmark",
    "write_sweep_csv",
    "write_trec_run",
]
