"""Cascade orchestration: stage configuration and per-query execution.

A cascade is a list of stages. Stage 0 is always BM25 retrieval over the
index; every later stage re-scores the documents the previous stage emitted
and keeps its top ``cutoff`` of them. The final ranking starts with the last
stage's output and appends every earlier stage's leftovers, deepest stage
first, so eliminated documents keep the relative order of the last stage
that scored them and the full list can be written as a run file.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Corpus, Qrels, Query, load_qrels
from .errors import ConfigError, ScorerBackendError
from .external import make_external_scorer
from .index import Bm25Params, InvertedIndex, RankedList, bm25_topk
from .scorers import (
    EnsembleScorer,
    PairwiseScorer,
    PointwiseScorer,
    SyntheticScorer,
    score_pairwise_aggregate,
    score_pointwise,
)

logger = logging.getLogger(__name__)

STAGE_KINDS = ("bm25", "pointwise", "ensemble", "pairwise")

# scorer-definition type -> modes it can serve
_DEF_MODES = {
    "synthetic": {"pointwise", "pairwise"},
    "ensemble": {"pointwise"},
}


@dataclass(frozen=True)
class StageSpec:
    """One cascade stage: what scores, and how many documents it emits."""

    kind: str
    cutoff: int
    binding: str | None = None


@dataclass
class PipelineConfig:
    """Stages plus the scorer definitions their bindings resolve against."""

    stages: list[StageSpec]
    params: Bm25Params = field(default_factory=Bm25Params)
    scorers: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "bm25": {"k1": self.params.k1, "b": self.params.b},
            "stages": [
                {
                    "kind": s.kind,
                    "cutoff": s.cutoff,
                    **({"binding": s.binding} if s.binding is not None else {}),
                }
                for s in self.stages
            ],
            "scorers": self.scorers,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        if not isinstance(raw, dict):
            raise ConfigError(f"config must be a JSON object, got {type(raw).__name__}")
        bm25_raw = raw.get("bm25", {})
        if not isinstance(bm25_raw, dict):
            raise ConfigError("config field 'bm25' must be an object")
        try:
            params = Bm25Params(
                k1=float(bm25_raw.get("k1", 0.9)), b=float(bm25_raw.get("b", 0.4))
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad BM25 parameters: {exc}") from None
        stages_raw = raw.get("stages")
        if not isinstance(stages_raw, list):
            raise ConfigError("config field 'stages' must be a list")
        stages = []
        for i, stage_raw in enumerate(stages_raw):
            if not isinstance(stage_raw, dict):
                raise ConfigError(f"stage {i} must be an object")
            kind = stage_raw.get("kind")
            cutoff = stage_raw.get("cutoff")
            if not isinstance(kind, str):
                raise ConfigError(f"stage {i} is missing a 'kind' string")
            if not isinstance(cutoff, int) or isinstance(cutoff, bool):
                raise ConfigError(f"stage {i} is missing an integer 'cutoff'")
            binding = stage_raw.get("binding")
            if binding is not None and not isinstance(binding, str):
                raise ConfigError(f"stage {i} 'binding' must be a string")
            stages.append(StageSpec(kind=kind, cutoff=cutoff, binding=binding))
        scorers = raw.get("scorers", {})
        if not isinstance(scorers, dict):
            raise ConfigError("config field 'scorers' must be an object")
        return cls(stages=stages, params=params, scorers=scorers)


def load_config(path: str | Path) -> PipelineConfig:
    """Read a pipeline config from a JSON file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None
    return PipelineConfig.from_dict(raw)


def _def_modes(definition: dict) -> set[str] | None:
    """Modes a scorer definition can serve, or None if the type is unknown."""
    kind = definition.get("type")
    if kind == "external":
        mode = definition.get("mode")
        return {mode} if mode in ("pointwise", "pairwise") else set()
    return _DEF_MODES.get(kind)


def validate_config(
    config: PipelineConfig, available: Iterable[str] | None = None
) -> list[str]:
    """All invariant violations, empty when the config is well-formed.

    ``available`` overrides the binding namespace (defaults to the config's
    own scorer definitions); violations are data, not exceptions.
    """
    violations = []
    if not config.stages:
        return ["config has no stages"]
    names = set(available) if available is not None else set(config.scorers)
    use_defs = available is None
    for i, stage in enumerate(config.stages):
        where = f"stage {i}"
        if stage.kind not in STAGE_KINDS:
            violations.append(f"{where}: unknown kind {stage.kind!r}")
            continue
        if stage.cutoff < 0:
            violations.append(f"{where}: cutoff must be non-negative, got {stage.cutoff}")
        if i == 0 and stage.kind != "bm25":
            violations.append(f"{where}: stage 0 must be bm25")
        if i > 0 and stage.kind == "bm25":
            violations.append(f"{where}: bm25 may appear only as stage 0")
        if i > 0 and stage.cutoff > config.stages[i - 1].cutoff:
            violations.append(
                f"{where}: cutoff {stage.cutoff} exceeds previous stage's"
                f" {config.stages[i - 1].cutoff} (cutoffs must be non-increasing)"
            )
        if stage.kind == "bm25":
            if stage.binding is not None:
                violations.append(f"{where}: bm25 takes no scorer binding")
            continue
        if stage.binding is None:
            violations.append(f"{where}: {stage.kind} stage needs a scorer binding")
            continue
        if stage.binding not in names:
            violations.append(f"{where}: unresolvable scorer binding {stage.binding!r}")
            continue
        if use_defs:
            modes = _def_modes(config.scorers[stage.binding])
            if modes is None:
                violations.append(
                    f"{where}: scorer {stage.binding!r} has unknown type"
                    f" {config.scorers[stage.binding].get('type')!r}"
                )
                continue
            needed = "pairwise" if stage.kind == "pairwise" else "pointwise"
            if needed not in modes:
                violations.append(
                    f"{where}: scorer {stage.binding!r} cannot serve {needed} scoring"
                )
    return violations


def build_scorers(
    config: PipelineConfig,
    oracle: Qrels | None = None,
    base_dir: str | Path | None = None,
) -> dict[str, PointwiseScorer | PairwiseScorer]:
    """Instantiate every scorer definition in the config.

    Synthetic definitions grade against ``oracle`` unless they carry their
    own ``qrels`` path (resolved relative to ``base_dir``). Ensemble members
    are built once and shared if also bound directly.
    """
    built: dict[str, PointwiseScorer | PairwiseScorer] = {}

    def build(name: str, chain: tuple[str, ...]) -> PointwiseScorer | PairwiseScorer:
        if name in built:
            return built[name]
        if name in chain:
            raise ConfigError(f"ensemble member cycle at scorer {name!r}")
        definition = config.scorers.get(name)
        if definition is None:
            raise ConfigError(f"scorer {name!r} is not defined")
        kind = definition.get("type")
        if kind == "synthetic":
            qrels_path = definition.get("qrels")
            if qrels_path is not None:
                path = Path(qrels_path)
                if base_dir is not None and not path.is_absolute():
                    path = Path(base_dir) / path
                graded = load_qrels(path)
            elif oracle is not None:
                graded = oracle
            else:
                raise ConfigError(
                    f"synthetic scorer {name!r} needs a 'qrels' path or an oracle"
                )
            scorer = SyntheticScorer(
                quality=float(definition.get("quality", 1.0)),
                seed=int(definition.get("seed", 0)),
                oracle=graded,
                name=name,
                max_input_tokens=int(definition.get("max_input_tokens", 512)),
            )
        elif kind == "external":
            mode = definition.get("mode")
            endpoint = definition.get("endpoint")
            if not isinstance(endpoint, str):
                raise ConfigError(f"external scorer {name!r} needs an 'endpoint' string")
            limit = definition.get("max_input_tokens")
            scorer = make_external_scorer(
                endpoint,
                mode,
                max_input_tokens=None if limit is None else int(limit),
                batch_size=int(definition.get("batch_size", 32)),
                timeout=float(definition.get("timeout", 30.0)),
                name=name,
            )
        elif kind == "ensemble":
            members_raw = definition.get("members")
            if not isinstance(members_raw, list) or not members_raw:
                raise ConfigError(f"ensemble {name!r} needs a non-empty 'members' list")
            members = [build(member, chain + (name,)) for member in members_raw]
            bad = [m.name for m in members if not isinstance(m, PointwiseScorer)]
            if bad:
                raise ConfigError(f"ensemble {name!r} members must be pointwise: {bad}")
            scorer = EnsembleScorer(members, name=name)
        else:
            raise ConfigError(f"scorer {name!r} has unknown type {kind!r}")
        built[name] = scorer
        return scorer

    for name in config.scorers:
        build(name, ())
    return built


@dataclass
class StageTelemetry:
    """What one stage did for one query."""

    stage: str
    input_size: int
    output_size: int
    scorer_calls: int
    elapsed: float


@dataclass
class CascadeResult:
    """Final ranking plus per-stage telemetry for one query."""

    query_id: str
    final: RankedList
    per_stage: list[StageTelemetry]

    @property
    def scorer_calls(self) -> int:
        return sum(t.scorer_calls for t in self.per_stage)

    @property
    def elapsed(self) -> float:
        return sum(t.elapsed for t in self.per_stage)


def _stage_label(stage: StageSpec) -> str:
    return stage.kind if stage.binding is None else f"{stage.kind}:{stage.binding}"


class Cascade:
    """Executable cascade: index, corpus, config, and resolved scorers.

    ``run`` is single-threaded per query; instances share the immutable
    index and corpus. With ``fallback_on_error`` a scorer backend failure
    falls back to the ranking of the stages that completed instead of
    failing the query.
    """

    def __init__(
        self,
        index: InvertedIndex,
        corpus: Corpus,
        config: PipelineConfig,
        scorers: dict[str, PointwiseScorer | PairwiseScorer] | None = None,
        fallback_on_error: bool = False,
    ):
        self.index = index
        self.corpus = corpus
        self.config = config
        self.scorers = dict(scorers or {})
        self.fallback_on_error = fallback_on_error
        violations = validate_config(config, available=self.scorers)
        if violations:
            raise ConfigError("; ".join(violations))
        for stage in config.stages[1:]:
            scorer = self.scorers[stage.binding]
            if stage.kind == "pairwise":
                if not isinstance(scorer, PairwiseScorer):
                    raise ConfigError(
                        f"scorer {stage.binding!r} bound to a pairwise stage"
                        " does not score pairs"
                    )
            elif not isinstance(scorer, PointwiseScorer):
                raise ConfigError(
                    f"scorer {stage.binding!r} bound to a {stage.kind} stage"
                    " does not score documents"
                )

    def for_worker(self) -> "Cascade":
        """Clone with per-worker scorer instances (isolated counters and
        connections); index and corpus are shared."""
        cloned = {name: scorer.clone() for name, scorer in self.scorers.items()}
        return Cascade(
            self.index, self.corpus, self.config, cloned, self.fallback_on_error
        )

    def run(self, query: Query) -> CascadeResult:
        stages = self.config.stages
        telemetry: list[StageTelemetry] = []

        started = time.perf_counter()
        a1 = stages[0].cutoff
        if a1 >= 1:
            bm25_list = bm25_topk(self.index, self.config.params, query, a1)
        else:
            bm25_list = RankedList([], "bm25")
        telemetry.append(
            StageTelemetry(
                stage="bm25",
                input_size=self.index.doc_count,
                output_size=len(bm25_list),
                scorer_calls=0,
                elapsed=time.perf_counter() - started,
            )
        )

        # full re-scored ranking per stage; outputs are cutoff prefixes
        rankings: list[RankedList] = [bm25_list]
        outputs: list[RankedList] = [bm25_list]
        current = bm25_list
        for stage in stages[1:]:
            label = _stage_label(stage)
            scorer = self.scorers[stage.binding]
            docs = [self.corpus.get(doc_id) for doc_id in current.doc_ids()]
            started = time.perf_counter()
            calls_before = scorer.inferences
            try:
                if stage.kind == "pairwise":
                    if len(docs) >= 2:
                        scores = score_pairwise_aggregate(scorer, query, docs)
                    else:
                        # a lone document has no opponents; its pair sum is empty
                        scores = [0.0] * len(docs)
                else:
                    scores = score_pointwise(scorer, query, docs) if docs else []
            except ScorerBackendError as exc:
                if not self.fallback_on_error:
                    raise type(exc)(f"query {query.id!r}, stage {label}: {exc}") from exc
                logger.warning(
                    "query %r: stage %s failed (%s); serving previous stages' ranking",
                    query.id,
                    label,
                    exc,
                )
                break
            entries = sorted(
                zip(current.doc_ids(), scores),
                key=lambda entry: (-entry[1], entry[0]),
            )
            full = RankedList(entries, label)
            output = RankedList(entries[: stage.cutoff], label)
            telemetry.append(
                StageTelemetry(
                    stage=label,
                    input_size=len(docs),
                    output_size=len(output),
                    scorer_calls=scorer.inferences - calls_before,
                    elapsed=time.perf_counter() - started,
                )
            )
            rankings.append(full)
            outputs.append(output)
            current = output

        return CascadeResult(
            query_id=query.id,
            final=_assemble_final(rankings, outputs),
            per_stage=telemetry,
        )


def _assemble_final(rankings: Sequence[RankedList], outputs: Sequence[RankedList]) -> RankedList:
    """Last stage's output, then each earlier stage's not-yet-seen documents
    in that stage's re-scored order, down to the BM25 leftovers.

    Scores are rank-derived (length minus position) because per-stage scores
    are not comparable across stages.
    """
    ordered: list[str] = []
    seen: set[str] = set()

    def take(doc_ids: Iterable[str]) -> None:
        for doc_id in doc_ids:
            if doc_id not in seen:
                seen.add(doc_id)
                ordered.append(doc_id)

    take(outputs[-1].doc_ids())
    for ranking in reversed(rankings[:-1]):
        take(ranking.doc_ids())
    total = len(ordered)
    entries = [(doc_id, float(total - pos)) for pos, doc_id in enumerate(ordered)]
    return RankedList(entries, "cascade")


def run_cascade(
    config: PipelineConfig,
    query: Query,
    *,
    index: InvertedIndex,
    corpus: Corpus,
    scorers: dict[str, PointwiseScorer | PairwiseScorer] | None = None,
    fallback_on_error: bool = False,
) -> CascadeResult:
    """One-shot convenience wrapper around ``Cascade.run``."""
    return Cascade(index, corpus, config, scorers, fallback_on_error).run(query)


def with_a2(config: PipelineConfig, a2: int) -> PipelineConfig:
    """Copy of the config with the final hand-off resized: the stage feeding
    the last one emits ``a2`` documents and the last stage re-ranks all of
    them. Requires at least three stages."""
    if len(config.stages) < 3:
        raise ConfigError("resizing the final hand-off needs at least three stages")
    if a2 > config.stages[-3].cutoff:
        raise ConfigError(
            f"a2={a2} exceeds the upstream stage cutoff {config.stages[-3].cutoff}"
        )
    stages = list(config.stages)
    stages[-2] = replace(stages[-2], cutoff=a2)
    stages[-1] = replace(stages[-1], cutoff=a2)
    return PipelineConfig(stages=stages, params=config.params, scorers=config.scorers)


def write_trec_run(
    results: Iterable[CascadeResult], path: str | Path, run_tag: str = "rankcascade"
) -> None:
    """Standard six-column run file: query, Q0, doc, rank, score, tag."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for result in results:
            for rank, (doc_id, score) in enumerate(result.final, start=1):
                fh.write(
                    f"{result.query_id}\tQ0\t{doc_id}\t{rank}\t{score:g}\t{run_tag}\n"
                )
