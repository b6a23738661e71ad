import json

import pytest

from rankcascade.corpus import Corpus, Qrels, Query, make_document, write_qrels
from rankcascade.errors import ConfigError, ScorerBackendError
from rankcascade.index import Bm25Params, bm25_topk, build_index
from rankcascade.pipeline import (
    Cascade,
    PipelineConfig,
    StageSpec,
    build_scorers,
    load_config,
    run_cascade,
    validate_config,
    with_a2,
    write_trec_run,
)
from rankcascade.scorers import (
    PairwiseScorer,
    PointwiseScorer,
    SyntheticScorer,
    score_pairwise_aggregate,
    score_pointwise,
)


def stages(*specs):
    return [StageSpec(kind=k, cutoff=c, binding=b) for k, c, b in specs]


def three_stage(scorer_defs=None, a1=100, a2=20):
    return PipelineConfig(
        stages=stages(("bm25", a1, None), ("pointwise", a2, "noisy"), ("pairwise", a2, "strong")),
        scorers=scorer_defs or {},
    )


def two_stage(binding="noisy", a1=100, a2=100, scorer_defs=None):
    return PipelineConfig(
        stages=stages(("bm25", a1, None), ("pointwise", a2, binding)),
        scorers=scorer_defs or {},
    )


def bench_scorers(qrels):
    return {
        "noisy": SyntheticScorer(0.6, seed=11, oracle=qrels, name="noisy"),
        "strong": SyntheticScorer(0.9, seed=12, oracle=qrels, name="strong"),
    }


def tiny_corpus():
    """Thirty documents over a small vocabulary, one containing 'solo'."""
    docs = []
    for i in range(30):
        words = ["alpha"] * (i % 3 + 1) + ["beta"] * (i % 5) + [f"tail{i}"]
        if i == 7:
            words.append("solo")
        docs.append(make_document(f"d{i:02d}", "", " ".join(words)))
    return Corpus(docs)


class FailingPointwise(PointwiseScorer):
    name = "bad"
    max_input_tokens = 512

    def score_documents(self, query, docs):
        raise ScorerBackendError("backend went away")


class FailingPairwise(PairwiseScorer):
    name = "bad"
    max_input_tokens = 512

    def score_pairs(self, query, pairs):
        raise ScorerBackendError("backend went away")


class TestValidateConfig:
    def test_well_formed_has_no_violations(self):
        config = three_stage(
            {
                "noisy": {"type": "synthetic", "quality": 0.6, "seed": 11},
                "strong": {"type": "synthetic", "quality": 0.9, "seed": 12},
            }
        )
        assert validate_config(config) == []

    def test_empty_stage_list(self):
        assert validate_config(PipelineConfig(stages=[])) == ["config has no stages"]

    def test_stage_zero_must_be_bm25(self):
        config = PipelineConfig(stages=stages(("pointwise", 10, "s")))
        assert any("stage 0 must be bm25" in v for v in validate_config(config, ["s"]))

    def test_bm25_only_at_stage_zero(self):
        config = PipelineConfig(stages=stages(("bm25", 100, None), ("bm25", 50, None)))
        assert any("only as stage 0" in v for v in validate_config(config))

    def test_unknown_kind(self):
        config = PipelineConfig(stages=stages(("bm25", 100, None), ("listwise", 50, "s")))
        assert any("unknown kind 'listwise'" in v for v in validate_config(config, ["s"]))

    def test_negative_cutoff(self):
        config = PipelineConfig(stages=stages(("bm25", -1, None)))
        assert any("non-negative" in v for v in validate_config(config))

    def test_cutoffs_must_be_non_increasing(self):
        config = PipelineConfig(stages=stages(("bm25", 100, None), ("pointwise", 200, "s")))
        violations = validate_config(config, ["s"])
        assert any("non-increasing" in v for v in violations)

    def test_bm25_takes_no_binding(self):
        config = PipelineConfig(stages=stages(("bm25", 100, "s")))
        assert any("takes no scorer binding" in v for v in validate_config(config, ["s"]))

    def test_scorer_stage_needs_binding(self):
        config = PipelineConfig(stages=stages(("bm25", 100, None), ("pointwise", 50, None)))
        assert any("needs a scorer binding" in v for v in validate_config(config))

    def test_unresolvable_binding(self):
        config = PipelineConfig(stages=stages(("bm25", 100, None), ("pointwise", 50, "ghost")))
        assert any("unresolvable scorer binding 'ghost'" in v for v in validate_config(config))

    def test_definition_mode_mismatch(self):
        # an ensemble only averages document scores, so it cannot feed a pair stage
        config = PipelineConfig(
            stages=stages(("bm25", 100, None), ("pairwise", 50, "team")),
            scorers={"team": {"type": "ensemble", "members": ["a"]}},
        )
        assert any("cannot serve pairwise" in v for v in validate_config(config))

    def test_available_names_override_definitions(self):
        config = PipelineConfig(stages=stages(("bm25", 100, None), ("pointwise", 50, "live")))
        assert validate_config(config, available=["live"]) == []

    def test_multiple_violations_all_reported(self):
        config = PipelineConfig(
            stages=stages(("pointwise", 10, None), ("bm25", 50, None))
        )
        violations = validate_config(config)
        assert len(violations) >= 3


class TestConfigSerialization:
    def test_round_trip(self):
        config = three_stage(
            {"noisy": {"type": "synthetic"}, "strong": {"type": "synthetic"}}
        )
        config.params = Bm25Params(k1=1.2, b=0.75)
        again = PipelineConfig.from_dict(config.to_dict())
        assert again.stages == config.stages
        assert again.params == config.params
        assert again.scorers == config.scorers

    def test_binding_omitted_for_bm25(self):
        raw = three_stage().to_dict()
        assert "binding" not in raw["stages"][0]
        assert raw["stages"][1]["binding"] == "noisy"

    def test_from_dict_defaults_bm25_params(self):
        config = PipelineConfig.from_dict({"stages": [{"kind": "bm25", "cutoff": 10}]})
        assert config.params == Bm25Params(k1=0.9, b=0.4)

    def test_from_dict_rejects_non_object(self):
        with pytest.raises(ConfigError, match="JSON object"):
            PipelineConfig.from_dict([1, 2])

    def test_from_dict_rejects_bool_cutoff(self):
        with pytest.raises(ConfigError, match="integer 'cutoff'"):
            PipelineConfig.from_dict({"stages": [{"kind": "bm25", "cutoff": True}]})

    def test_from_dict_rejects_missing_kind(self):
        with pytest.raises(ConfigError, match="missing a 'kind'"):
            PipelineConfig.from_dict({"stages": [{"cutoff": 10}]})

    def test_load_config(self, tmp_path):
        path = tmp_path / "cascade.json"
        path.write_text(json.dumps(three_stage().to_dict()), encoding="utf-8")
        config = load_config(path)
        assert [s.cutoff for s in config.stages] == [100, 20, 20]

    def test_load_config_bad_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(path)

    def test_load_config_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "absent.json")


class TestBuildScorers:
    def test_synthetic_from_oracle(self):
        qrels = Qrels()
        qrels.set("q1", "d1", 2)
        config = PipelineConfig(
            stages=stages(("bm25", 10, None)),
            scorers={"s": {"type": "synthetic", "quality": 0.8, "seed": 3}},
        )
        built = build_scorers(config, oracle=qrels)
        assert isinstance(built["s"], SyntheticScorer)
        assert built["s"].quality == 0.8
        assert built["s"].name == "s"

    def test_synthetic_qrels_path_resolves_against_base_dir(self, tmp_path):
        qrels = Qrels()
        qrels.set("q1", "d1", 1)
        write_qrels(qrels, tmp_path / "graded.tsv")
        config = PipelineConfig(
            stages=stages(("bm25", 10, None)),
            scorers={"s": {"type": "synthetic", "qrels": "graded.tsv"}},
        )
        built = build_scorers(config, base_dir=tmp_path)
        assert built["s"].oracle.grade("q1", "d1") == 1

    def test_synthetic_needs_oracle_or_path(self):
        config = PipelineConfig(
            stages=stages(("bm25", 10, None)), scorers={"s": {"type": "synthetic"}}
        )
        with pytest.raises(ConfigError, match="needs a 'qrels' path or an oracle"):
            build_scorers(config)

    def test_ensemble_members_shared_with_direct_bindings(self):
        qrels = Qrels()
        qrels.set("q1", "d1", 1)
        config = PipelineConfig(
            stages=stages(("bm25", 10, None)),
            scorers={
                "a": {"type": "synthetic", "seed": 1},
                "b": {"type": "synthetic", "seed": 2},
                "team": {"type": "ensemble", "members": ["a", "b"]},
            },
        )
        built = build_scorers(config, oracle=qrels)
        assert built["team"].members[0] is built["a"]
        assert built["team"].members[1] is built["b"]

    def test_ensemble_cycle_rejected(self):
        config = PipelineConfig(
            stages=stages(("bm25", 10, None)),
            scorers={
                "a": {"type": "ensemble", "members": ["b"]},
                "b": {"type": "ensemble", "members": ["a"]},
            },
        )
        with pytest.raises(ConfigError, match="cycle"):
            build_scorers(config)

    def test_ensemble_needs_members(self):
        config = PipelineConfig(
            stages=stages(("bm25", 10, None)),
            scorers={"team": {"type": "ensemble", "members": []}},
        )
        with pytest.raises(ConfigError, match="non-empty 'members'"):
            build_scorers(config)

    def test_unknown_type_rejected(self):
        config = PipelineConfig(
            stages=stages(("bm25", 10, None)), scorers={"s": {"type": "quantum"}}
        )
        with pytest.raises(ConfigError, match="unknown type 'quantum'"):
            build_scorers(config)

    def test_undefined_member_rejected(self):
        config = PipelineConfig(
            stages=stages(("bm25", 10, None)),
            scorers={"team": {"type": "ensemble", "members": ["ghost"]}},
        )
        with pytest.raises(ConfigError, match="'ghost' is not defined"):
            build_scorers(config)


def expected_final(index, corpus, config, scorers, query):
    """Straight-line recomputation of the cascade's final ranking.

    Synthetic scorers are pure functions of (seed, query id, doc id), so the
    per-stage re-scored orders can be rebuilt outside the engine and the
    suffix rule applied by hand.
    """
    top = bm25_topk(index, config.params, query, config.stages[0].cutoff)
    rankings = [list(top)]
    current = [doc_id for doc_id, _ in top]
    for stage in config.stages[1:]:
        scorer = scorers[stage.binding]
        docs = [corpus.get(d) for d in current]
        if stage.kind == "pairwise":
            scores = (
                score_pairwise_aggregate(scorer, query, docs)
                if len(docs) >= 2
                else [0.0] * len(docs)
            )
        else:
            scores = score_pointwise(scorer, query, docs) if docs else []
        entries = sorted(zip(current, scores), key=lambda e: (-e[1], e[0]))
        rankings.append(entries)
        current = [d for d, _ in entries[: stage.cutoff]]
    ordered = list(current)
    seen = set(current)
    for ranking in reversed(rankings[:-1]):
        for doc_id, _ in ranking:
            if doc_id not in seen:
                seen.add(doc_id)
                ordered.append(doc_id)
    total = len(ordered)
    return [(doc_id, float(total - pos)) for pos, doc_id in enumerate(ordered)]


class TestCascadeRun:
    def test_final_matches_hand_assembly(self, bench):
        scorers = bench_scorers(bench.qrels)
        config = three_stage()
        cascade = Cascade(bench.index, bench.corpus, config, scorers)
        fresh = bench_scorers(bench.qrels)
        for query in list(bench.queries)[:8]:
            result = cascade.run(query)
            expected = expected_final(bench.index, bench.corpus, config, fresh, query)
            assert result.final.entries == expected

    def test_final_is_rank_scored_and_duplicate_free(self, bench):
        cascade = Cascade(bench.index, bench.corpus, three_stage(), bench_scorers(bench.qrels))
        query = list(bench.queries)[0]
        result = cascade.run(query)
        scores = [s for _, s in result.final]
        assert scores == sorted(scores, reverse=True)
        assert len(set(scores)) == len(scores)
        assert result.final.provenance == "cascade"
        ids = result.final.doc_ids()
        assert len(set(ids)) == len(ids)

    def test_final_holds_exactly_the_first_stage_candidates(self, bench):
        cascade = Cascade(bench.index, bench.corpus, three_stage(), bench_scorers(bench.qrels))
        query = list(bench.queries)[3]
        result = cascade.run(query)
        top = bm25_topk(bench.index, cascade.config.params, query, 100)
        assert set(result.final.doc_ids()) == set(top.doc_ids())
        assert len(result.final) <= 100

    def test_telemetry_sizes_and_calls(self, bench):
        cascade = Cascade(bench.index, bench.corpus, three_stage(), bench_scorers(bench.qrels))
        result = cascade.run(list(bench.queries)[0])
        assert [t.input_size for t in result.per_stage] == [1000, 100, 20]
        assert [t.output_size for t in result.per_stage] == [100, 20, 20]
        assert [t.scorer_calls for t in result.per_stage] == [0, 100, 20 * 19]
        assert [t.stage for t in result.per_stage] == [
            "bm25",
            "pointwise:noisy",
            "pairwise:strong",
        ]
        assert result.scorer_calls == 100 + 380

    def test_a2_zero_degenerates_to_two_stage(self, bench):
        """With nothing handed to the last stage, the final ranking is the
        middle stage's full re-scored order, which is the two-stage result."""
        scorers = bench_scorers(bench.qrels)
        shrunk = Cascade(bench.index, bench.corpus, with_a2(three_stage(), 0), scorers)
        flat = Cascade(bench.index, bench.corpus, two_stage(), scorers)
        for query in bench.queries:
            assert shrunk.run(query).final.entries == flat.run(query).final.entries

    def test_rescoring_with_same_scorer_changes_nothing(self, bench):
        """A stage that re-scores its own input with the same scorer at the
        same cutoff is a no-op for the final ranking."""
        scorers = bench_scorers(bench.qrels)
        doubled = PipelineConfig(
            stages=stages(
                ("bm25", 50, None), ("pointwise", 50, "noisy"), ("pointwise", 50, "noisy")
            )
        )
        once = two_stage(a1=50, a2=50)
        doubled_cascade = Cascade(bench.index, bench.corpus, doubled, scorers)
        once_cascade = Cascade(bench.index, bench.corpus, once, scorers)
        for query in list(bench.queries)[:10]:
            assert doubled_cascade.run(query).final.entries == once_cascade.run(query).final.entries

    def test_cutoffs_above_candidate_count_are_harmless(self):
        corpus = tiny_corpus()
        index = build_index(corpus)
        qrels = Qrels()
        qrels.set("q1", "d07", 1)
        scorers = {"s": SyntheticScorer(0.9, seed=5, oracle=qrels, name="s")}
        config = PipelineConfig(
            stages=stages(("bm25", 100, None), ("pointwise", 30, "s"), ("pairwise", 30, "s"))
        )
        result = Cascade(index, corpus, config, scorers).run(Query("q1", "beta"))
        matching = sum(1 for doc in corpus if "beta" in doc.body.split())
        assert matching < 30
        assert [t.input_size for t in result.per_stage] == [30, matching, matching]
        assert len(result.final) == matching

    def test_pairwise_stage_with_single_candidate_makes_no_calls(self):
        corpus = tiny_corpus()
        index = build_index(corpus)
        qrels = Qrels()
        qrels.set("q1", "d07", 1)
        scorers = {"s": SyntheticScorer(0.9, seed=5, oracle=qrels, name="s")}
        config = PipelineConfig(
            stages=stages(("bm25", 10, None), ("pairwise", 10, "s"))
        )
        result = Cascade(index, corpus, config, scorers).run(Query("q1", "solo"))
        assert result.final.doc_ids() == ["d07"]
        assert result.per_stage[1].scorer_calls == 0

    def test_unmatched_query_yields_empty_final(self):
        corpus = tiny_corpus()
        index = build_index(corpus)
        qrels = Qrels()
        qrels.set("q1", "d00", 1)
        scorers = {"s": SyntheticScorer(0.9, seed=5, oracle=qrels, name="s")}
        config = PipelineConfig(
            stages=stages(("bm25", 10, None), ("pointwise", 5, "s"), ("pairwise", 5, "s"))
        )
        result = Cascade(index, corpus, config, scorers).run(Query("q1", "zzyzx"))
        assert len(result.final) == 0
        assert [t.input_size for t in result.per_stage] == [30, 0, 0]
        assert result.scorer_calls == 0

    def test_zero_first_stage_cutoff_retrieves_nothing(self):
        corpus = tiny_corpus()
        index = build_index(corpus)
        config = PipelineConfig(stages=stages(("bm25", 0, None)))
        result = Cascade(index, corpus, config).run(Query("q1", "alpha"))
        assert len(result.final) == 0

    def test_run_cascade_wrapper_matches_class(self, bench):
        config = three_stage()
        query = list(bench.queries)[1]
        via_class = Cascade(
            bench.index, bench.corpus, config, bench_scorers(bench.qrels)
        ).run(query)
        via_function = run_cascade(
            config,
            query,
            index=bench.index,
            corpus=bench.corpus,
            scorers=bench_scorers(bench.qrels),
        )
        assert via_function.final.entries == via_class.final.entries

    def test_rejects_invalid_config(self, bench):
        config = PipelineConfig(stages=stages(("bm25", 100, None), ("pointwise", 200, "s")))
        with pytest.raises(ConfigError, match="non-increasing"):
            Cascade(bench.index, bench.corpus, config, {"s": FailingPointwise()})

    def test_rejects_mode_mismatched_scorer_instances(self, bench):
        config = PipelineConfig(stages=stages(("bm25", 100, None), ("pairwise", 20, "s")))
        with pytest.raises(ConfigError, match="does not score pairs"):
            Cascade(bench.index, bench.corpus, config, {"s": FailingPointwise()})


class TestFallback:
    def config_with_bad_last_stage(self):
        return PipelineConfig(
            stages=stages(("bm25", 20, None), ("pointwise", 10, "good"), ("pairwise", 10, "bad"))
        )

    def scorer_instances(self, qrels):
        return {
            "good": SyntheticScorer(0.9, seed=5, oracle=qrels, name="good"),
            "bad": FailingPairwise(),
        }

    def test_error_names_query_and_stage(self, bench):
        cascade = Cascade(
            bench.index,
            bench.corpus,
            self.config_with_bad_last_stage(),
            self.scorer_instances(bench.qrels),
        )
        query = list(bench.queries)[0]
        with pytest.raises(ScorerBackendError, match=f"query '{query.id}', stage pairwise:bad"):
            cascade.run(query)

    def test_fallback_serves_completed_stages(self, bench):
        query = list(bench.queries)[0]
        degraded = Cascade(
            bench.index,
            bench.corpus,
            self.config_with_bad_last_stage(),
            self.scorer_instances(bench.qrels),
            fallback_on_error=True,
        ).run(query)
        healthy = Cascade(
            bench.index,
            bench.corpus,
            two_stage(binding="good", a1=20, a2=10),
            self.scorer_instances(bench.qrels),
        ).run(query)
        assert degraded.final.entries == healthy.final.entries
        assert len(degraded.per_stage) == 2

    def test_fallback_at_first_scorer_stage_serves_bm25(self, bench):
        config = PipelineConfig(stages=stages(("bm25", 20, None), ("pointwise", 10, "bad")))
        query = list(bench.queries)[0]
        result = Cascade(
            bench.index,
            bench.corpus,
            config,
            {"bad": FailingPointwise()},
            fallback_on_error=True,
        ).run(query)
        top = bm25_topk(bench.index, config.params, query, 20)
        assert result.final.doc_ids() == top.doc_ids()


class TestForWorker:
    def test_clone_matches_results_and_isolates_counters(self, bench):
        scorers = bench_scorers(bench.qrels)
        cascade = Cascade(bench.index, bench.corpus, three_stage(), scorers)
        clone = cascade.for_worker()
        query = list(bench.queries)[0]
        cloned_result = clone.run(query)
        assert scorers["noisy"].inferences == 0
        assert scorers["strong"].inferences == 0
        assert cloned_result.final.entries == cascade.run(query).final.entries


class TestWithA2:
    def test_resizes_last_two_stages(self):
        resized = with_a2(three_stage(), 7)
        assert [s.cutoff for s in resized.stages] == [100, 7, 7]

    def test_original_config_untouched(self):
        config = three_stage()
        with_a2(config, 7)
        assert [s.cutoff for s in config.stages] == [100, 20, 20]

    def test_requires_three_stages(self):
        with pytest.raises(ConfigError, match="at least three stages"):
            with_a2(two_stage(), 5)

    def test_rejects_a2_above_upstream_cutoff(self):
        with pytest.raises(ConfigError, match="exceeds the upstream stage cutoff"):
            with_a2(three_stage(), 101)


class TestWriteTrecRun:
    def test_six_column_format(self, bench, tmp_path):
        cascade = Cascade(bench.index, bench.corpus, three_stage(), bench_scorers(bench.qrels))
        results = [cascade.run(q) for q in list(bench.queries)[:2]]
        path = tmp_path / "run.tsv"
        write_trec_run(results, path, run_tag="trial")
        lines = path.read_text(encoding="utf-8").splitlines()
        assert len(lines) == sum(len(r.final) for r in results)
        first = lines[0].split("\t")
        assert len(first) == 6
        assert first[0] == results[0].query_id
        assert first[1] == "Q0"
        assert first[3] == "1"
        assert first[5] == "trial"
        ranks = [int(line.split("\t")[3]) for line in lines if line.startswith(results[0].query_id + "\t")]
        assert ranks == list(range(1, len(results[0].final) + 1))
