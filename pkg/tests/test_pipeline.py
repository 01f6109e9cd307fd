import math

import numpy as np
import pytest

from kgrefine.errors import DataError, OntologyError
from kgrefine.kg import SplitSpec
from kgrefine.embed import ModelConfig
from kgrefine.noise import NoiseSpec
from kgrefine.pipeline import (
    FeedbackConfig,
    FeedbackEvidence,
    feedback_thresholds,
    filter_kg,
    generate_types,
    partition_predictions,
    refine,
    select_feedback,
    tune_threshold,
    types_from_labels,
)
from kgrefine.psl import InferenceResult, RuleWeights
from kgrefine.synth import SynthSpec, benchmark_splits, generate_kg
from conftest import make_kg
from oracles import sklearn_weighted_f1


class TestTuneThreshold:
    def test_perfectly_separated(self):
        scored = [(i, 0.2 if i < 5 else 0.8) for i in range(10)]
        gold = {i: 0 if i < 5 else 1 for i in range(10)}
        assert tune_threshold(scored, gold) == pytest.approx(0.201)

    def test_all_same_score(self):
        scored = [(i, 0.4) for i in range(6)]
        gold = {i: i % 2 for i in range(6)}
        assert tune_threshold(scored, gold) == 0.0

    def test_matches_exhaustive_scan_oracle(self):
        rng = np.random.default_rng(17)
        for trial in range(5):
            n = 10
            scored = [(i, round(float(rng.uniform(0, 1)), 3)) for i in range(n)]
            gold = {i: int(rng.integers(2)) for i in range(n)}
            y_true = [gold[i] for i in range(n)]
            best_t, best_wf1 = None, -1.0
            for k in range(1001):
                t = k / 1000.0
                y_pred = [1 if s >= t else 0 for _, s in scored]
                wf1, _, _ = sklearn_weighted_f1(y_true, y_pred)
                if wf1 > best_wf1 + 1e-12:
                    best_t, best_wf1 = t, wf1
            assert tune_threshold(scored, gold) == pytest.approx(best_t)

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            tune_threshold([], {})

    def test_uncovered_item_rejected(self):
        with pytest.raises(DataError):
            tune_threshold([(1, 0.5)], {2: 1})


def result_for(kg, rel_scores, lbl_scores=None):
    scores = {f.key: rel_scores.get(f.key, 0.0) for f in kg.facts}
    scores.update(rel_scores)
    return InferenceResult(scores, lbl_scores or {}, 0.0, 1)


class TestFilterKg:
    def test_threshold_zero_keeps_all(self):
        kg = make_kg([(0, 0, 1, 0.9), (1, 0, 2, 0.4)])
        result = result_for(kg, {(0, 0, 1): 0.8, (1, 0, 2): 0.1})
        assert len(filter_kg(kg, result, 0.0).facts) == 2

    def test_threshold_above_max_empties(self):
        kg = make_kg([(0, 0, 1, 0.9)])
        result = result_for(kg, {(0, 0, 1): 0.8})
        assert filter_kg(kg, result, 0.9).facts == ()

    def test_mixed_scores_match_manual_filter(self):
        rng = np.random.default_rng(3)
        keys = [(i, 0, i + 1) for i in range(20)]
        kg = make_kg([k + (0.5,) for k in keys])
        scores = {k: round(float(rng.uniform(0, 1)), 3) for k in keys}
        result = result_for(kg, scores)
        t = 0.5
        kept = filter_kg(kg, result, t)
        assert {f.key for f in kept.facts} == {k for k in keys if scores[k] >= t}

    def test_inferred_facts_enter_with_psl_source(self):
        kg = make_kg([(0, 0, 1, 0.9)], n_entities=3)
        result = result_for(kg, {(0, 0, 1): 0.8, (1, 0, 2): 0.7, (2, 0, 0): 0.2})
        kept = filter_kg(kg, result, 0.5, iteration=4)
        by_key = {f.key: f for f in kept.facts}
        assert set(by_key) == {(0, 0, 1), (1, 0, 2)}
        assert by_key[(1, 0, 2)].confidences == (("psl-iter-4", 0.7),)

    def test_excluded_keys_never_adopted(self):
        kg = make_kg([(0, 0, 1, 0.9)], n_entities=3)
        result = result_for(kg, {(0, 0, 1): 0.8, (1, 0, 2): 0.9})
        kept = filter_kg(kg, result, 0.5, exclude_keys={(1, 0, 2)})
        assert {f.key for f in kept.facts} == {(0, 0, 1)}

    def test_uncovered_fact_rejected(self):
        kg = make_kg([(0, 0, 1, 0.9)])
        with pytest.raises(DataError):
            filter_kg(kg, InferenceResult({}, {}, 0.0, 1), 0.5)


class TestGenerateTypes:
    def test_single_label_above_threshold(self):
        result = InferenceResult({}, {(0, 1): 0.9}, 0.0, 1)
        assert generate_types(result, frozenset(), 0.5) == {0: 1}

    def test_most_specific_wins_over_ancestor(self):
        # label 0 (child, 0.8) beats its SUB-parent 1 (0.9): specificity first
        result = InferenceResult({}, {(0, 0): 0.8, (0, 1): 0.9}, 0.0, 1)
        assert generate_types(result, frozenset({(0, 1)}), 0.5) == {0: 0}

    def test_unk_when_nothing_survives(self):
        result = InferenceResult({}, {(0, 1): 0.3}, 0.0, 1)
        assert generate_types(result, frozenset(), 0.5) == {0: None}

    def test_ties_break_to_smallest_label(self):
        result = InferenceResult({}, {(0, 2): 0.8, (0, 1): 0.8}, 0.0, 1)
        assert generate_types(result, frozenset(), 0.5) == {0: 1}

    def test_cycle_raises(self):
        result = InferenceResult({}, {(0, 0): 0.9}, 0.0, 1)
        with pytest.raises(OntologyError):
            generate_types(result, frozenset({(0, 1), (1, 0)}), 0.5)

    def test_no_surviving_strict_descendant_property(self):
        rng = np.random.default_rng(4)
        sub = frozenset({(0, 1), (1, 2), (3, 2)})
        from kgrefine.kg import sub_ancestors
        ancestors = sub_ancestors(sub)
        for _ in range(30):
            lbl_scores = {(0, l): round(float(rng.uniform(0, 1)), 2) for l in range(4)
                          if rng.random() < 0.8}
            result = InferenceResult({}, lbl_scores, 0.0, 1)
            chosen = generate_types(result, sub, 0.4)[0]
            if chosen is None:
                continue
            surviving = {l for (_, l), s in lbl_scores.items() if s >= 0.4}
            descendants = {l for l in surviving if chosen in ancestors.get(l, set())}
            assert not (descendants - {chosen})

    def test_types_from_labels_contract(self):
        kg = make_kg([(0, 0, 1, 0.5)],
                     labels=[(0, 0, 0.9), (0, 1, 0.95), (1, 2, 0.4)], n_labels=3)
        from dataclasses import replace
        kg = replace(kg, ontology=replace(kg.ontology, sub=frozenset({(0, 1)})))
        types = types_from_labels(kg)
        assert types[0] == 0  # child label wins over its higher-scoring parent
        assert types[1] == 2


class TestFeedbackThresholds:
    def test_paper_arithmetic_exact(self):
        partition = partition_predictions([("a", 0.8)], t1=0.5)
        partition = partition_predictions(
            [("a", 0.8), ("b", 0.2)], t1=0.5)
        assert partition.mean_p == 0.8 and partition.mean_n == 0.2
        t2, t3 = feedback_thresholds(partition, FeedbackConfig(phi1=0.5, phi2=0.75))
        assert t2 == 0.5 + 0.5 * 0.8
        assert t3 == 0.5 - 0.75 * 0.2
        assert t2 == pytest.approx(0.9, abs=1e-12)
        assert t3 == pytest.approx(0.35, abs=1e-12)

    def test_empty_positive_set(self):
        partition = partition_predictions([("a", 0.1)], t1=0.5)
        assert partition.mean_p == 0.0
        t2, _ = feedback_thresholds(partition, FeedbackConfig())
        assert t2 == 0.5

    def test_defaults_from_paper(self):
        config = FeedbackConfig()
        assert config.phi1 == 0.5 and config.phi2 == 0.75

    def test_infinite_phi_sentinels(self):
        partition = partition_predictions([("a", 0.8), ("b", 0.2)], t1=0.5)
        t2, t3 = feedback_thresholds(partition,
                                     FeedbackConfig(phi1=math.inf, phi2=math.inf))
        assert t2 == math.inf and t3 == -math.inf

    def test_no_clamping(self):
        partition = partition_predictions([("a", 0.95), ("b", 0.95)], t1=0.9)
        t2, _ = feedback_thresholds(partition, FeedbackConfig(phi1=0.5))
        assert t2 > 1.0


class TestSelectFeedback:
    def test_above_max_gives_empty_positive(self):
        fb = select_feedback([("a", 0.8)], t2=0.9, t3=0.1, iteration=1)
        assert fb.positive == () and fb.negative == ()

    def test_strict_inequalities(self):
        scored = [("a", 0.95), ("b", 0.6), ("c", 0.1)]
        fb = select_feedback(scored, t2=0.9, t3=0.35, iteration=1)
        assert fb.positive == (("a", 0.95),)
        assert fb.negative == (("c", 0.1),)

    def test_boundary_values_withheld(self):
        scored = [("a", 0.9), ("b", 0.35)]
        fb = select_feedback(scored, t2=0.9, t3=0.35, iteration=1)
        assert fb.positive == () and fb.negative == ()

    def test_disjoint_whenever_thresholds_ordered(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            scored = [(i, round(float(rng.uniform(0, 1)), 3)) for i in range(30)]
            t3 = float(rng.uniform(0, 0.5))
            t2 = float(rng.uniform(t3, 1.0))
            fb = select_feedback(scored, t2, t3, 1)
            assert not set(k for k, _ in fb.positive) & set(k for k, _ in fb.negative)

    def test_monotone_in_thresholds(self):
        rng = np.random.default_rng(6)
        scored = [(i, round(float(rng.uniform(0, 1)), 3)) for i in range(50)]
        fb_low = select_feedback(scored, t2=0.7, t3=0.3, iteration=1)
        fb_high = select_feedback(scored, t2=0.8, t3=0.2, iteration=1)
        assert len(fb_high.positive) <= len(fb_low.positive)
        assert len(fb_high.negative) <= len(fb_low.negative)

    def test_ordering_invariant_enforced(self):
        with pytest.raises(DataError):
            FeedbackEvidence(positive=(("a", 0.2),), negative=(("b", 0.5),), iteration=1)


@pytest.fixture(scope="module")
def small_benchmark():
    clean = generate_kg(SynthSpec(n_entities=80, n_facts=420, seed=5))
    return benchmark_splits(clean, NoiseSpec(seed=5), SplitSpec(seed=5),
                            completion_fraction=0.05)


def small_model_config(seed=5):
    return ModelConfig(base="complex", mode="typee", dim=12, implicit_type_dim=4,
                       explicit_type_dim=4, negatives_per_positive=2, epochs=8,
                       batch_size=128, seed=seed)


class TestRefineLoop:
    def test_single_iteration_shape(self, small_benchmark):
        train_kg, valid, test, noisy = small_benchmark
        reports, model, kg_final = refine(
            train_kg, valid, test, model_config=small_model_config(),
            feedback_config=FeedbackConfig(max_iter=1),
            compat_flags=noisy.noise_compat)
        assert len(reports) == 1
        r = reports[0]
        assert 0.0 <= r.t_best <= 1.0 and 0.0 <= r.t1 <= 1.0
        assert r.t2 >= r.t1 >= r.t3
        assert r.model_test is not None and 0.0 <= r.model_test.wf1 <= 1.0
        assert r.noise_recall_incompatible is not None

    def test_no_duplicate_keys_in_refined_kg(self, small_benchmark):
        train_kg, valid, test, _ = small_benchmark
        reports, _, kg_final = refine(
            train_kg, valid, test, model_config=small_model_config(),
            feedback_config=FeedbackConfig(max_iter=2))
        keys = [f.key for f in kg_final.facts]
        assert len(keys) == len(set(keys))

    def test_disabled_feedback_reproduces_psl_scores(self, small_benchmark):
        train_kg, valid, test, _ = small_benchmark
        config = FeedbackConfig(phi1=math.inf, phi2=math.inf, max_iter=3)
        reports, _, _ = refine(train_kg, valid, test,
                               model_config=small_model_config(), feedback_config=config)
        assert all(r.counts["feedback_positive"] == 0 for r in reports)
        assert all(r.counts["feedback_negative"] == 0 for r in reports)
        first = reports[0]
        for r in reports[1:]:
            assert r.t_best == first.t_best
            assert r.counts["psl_objective"] == pytest.approx(
                first.counts["psl_objective"], rel=1e-12)
            assert r.psl_test.to_dict() == first.psl_test.to_dict()

    def test_determinism_of_reports(self, small_benchmark):
        import json
        train_kg, valid, test, noisy = small_benchmark
        def run():
            reports, _, _ = refine(train_kg, valid, test,
                                   model_config=small_model_config(),
                                   feedback_config=FeedbackConfig(max_iter=2),
                                   compat_flags=noisy.noise_compat)
            return json.dumps([r.to_dict() for r in reports], sort_keys=True)
        assert run() == run()

    def test_size_cap_stops_early(self, small_benchmark):
        train_kg, valid, test, _ = small_benchmark
        reports, _, _ = refine(train_kg, valid, test,
                               model_config=small_model_config(),
                               feedback_config=FeedbackConfig(max_iter=4, size_cap=-1.0))
        assert len(reports) == 1
        assert reports[0].stopped_early
