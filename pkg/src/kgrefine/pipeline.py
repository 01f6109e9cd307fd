"""The iterative refinement loop: rule inference co-trained with embeddings.

Each iteration (1) runs MAP inference over the original extraction evidence
plus accumulated feedback, (2) tunes the classification threshold on the
validation set, (3) filters the KG (existing facts and newly inferred ones),
(4) contracts type predictions through the subclass hierarchy, (5) trains a
type-gated embedding model on the kept facts, (6) tunes the model threshold,
(7) derives the feedback thresholds t2/t3, (8) selects high-confidence
positive and negative predictions as feedback for the next round, and emits
a per-iteration report with per-class F1, weighted F1, KG size and
noise-recall metrics.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .embed import ModelConfig, make_training_set, predict, train
from .errors import ConfigError, DataError
from .evaluate import EvalReport, noise_recall, weighted_f1
from .kg import CandidateFact, EvalSet, KnowledgeGraph, sub_ancestors
from .psl import RuleWeights, SolverConfig, infer

log = logging.getLogger(__name__)

THRESHOLD_GRID = np.arange(1001) / 1000.0


@dataclass(frozen=True)
class FeedbackConfig:
    """Feedback thresholds offsets, weight, iteration budget and size cap."""

    phi1: float = 0.5
    phi2: float = 0.75
    feedback_weight: float = 1.0
    max_iter: int = 6
    size_cap: float = 3.0

    def validate(self) -> None:
        if self.phi1 < 0 or self.phi2 < 0:
            raise ConfigError("phi1 and phi2 must be >= 0")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if self.feedback_weight <= 0:
            raise ConfigError("feedback_weight must be > 0")


@dataclass(frozen=True)
class PredictionPartition:
    """Scored triples split at t1 into positives P1 and negatives N1."""

    t1: float
    positive: tuple  # ((triple, score), ...), score >= t1
    negative: tuple
    mean_p: float
    mean_n: float


@dataclass(frozen=True)
class FeedbackEvidence:
    """High-confidence predictions handed back to the rule stage."""

    positive: tuple  # ((triple, score), ...)
    negative: tuple
    iteration: int

    def __post_init__(self):
        if self.positive and self.negative:
            lo = min(s for _, s in self.positive)
            hi = max(s for _, s in self.negative)
            if not lo > hi:
                raise DataError("positive feedback scores must exceed negative ones")


@dataclass
class IterationReport:
    iteration: int
    t_best: float
    t1: float
    t2: float
    t3: float
    psl_valid: EvalReport = None
    psl_test: EvalReport = None
    model_valid: EvalReport = None
    model_test: EvalReport = None
    normalized_size: float = 0.0
    noise_recall_compatible: float | None = None
    noise_recall_incompatible: float | None = None
    counts: dict = field(default_factory=dict)
    stopped_early: bool = False

    def to_dict(self) -> dict:
        def rep(r):
            return r.to_dict() if r is not None else None

        return {
            "iteration": self.iteration,
            "t_best": self.t_best,
            "t1": self.t1,
            "t2": self.t2,
            "t3": self.t3,
            "psl": {"valid": rep(self.psl_valid), "test": rep(self.psl_test)},
            "model": {"valid": rep(self.model_valid), "test": rep(self.model_test)},
            "normalized_size": self.normalized_size,
            "noise_recall_compatible": self.noise_recall_compatible,
            "noise_recall_incompatible": self.noise_recall_incompatible,
            "counts": self.counts,
            "stopped_early": self.stopped_early,
        }


# ---------------------------------------------------------------------------
# Threshold tuning and classification


def classify(scores: dict, keys, threshold: float) -> dict:
    """score >= threshold counts as positive, everywhere in the pipeline."""
    return {k: int(scores.get(k, 0.0) >= threshold) for k in keys}


def tune_threshold(scored, gold: dict) -> float:
    """Grid-scan thresholds {0.000, 0.001, ..., 1.000} maximizing weighted F1.

    ``scored`` is a list of (item, score); ``gold`` maps every item to its
    class.  Ties break toward the smallest threshold.
    """
    if not scored:
        raise DataError("tune_threshold requires a non-empty score list")
    items = [item for item, _ in scored]
    for item in items:
        if item not in gold:
            raise DataError(f"item {item} missing from gold labels")
    scores = np.array([s for _, s in scored], dtype=np.float64)
    labels = np.array([gold[item] for item in items], dtype=bool)

    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    pred = scores[None, :] >= THRESHOLD_GRID[:, None]  # (1001, N)
    tp = (pred & labels).sum(axis=1).astype(np.float64)
    fp = (pred & ~labels).sum(axis=1).astype(np.float64)
    fn = n_pos - tp
    tn = n_neg - fp
    pos_f1 = np.divide(2 * tp, 2 * tp + fp + fn, out=np.zeros(len(tp)),
                       where=(2 * tp + fp + fn) > 0)
    neg_f1 = np.divide(2 * tn, 2 * tn + fn + fp, out=np.zeros(len(tn)),
                       where=(2 * tn + fn + fp) > 0)
    w1 = n_pos / len(labels)
    w0 = n_neg / len(labels)
    wf1 = w1 * pos_f1 + w0 * neg_f1
    return float(THRESHOLD_GRID[int(np.argmax(wf1))])


# ---------------------------------------------------------------------------
# KG filtering and type generation


def filter_kg(kg: KnowledgeGraph, result, t_best: float, iteration: int = 1,
              exclude_keys=frozenset()) -> KnowledgeGraph:
    """Keep facts scoring >= t_best; adopt newly inferred facts above it.

    Inferred facts enter with their inferred score as confidence under the
    source ``psl-iter-<iteration>``.  Label assertions are filtered by their
    inferred scores as well.  ``exclude_keys`` (e.g. eval-set facts grounded
    only for scoring) are never adopted.
    """
    kept = []
    for f in kg.facts:
        if f.key not in result.rel_scores:
            raise DataError(f"inference result does not cover fact {f.key}")
        if result.rel_scores[f.key] >= t_best:
            kept.append(f)
    existing = kg.fact_keys()
    source = f"psl-iter-{iteration}"
    for key in result.rel_scores:
        if key in existing or key in exclude_keys:
            continue
        score = result.rel_scores[key]
        if score >= t_best:
            kept.append(CandidateFact(*key, confidences=((source, score),)))

    labels = tuple(l for l in kg.label_facts
                   if result.lbl_scores.get(l.key, 1.0) >= t_best)
    kept_keys = {f.key for f in kept}
    truth = ({k: v for k, v in kg.truth.items() if k in kept_keys}
             if kg.truth is not None else None)
    return replace(kg, facts=tuple(kept), label_facts=labels, truth=truth)


def contract_types(entity_label_scores: dict, sub, t_best: float) -> dict:
    """Pick one most-specific label per entity from thresholded scores.

    Among labels scoring >= t_best, strict subclass ancestors of other
    surviving labels are discarded; the highest-scoring remainder wins, ties
    to the smallest label id.  Entities with no survivor map to None (UNK).
    """
    ancestors = sub_ancestors(sub)
    out = {}
    for entity, label_scores in entity_label_scores.items():
        surviving = {l: s for l, s in label_scores.items() if s >= t_best}
        if not surviving:
            out[entity] = None
            continue
        drop = set()
        for l in surviving:
            drop |= (ancestors.get(l, set()) & surviving.keys()) - {l}
        remaining = [l for l in surviving if l not in drop]
        remaining.sort(key=lambda l: (-surviving[l], l))
        out[entity] = remaining[0]
    return out


def generate_types(result, sub, t_best: float) -> dict:
    """Entity -> most-specific high-confidence label from inferred scores."""
    per_entity: dict = {}
    for (e, l), score in result.lbl_scores.items():
        per_entity.setdefault(e, {})[l] = score
    return contract_types(per_entity, sub, t_best)


def types_from_labels(kg: KnowledgeGraph) -> dict:
    """Type assignment straight from candidate label assertions (no inference)."""
    per_entity: dict = {}
    for lf in kg.label_facts:
        best = max(c for _, c in lf.confidences)
        per_entity.setdefault(lf.entity, {})[lf.label] = best
    return contract_types(per_entity, kg.ontology.sub, 0.0)


# ---------------------------------------------------------------------------
# Feedback selection


def partition_predictions(scored, t1: float) -> PredictionPartition:
    positive = tuple((k, s) for k, s in scored if s >= t1)
    negative = tuple((k, s) for k, s in scored if s < t1)
    mean_p = sum(s for _, s in positive) / len(positive) if positive else 0.0
    mean_n = sum(s for _, s in negative) / len(negative) if negative else 0.0
    return PredictionPartition(t1, positive, negative, mean_p, mean_n)


def feedback_thresholds(partition: PredictionPartition, config: FeedbackConfig):
    """t2 = t1 + phi1 * mean(P1), t3 = t1 - phi2 * mean(N1); no clamping."""

    def offset(phi, mean):
        if mean == 0.0:
            return 0.0  # avoid inf * 0 with sentinel phis
        return phi * mean

    t2 = partition.t1 + offset(config.phi1, partition.mean_p)
    t3 = partition.t1 - offset(config.phi2, partition.mean_n)
    return t2, t3


def select_feedback(scored, t2: float, t3: float, iteration: int) -> FeedbackEvidence:
    """Strictly above t2 goes back as positive, strictly below t3 as negative."""
    positive = tuple((k, s) for k, s in scored if s > t2)
    negative = tuple((k, s) for k, s in scored if s < t3)
    return FeedbackEvidence(positive, negative, iteration)


# ---------------------------------------------------------------------------
# The loop


def _facts_with_feedback(kg: KnowledgeGraph, eval_facts, feedback_state: dict):
    """PSL input facts: original evidence + eval candidates + feedback sources.

    Eval items without extraction evidence (empty confidences, e.g. held-out
    benchmark facts) are skipped: the rule stage may only reach them through
    inference.
    """
    facts = []
    feedback_left = dict(feedback_state)
    for f in list(kg.facts) + list(eval_facts):
        if not f.confidences and f.key not in feedback_left:
            continue
        if f.key in feedback_left:
            score, iteration = feedback_left.pop(f.key)
            f = replace(f, confidences=f.confidences + ((f"feedback-iter-{iteration}", score),))
        facts.append(f)
    for key in feedback_left:
        score, iteration = feedback_left[key]
        facts.append(CandidateFact(*key, confidences=((f"feedback-iter-{iteration}", score),)))
    return tuple(facts)


def _evaluate_stage(scores: dict, threshold: float, eval_set: EvalSet) -> EvalReport:
    preds = classify(scores, eval_set.keys(), threshold)
    return weighted_f1(preds, eval_set)


def refine(
    train_kg: KnowledgeGraph,
    valid: EvalSet,
    test: EvalSet,
    weights: RuleWeights | None = None,
    model_config: ModelConfig | None = None,
    feedback_config: FeedbackConfig | None = None,
    solver_config: SolverConfig | None = None,
    compat_flags: dict | None = None,
    artifact_sink=None,
):
    """Run the full co-training loop; returns (reports, final model, final KG).

    The rule stage always sees the original extraction evidence (train facts
    plus the eval candidates, which are scored but never adopted or trained
    on) together with the accumulated feedback, where the latest fed-back
    score per triple wins.  ``artifact_sink(iteration, result, feedback)`` is
    invoked once per iteration when given (used by the CLI to dump
    per-iteration inferred/feedback TSVs).
    """
    weights = weights or RuleWeights()
    model_config = model_config or ModelConfig()
    feedback_config = feedback_config or FeedbackConfig()
    feedback_config.validate()

    eval_facts = [f for f, _ in valid.items] + [f for f, _ in test.items]
    eval_keys = {f.key for f in eval_facts}
    valid_gold = valid.gold()
    original_size = len(train_kg.facts)
    if original_size == 0:
        raise DataError("refinement needs a non-empty training KG")

    n_labels = len(train_kg.labels)
    feedback_state: dict = {}
    reports = []
    model = None
    kg_clean = train_kg

    for iteration in range(1, feedback_config.max_iter + 1):
        psl_weights = replace(
            weights,
            candidate_rel={**weights.candidate_rel,
                           **{f"feedback-iter-{i}": feedback_config.feedback_weight
                              for i in range(1, iteration)}},
        )
        psl_input = replace(train_kg,
                            facts=_facts_with_feedback(train_kg, eval_facts, feedback_state),
                            truth=None)
        result = infer(psl_input, psl_weights, config=solver_config)

        t_best = tune_threshold([(k, result.rel_scores.get(k, 0.0)) for k in valid.keys()],
                                valid_gold)
        kg_clean = filter_kg(replace(train_kg, facts=_facts_with_feedback(train_kg, (), feedback_state)),
                             result, t_best, iteration, exclude_keys=eval_keys)
        types = generate_types(result, train_kg.ontology.sub, t_best)

        train_set = make_training_set(f.key for f in kg_clean.facts)
        model, _losses = train(train_set, types, model_config,
                               len(train_kg.entities), len(train_kg.relations), n_labels)

        valid_triples = valid.keys()
        model_valid_scores = dict(zip(valid_triples, predict(model, valid_triples)))
        t1 = tune_threshold(list(model_valid_scores.items()), valid_gold)

        universe = [f.key for f in kg_clean.facts]
        universe_scores = list(zip(universe, predict(model, universe)))
        partition = partition_predictions(universe_scores, t1)
        t2, t3 = feedback_thresholds(partition, feedback_config)
        feedback = select_feedback(universe_scores, t2, t3, iteration)
        for key, score in feedback.positive + feedback.negative:
            feedback_state[key] = (score, iteration)

        test_triples = test.keys()
        model_test_scores = dict(zip(test_triples, predict(model, test_triples)))
        normalized_size = (len(kg_clean.facts) - original_size) / original_size

        report = IterationReport(
            iteration=iteration, t_best=t_best, t1=t1, t2=t2, t3=t3,
            psl_valid=_evaluate_stage(result.rel_scores, t_best, valid),
            psl_test=_evaluate_stage(result.rel_scores, t_best, test),
            model_valid=_evaluate_stage(model_valid_scores, t1, valid),
            model_test=_evaluate_stage(model_test_scores, t1, test),
            normalized_size=normalized_size,
            counts={
                "facts_kept": sum(1 for f in kg_clean.facts
                                  if not f.confidences[0][0].startswith("psl-iter-")),
                "facts_inferred": sum(1 for f in kg_clean.facts
                                      if f.confidences[0][0].startswith("psl-iter-")),
                "feedback_positive": len(feedback.positive),
                "feedback_negative": len(feedback.negative),
                "psl_objective": result.objective,
                "psl_iterations": result.iterations,
            },
        )
        if compat_flags is not None:
            preds = classify(model_test_scores, test.keys(), t1)
            rc, ri = noise_recall(preds, test, compat_flags)
            report.noise_recall_compatible = rc
            report.noise_recall_incompatible = ri
        reports.append(report)
        if artifact_sink is not None:
            artifact_sink(iteration, result, feedback)

        if normalized_size > feedback_config.size_cap:
            log.warning("normalized KG size %.2f exceeded cap %.2f at iteration %d; stopping",
                        normalized_size, feedback_config.size_cap, iteration)
            report.stopped_early = True
            break

    return reports, model, kg_clean
