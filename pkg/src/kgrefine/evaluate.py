"""Metrics, baselines and the ablation/heatmap harness.

The headline metric is weighted F1: per-class F1 scores weighted by the gold
class fractions, wF1 = w1 * F1(positive) + w0 * F1(negative).  A class absent
from the gold labels contributes F1 = 0 with weight 0.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .embed import ModelConfig, make_training_set, predict, train
from .errors import ConfigError, DataError
from .kg import EvalSet, KnowledgeGraph, Ontology, ONTOLOGY_COMPONENTS

GRID_ALPHAS = tuple(round(a * 0.1, 1) for a in range(11))


@dataclass(frozen=True)
class EvalReport:
    """Per-class F1, class weights and the confusion counts behind them."""

    pos_f1: float
    neg_f1: float
    wf1: float
    w1: float
    w0: float
    tp: int
    fp: int
    tn: int
    fn: int

    def to_dict(self) -> dict:
        return {
            "pos_f1": self.pos_f1, "neg_f1": self.neg_f1, "wf1": self.wf1,
            "w1": self.w1, "w0": self.w0,
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
        }


@dataclass(frozen=True)
class AlphaConfig:
    """Mixing coefficient for the score-combination baseline."""

    alpha: float = 0.5

    def validate(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha={self.alpha} outside [0, 1]")


def weighted_f1_from_dicts(predictions: dict, gold: dict) -> EvalReport:
    """Weighted F1 from hard predictions and gold labels keyed by item."""
    if not gold:
        raise DataError("weighted_f1 requires a non-empty eval set")
    tp = fp = tn = fn = 0
    for key, label in gold.items():
        if key not in predictions:
            raise DataError(f"prediction missing for item {key}")
        pred = predictions[key]
        if label == 1:
            if pred == 1:
                tp += 1
            else:
                fn += 1
        else:
            if pred == 1:
                fp += 1
            else:
                tn += 1

    pos_f1 = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) > 0 else 0.0
    neg_f1 = 2 * tn / (2 * tn + fn + fp) if (2 * tn + fn + fp) > 0 else 0.0
    n = len(gold)
    w1 = (tp + fn) / n
    w0 = (tn + fp) / n
    return EvalReport(pos_f1, neg_f1, w1 * pos_f1 + w0 * neg_f1, w1, w0, tp, fp, tn, fn)


def weighted_f1(predictions: dict, gold: EvalSet) -> EvalReport:
    """Weighted F1 from hard predictions against a gold eval set.

    Every gold item must be covered by ``predictions``.  F1 of a class with
    zero precision+recall is 0 by convention.
    """
    return weighted_f1_from_dicts(predictions, {f.key: g for f, g in gold.items})


def alpha_combine(psl_score: float, model_score: float, cfg: AlphaConfig) -> float:
    """Convex combination alpha * psl + (1 - alpha) * model."""
    cfg.validate()
    return cfg.alpha * psl_score + (1.0 - cfg.alpha) * model_score


def tune_alpha(psl_scores: dict, model_scores: dict, valid: EvalSet) -> AlphaConfig:
    """Pick alpha on the {0.0, 0.1, ..., 1.0} grid maximizing validation wF1.

    For each alpha the classification threshold is tuned on the validation
    set; ties break toward the smallest alpha.
    """
    from .pipeline import classify, tune_threshold

    gold = valid.gold()
    keys = valid.keys()
    for k in keys:
        if k not in psl_scores or k not in model_scores:
            raise DataError(f"score maps do not cover item {k}")
    best_alpha, best_wf1 = None, -1.0
    for alpha in GRID_ALPHAS:
        cfg = AlphaConfig(alpha)
        combined = [(k, alpha_combine(psl_scores[k], model_scores[k], cfg)) for k in keys]
        t = tune_threshold(combined, gold)
        report = weighted_f1(classify(dict(combined), keys, t), valid)
        if report.wf1 > best_wf1:
            best_alpha, best_wf1 = alpha, report.wf1
    return AlphaConfig(best_alpha)


def run_embedding_baseline(train_kg: KnowledgeGraph, valid: EvalSet, test: EvalSet,
                           config: ModelConfig, types: dict | None = None):
    """Train a model on the (noisy) train facts; threshold on validation.

    Returns (valid report, test report, model, threshold).
    """
    from .pipeline import classify, tune_threshold

    train_set = make_training_set(f.key for f in train_kg.facts)
    model, _ = train(train_set, types, config, len(train_kg.entities),
                     len(train_kg.relations), len(train_kg.labels))
    valid_scores = dict(zip(valid.keys(), predict(model, valid.keys())))
    t1 = tune_threshold(list(valid_scores.items()), valid.gold())
    test_scores = dict(zip(test.keys(), predict(model, test.keys())))
    valid_report = weighted_f1(classify(valid_scores, valid.keys(), t1), valid)
    test_report = weighted_f1(classify(test_scores, test.keys(), t1), test)
    return valid_report, test_report, model, t1


def two_stage_ensemble(train_kg: KnowledgeGraph, valid: EvalSet, test: EvalSet,
                       base1_config: ModelConfig, base2_config: ModelConfig,
                       stage1_threshold: float | None = None) -> EvalReport:
    """Stage-1 model filters the KG, stage-2 trains on the survivors.

    ``stage1_threshold=None`` tunes the stage-1 cutoff on validation.  An
    empty filtered KG is a training error (DataError).
    """
    from .pipeline import tune_threshold

    _, _, model1, t1 = run_embedding_baseline(train_kg, valid, test, base1_config)
    if stage1_threshold is not None:
        t1 = stage1_threshold
    keys = [f.key for f in train_kg.facts]
    scores = predict(model1, keys)
    kept = tuple(f for f, s in zip(train_kg.facts, scores) if s >= t1)
    filtered = replace(train_kg, facts=kept)
    _, test_report, _, _ = run_embedding_baseline(filtered, valid, test, base2_config)
    return test_report


def ablate_ontology(ontology: Ontology, mode: str, component: str | None = None) -> Ontology:
    """Empty one component (``without``), all but one (``only``), all
    (``none``), or return the ontology unchanged (``all``)."""
    if mode == "all":
        return ontology
    if mode == "none":
        out = ontology
        for name in ONTOLOGY_COMPONENTS:
            out = out.replace_component(name, Ontology.empty_value(name))
        return out
    if mode not in ("without", "only"):
        raise ConfigError(f"unknown ablation mode {mode!r}")
    if component is None or component.lower() not in ONTOLOGY_COMPONENTS:
        raise ConfigError(f"unknown ontology component {component!r}")
    component = component.lower()
    if mode == "without":
        return ontology.replace_component(component, Ontology.empty_value(component))
    out = ontology
    for name in ONTOLOGY_COMPONENTS:
        if name != component:
            out = out.replace_component(name, Ontology.empty_value(name))
    return out


def noise_recall(predictions: dict, gold: EvalSet, compat_flags: dict):
    """Negative-class recall split by type compatibility of the noise.

    Returns (recall on type-compatible noise, recall on type-incompatible
    noise); an empty partition yields 0.0.
    """
    rejected = {True: 0, False: 0}
    totals = {True: 0, False: 0}
    for fact, label in gold.items:
        if label != 0:
            continue
        key = fact.key
        if key not in compat_flags:
            raise DataError(f"compatibility flag missing for noise item {key}")
        if key not in predictions:
            raise DataError(f"prediction missing for item {key}")
        flag = bool(compat_flags[key])
        totals[flag] += 1
        if predictions[key] == 0:
            rejected[flag] += 1
    rc = rejected[True] / totals[True] if totals[True] else 0.0
    ri = rejected[False] / totals[False] if totals[False] else 0.0
    return rc, ri


def size_normalized(kg_now: KnowledgeGraph, kg_original: KnowledgeGraph) -> float:
    """(new size - original size) / original size, over fact counts."""
    if len(kg_original.facts) == 0:
        raise DataError("size_normalized requires a non-empty original KG")
    return (len(kg_now.facts) - len(kg_original.facts)) / len(kg_original.facts)


DEFAULT_HEATMAP_GRID = (0, 1, 2, 5, 10, 20, 50, 100)


def threshold_heatmap(scored, gold: dict, kg: KnowledgeGraph, weights,
                      grid_pos=DEFAULT_HEATMAP_GRID, grid_neg=DEFAULT_HEATMAP_GRID,
                      solver_config=None, iteration: int = 1):
    """Feedback-size study: one rule-stage rerun per (pos%, neg%) cell.

    For each cell the top-p% / bottom-n% of ``scored`` are fed back, the
    rule stage reruns once, the threshold re-tunes against ``gold`` and the
    cell records (pos_pct, neg_pct, wf1, normalized_size).
    """
    from .pipeline import FeedbackEvidence, classify, filter_kg, tune_threshold
    from .psl import infer

    for p in list(grid_pos) + list(grid_neg):
        if not 0 <= p <= 100:
            raise ConfigError(f"grid percentage {p} outside [0, 100]")

    ranked = sorted(scored, key=lambda kv: (-kv[1], kv[0]))
    n = len(ranked)
    gold_items = sorted(gold)
    baseline_t = None
    rows = []
    for p in grid_pos:
        for q in grid_neg:
            n_pos = round(p / 100.0 * n)
            n_neg = round(q / 100.0 * n)
            pos = ranked[:n_pos]
            neg = ranked[max(n - n_neg, n_pos):]
            if pos and neg:
                cut = min(s for _, s in pos)
                neg = [kv for kv in neg if kv[1] < cut]
            feedback = FeedbackEvidence(tuple(pos), tuple(neg), iteration)
            result = infer(kg, weights, feedback=feedback, config=solver_config)
            t = tune_threshold([(k, result.rel_scores.get(k, 0.0)) for k in gold_items], gold)
            report = weighted_f1_from_dicts(classify(result.rel_scores, gold_items, t), gold)
            # Size is measured at a fixed threshold (tuned once without
            # feedback) so each cell isolates the feedback contribution.
            if baseline_t is None:
                base = infer(kg, weights, config=solver_config)
                baseline_t = tune_threshold(
                    [(k, base.rel_scores.get(k, 0.0)) for k in gold_items], gold)
            kept = filter_kg(kg, result, baseline_t, iteration)
            size = (len(kept.facts) - len(kg.facts)) / len(kg.facts)
            rows.append((p, q, report.wf1, size))
    return rows
