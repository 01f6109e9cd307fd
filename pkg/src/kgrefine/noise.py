"""Benchmark preparation: fact corruption and synthetic extraction scores.

Converts a clean KG into a refinement benchmark by corrupting a fraction of
its facts (half of the corruptions drawn type-compatibly with the relation's
domain/range) and drawing per-fact extraction confidences from two Gaussians,
one for clean facts and one for noise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

from .errors import ConfigError, DataError
from .kg import CandidateFact, CandidateLabel, KnowledgeGraph, sub_ancestors
from .rng import substream

log = logging.getLogger(__name__)

_MAX_ATTEMPTS = 100


@dataclass(frozen=True)
class NoiseSpec:
    """Corruption fractions and the score distributions per gold class."""

    corrupt_fraction: float = 0.25
    type_compatible_fraction: float = 0.5
    clean_score_mean: float = 0.7
    clean_score_std: float = 0.2
    noise_score_mean: float = 0.3
    noise_score_std: float = 0.2
    seed: int = 0

    def validate(self) -> None:
        for name in ("corrupt_fraction", "type_compatible_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name}={v} outside [0, 1]")
        for name in ("clean_score_std", "noise_score_std"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")


def _entity_label_closure(kg: KnowledgeGraph) -> dict:
    """Entity -> set of asserted labels plus their subclass ancestors."""
    ancestors = sub_ancestors(kg.ontology.sub)
    out = {}
    for lf in kg.label_facts:
        acc = out.setdefault(lf.entity, set())
        acc.add(lf.label)
        acc |= ancestors.get(lf.label, set())
    return out


def entity_type_compatible(kg: KnowledgeGraph, entity: int, relation: int, position: str,
                           label_closure: dict | None = None) -> bool:
    """Check DOM (position='subject') or RNG (position='object') compatibility."""
    closure = label_closure if label_closure is not None else _entity_label_closure(kg)
    required = (kg.ontology.dom if position == "subject" else kg.ontology.rng).get(relation)
    if required is None:
        return False
    return required in closure.get(entity, ())


def corrupt_kg(kg: KnowledgeGraph, spec: NoiseSpec) -> KnowledgeGraph:
    """Replace round(fraction * N) facts with corrupted versions.

    N counts relation facts plus label assertions.  For the type-compatible
    share (relation facts only) the replacement entity is drawn from entities
    whose label closure satisfies the relation's DOM (subject swap) or RNG
    (object swap).  Corrupted facts get gold truth 0, the rest 1.  A corrupted
    triple never equals its original and is resampled on collision with an
    existing key (after 100 attempts the constraint is dropped and logged).
    """
    spec.validate()
    n_total = len(kg.facts) + len(kg.label_facts)
    if n_total == 0:
        if spec.corrupt_fraction > 0:
            log.warning("corrupt_kg: empty KG, nothing to corrupt")
        return replace(kg, truth={}, label_truth={}, noise_compat={})

    rng = substream(spec.seed, "noise")
    n_corrupt = round(spec.corrupt_fraction * n_total)
    order = rng.permutation(n_total)
    corrupt_set = set(order[:n_corrupt].tolist())

    # Split the corrupted relation facts into the type-compatible share and
    # the unconstrained rest; label corruptions always count as unconstrained.
    corrupt_fact_ids = [i for i in sorted(corrupt_set) if i < len(kg.facts)]
    n_compat = round(spec.type_compatible_fraction * n_corrupt)
    if n_compat > len(corrupt_fact_ids):
        log.warning("corrupt_kg: only %d relation facts among %d corruptions; "
                    "type-compatible share capped", len(corrupt_fact_ids), n_corrupt)
        n_compat = len(corrupt_fact_ids)
    compat_pick = rng.permutation(len(corrupt_fact_ids))[:n_compat]
    compat_ids = {corrupt_fact_ids[i] for i in compat_pick.tolist()}

    label_closure = _entity_label_closure(kg)
    entities_with = {}  # label -> sorted entities whose closure contains it
    for e, labs in label_closure.items():
        for l in labs:
            entities_with.setdefault(l, []).append(e)
    for l in entities_with:
        entities_with[l].sort()

    n_entities, n_relations = len(kg.entities), len(kg.relations)
    existing_fact_keys = kg.fact_keys()
    existing_label_keys = {l.key for l in kg.label_facts}

    new_facts = list(kg.facts)
    new_labels = list(kg.label_facts)
    truth, label_truth, compat_flags = {}, {}, {}

    def sample_excluding(pool_size, forbidden):
        v = int(rng.integers(pool_size))
        while v == forbidden:
            v = int(rng.integers(pool_size))
        return v

    for i in sorted(corrupt_set):
        if i < len(kg.facts):
            fact = kg.facts[i]
            s, r, o = fact.key
            corrupted = None
            compat = False

            if i in compat_ids:
                position = "subject" if rng.integers(2) == 0 else "object"
                required = (kg.ontology.dom if position == "subject" else kg.ontology.rng).get(r)
                pool = entities_with.get(required, []) if required is not None else []
                original = s if position == "subject" else o
                pool = [e for e in pool if e != original]
                if pool:
                    for _ in range(_MAX_ATTEMPTS):
                        e = pool[int(rng.integers(len(pool)))]
                        cand = (e, r, o) if position == "subject" else (s, r, e)
                        if cand not in existing_fact_keys:
                            corrupted = cand
                            compat = True
                            break
                if corrupted is None:
                    log.warning("corrupt_kg: type-compatible sampling failed for %s; "
                                "falling back to unconstrained corruption", fact.key)

            if corrupted is None:
                cand = None
                for attempt in range(_MAX_ATTEMPTS):
                    target = int(rng.integers(3))  # 0=subject, 1=relation, 2=object
                    if target == 0 and n_entities > 1:
                        cand = (sample_excluding(n_entities, s), r, o)
                    elif target == 1 and n_relations > 1:
                        cand = (s, sample_excluding(n_relations, r), o)
                    elif n_entities > 1:
                        cand = (s, r, sample_excluding(n_entities, o))
                    else:
                        continue
                    if cand not in existing_fact_keys:
                        corrupted = cand
                        break
                if corrupted is None:
                    if cand is None:
                        raise DataError("cannot corrupt facts in a single-entity, "
                                        "single-relation KG")
                    log.warning("corrupt_kg: could not avoid collisions for %s; "
                                "accepting colliding corruption", fact.key)
                    corrupted = cand

            if corrupted in existing_fact_keys:
                # Stubborn collision: merge into the existing fact and mark it noise.
                for j, other in enumerate(new_facts):
                    if other.key == corrupted:
                        new_facts[j] = replace(
                            other, confidences=other.confidences + fact.confidences)
                        break
                new_facts[i] = None
            else:
                existing_fact_keys.add(corrupted)
                new_facts[i] = CandidateFact(*corrupted, confidences=fact.confidences)
            truth[corrupted] = 0
            compat_flags[corrupted] = compat
        else:
            lf = kg.label_facts[i - len(kg.facts)]
            e, l = lf.key
            corrupted = None
            for attempt in range(_MAX_ATTEMPTS):
                if rng.integers(2) == 0 and n_entities > 1:
                    cand = (sample_excluding(n_entities, e), l)
                elif len(kg.labels) > 1:
                    cand = (e, sample_excluding(len(kg.labels), l))
                else:
                    continue
                if cand not in existing_label_keys:
                    corrupted = cand
                    break
            if corrupted is None:
                log.warning("corrupt_kg: could not corrupt label %s; keeping as noise", lf.key)
                corrupted = (e, l)
            existing_label_keys.add(corrupted)
            new_labels[i - len(kg.facts)] = CandidateLabel(*corrupted, confidences=lf.confidences)
            label_truth[corrupted] = 0

    new_facts = [f for f in new_facts if f is not None]
    for f in new_facts:
        truth.setdefault(f.key, 1)
    for l in new_labels:
        label_truth.setdefault(l.key, 1)

    out = replace(kg, facts=tuple(new_facts), label_facts=tuple(new_labels),
                  truth=truth, label_truth=label_truth, noise_compat=compat_flags)
    out.validate()
    return out


def assign_extraction_scores(kg: KnowledgeGraph, spec: NoiseSpec) -> KnowledgeGraph:
    """Replace every confidence with a Gaussian draw selected by gold truth.

    Clean facts draw from N(clean_mean, clean_std), noise from
    N(noise_mean, noise_std); draws are clamped to [0.01, 0.99].
    """
    spec.validate()
    if kg.truth is None:
        raise DataError("assign_extraction_scores requires gold truth labels")
    rng = substream(spec.seed, "scores")

    def draw(is_clean: bool) -> float:
        if is_clean:
            v = spec.clean_score_mean + spec.clean_score_std * rng.standard_normal()
        else:
            v = spec.noise_score_mean + spec.noise_score_std * rng.standard_normal()
        return min(0.99, max(0.01, float(v)))

    facts = []
    for f in kg.facts:
        if f.key not in kg.truth:
            raise DataError(f"fact {f.key} has no truth label")
        facts.append(replace(f, confidences=(("synthetic", draw(kg.truth[f.key] == 1)),)))

    labels = []
    for lf in kg.label_facts:
        if kg.label_truth is None or lf.key not in kg.label_truth:
            raise DataError(f"label assertion {lf.key} has no truth label")
        labels.append(replace(lf, confidences=(("synthetic", draw(kg.label_truth[lf.key] == 1)),)))

    return replace(kg, facts=tuple(facts), label_facts=tuple(labels))


def noise_stats(kg: KnowledgeGraph) -> dict:
    """Counts, per-class score means and the type-compatibility rate."""
    if kg.truth is None:
        raise DataError("noise_stats requires gold truth labels")
    clean_scores, noise_scores = [], []
    for f in kg.facts:
        scores = [c for _, c in f.confidences]
        (clean_scores if kg.truth.get(f.key, 1) == 1 else noise_scores).extend(scores)
    n_noise = sum(1 for v in kg.truth.values() if v == 0)
    n_label_noise = (sum(1 for v in kg.label_truth.values() if v == 0)
                     if kg.label_truth else 0)
    n_compat = sum(1 for v in (kg.noise_compat or {}).values() if v)
    total_corrupted = n_noise + n_label_noise
    return {
        "facts": len(kg.facts),
        "label_facts": len(kg.label_facts),
        "corrupted_facts": n_noise,
        "corrupted_labels": n_label_noise,
        "type_compatible": n_compat,
        "type_compatible_rate": (n_compat / total_corrupted) if total_corrupted else 0.0,
        "clean_score_mean": (sum(clean_scores) / len(clean_scores)) if clean_scores else 0.0,
        "noise_score_mean": (sum(noise_scores) / len(noise_scores)) if noise_scores else 0.0,
    }
