"""Synthetic benchmark generator with a fully covered ontology.

Builds a clean KG over a small hand-written schema (people, organizations
and places with a two-level label hierarchy) whose relations all carry
domain/range constraints, plus subclass, mutual-exclusion, inverse,
relation-subsumption and relation-exclusion components, so every rule
template has something to ground against.  Facts are sampled consistently
with the schema; entity labels are asserted at full confidence and the gold
truth marks everything correct.  Pair with ``noise.corrupt_kg`` and
``noise.assign_extraction_scores`` to produce a refinement benchmark.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import ConfigError
from .kg import (
    CandidateFact,
    CandidateLabel,
    EvalSet,
    Interner,
    KnowledgeGraph,
    Ontology,
    SplitSpec,
    _norm_pair,
    split_kg,
)
from .noise import NoiseSpec, assign_extraction_scores, corrupt_kg
from .rng import substream

#: label -> parent (None for roots)
_LABELS = {
    "person": None,
    "athlete": "person",
    "artist": "person",
    "organization": None,
    "team": "organization",
    "company": "organization",
    "place": None,
    "city": "place",
}

#: relation -> (domain label, range label)
_RELATIONS = {
    "works_for": ("person", "organization"),
    "employs": ("organization", "person"),
    "member_of": ("person", "organization"),
    "plays_for": ("athlete", "team"),
    "located_in": ("organization", "place"),
    "born_in": ("person", "city"),
    "died_in": ("person", "city"),
    "leads": ("person", "organization"),
    "rival_of": ("team", "team"),
    "founded": ("person", "company"),
}

_INV = (("works_for", "employs"),)
_RSUB = (("plays_for", "member_of"), ("works_for", "member_of"))
_RMUT = (("born_in", "died_in"),)
#: labels that may never co-occur on one entity
_MUT = (
    ("person", "organization"), ("person", "place"), ("organization", "place"),
    ("athlete", "artist"), ("team", "company"), ("athlete", "organization"),
    ("artist", "organization"), ("team", "place"), ("company", "place"),
    ("city", "person"), ("city", "organization"),
)


@dataclass(frozen=True)
class SynthSpec:
    """Size knobs for the generated benchmark.

    Entities are partitioned into communities and facts mostly connect
    entities of the same community (``community_concentration``), giving
    embedding models a learnable neighborhood structure the way real KGs
    have, on top of the type constraints.
    """

    n_entities: int = 200
    n_facts: int = 2000
    inverse_pair_rate: float = 0.3
    n_communities: int = 4
    community_concentration: float = 0.9
    seed: int = 0

    def validate(self) -> None:
        if self.n_entities < len(_LABELS):
            raise ConfigError(f"need at least {len(_LABELS)} entities")
        if self.n_facts < 1:
            raise ConfigError("n_facts must be >= 1")
        if not 0.0 <= self.inverse_pair_rate <= 1.0:
            raise ConfigError("inverse_pair_rate must lie in [0, 1]")
        if self.n_communities < 1:
            raise ConfigError("n_communities must be >= 1")
        if not 0.0 <= self.community_concentration <= 1.0:
            raise ConfigError("community_concentration must lie in [0, 1]")


def generate_kg(spec: SynthSpec = SynthSpec()) -> KnowledgeGraph:
    """Deterministically generate a clean, schema-consistent KG."""
    spec.validate()
    rng = substream(spec.seed, "synth")

    entities = Interner()
    relations = Interner(sorted(_RELATIONS))
    labels = Interner(sorted(_LABELS))

    # Assign each entity a most-specific label, leaves preferred.
    leaves = sorted(l for l in _LABELS if l not in {p for p in _LABELS.values() if p})
    roots = sorted(l for l in _LABELS if _LABELS[l] is None)
    entity_label = {}
    for i in range(spec.n_entities):
        if i < len(leaves):  # guarantee every leaf label is inhabited
            name = leaves[i]
        else:
            name = leaves[int(rng.integers(len(leaves)))] if rng.random() < 0.8 \
                else roots[int(rng.integers(len(roots)))]
        e = entities.intern(f"e{i:04d}")
        entity_label[e] = labels.id(name)

    ancestors = {}
    for name, parent in _LABELS.items():
        acc = set()
        p = parent
        while p is not None:
            acc.add(labels.id(p))
            p = _LABELS[p]
        ancestors[labels.id(name)] = acc

    def closure(e):
        return {entity_label[e]} | ancestors[entity_label[e]]

    community = {e: int(rng.integers(spec.n_communities)) for e in sorted(entity_label)}

    by_label = {}
    by_label_comm = {}
    for e, l in entity_label.items():
        for lab in {l} | ancestors[l]:
            by_label.setdefault(lab, []).append(e)
            by_label_comm.setdefault((lab, community[e]), []).append(e)
    for members in by_label.values():
        members.sort()
    for members in by_label_comm.values():
        members.sort()

    rel_names = sorted(_RELATIONS)
    inv_map = dict(_INV)
    rmut_pairs = {_norm_pair(relations.id(a), relations.id(b)) for a, b in _RMUT}
    rmut_partners = {}
    for a, b in rmut_pairs:
        rmut_partners.setdefault(a, []).append(b)
        rmut_partners.setdefault(b, []).append(a)

    facts = {}
    attempts = 0
    while len(facts) < spec.n_facts and attempts < spec.n_facts * 50:
        attempts += 1
        r_name = rel_names[int(rng.integers(len(rel_names)))]
        dom_l, rng_l = _RELATIONS[r_name]
        subjects = by_label.get(labels.id(dom_l), [])
        if not subjects:
            continue
        s = subjects[int(rng.integers(len(subjects)))]
        objects = by_label.get(labels.id(rng_l), [])
        if rng.random() < spec.community_concentration:
            objects = by_label_comm.get((labels.id(rng_l), community[s]), objects)
        if not objects:
            continue
        o = objects[int(rng.integers(len(objects)))]
        if s == o:
            continue
        r = relations.id(r_name)
        key = (s, r, o)
        if key in facts:
            continue
        # Respect relation mutual exclusion in the clean data.
        if any((s, other, o) in facts for other in rmut_partners.get(r, ())):
            continue
        facts[key] = CandidateFact(s, r, o, (("synthetic", 1.0),))
        if len(facts) < spec.n_facts and r_name in inv_map and rng.random() < spec.inverse_pair_rate:
            inv_key = (o, relations.id(inv_map[r_name]), s)
            if inv_key not in facts:
                facts[inv_key] = CandidateFact(*inv_key, confidences=(("synthetic", 1.0),))

    label_facts = tuple(CandidateLabel(e, entity_label[e], (("synthetic", 1.0),))
                        for e in sorted(entity_label))

    ontology = Ontology(
        dom={relations.id(r): labels.id(d) for r, (d, _) in _RELATIONS.items()},
        rng={relations.id(r): labels.id(g) for r, (_, g) in _RELATIONS.items()},
        sub=frozenset((labels.id(c), labels.id(p)) for c, p in _LABELS.items() if p),
        rsub=frozenset((relations.id(a), relations.id(b)) for a, b in _RSUB),
        mut=frozenset(_norm_pair(labels.id(a), labels.id(b)) for a, b in _MUT),
        rmut=frozenset(rmut_pairs),
        inv=frozenset(_norm_pair(relations.id(a), relations.id(b)) for a, b in _INV),
        sameent={},
    )

    fact_tuple = tuple(facts.values())
    kg = KnowledgeGraph(entities, relations, labels, fact_tuple, label_facts, ontology,
                        truth={f.key: 1 for f in fact_tuple},
                        label_truth={l.key: 1 for l in label_facts})
    kg.validate()
    return kg


def benchmark_splits(clean_kg: KnowledgeGraph, noise_spec: NoiseSpec, split_spec: SplitSpec,
                     completion_fraction: float = 0.1):
    """Assemble a full refinement benchmark from a clean KG.

    A random share of the clean facts is held out entirely (no extraction
    evidence) and appended to the valid/test sets as correct facts, mirroring
    benchmark test collections whose triples are absent from the noisy input
    KG: the rule stage can only reach them through inference chains while
    embedding models may generalize to them.  The remaining facts are
    corrupted, given synthetic extraction scores and split.

    Returns (train_kg, valid, test, noisy_kg); ``noisy_kg.noise_compat``
    carries the type-compatibility flags.
    """
    if not 0.0 <= completion_fraction < 1.0:
        raise ConfigError("completion_fraction must lie in [0, 1)")
    rng = substream(noise_spec.seed, "holdout")
    n = len(clean_kg.facts)
    n_hold = round(completion_fraction * n)
    holdout_idx = set(rng.permutation(n)[:n_hold].tolist())
    remaining = tuple(f for i, f in enumerate(clean_kg.facts) if i not in holdout_idx)
    held_out = [clean_kg.facts[i] for i in sorted(holdout_idx)]

    base = replace(clean_kg, facts=remaining,
                   truth={f.key: 1 for f in remaining})
    noisy = assign_extraction_scores(corrupt_kg(base, noise_spec), noise_spec)
    train_kg, valid, test = split_kg(noisy, split_spec)

    # Held-out facts carry no extraction evidence (empty confidences): the
    # rule stage must reach them through inference, never as candidates.
    extra_valid, extra_test = [], []
    for i, f in enumerate(held_out):
        item = (replace(f, confidences=()), 1)
        (extra_valid if i % 2 == 0 else extra_test).append(item)
    valid = EvalSet(valid.items + tuple(extra_valid))
    test = EvalSet(test.items + tuple(extra_test))
    return train_kg, valid, test, noisy
