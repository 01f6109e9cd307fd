import numpy as np
import pytest

from kgrefine.kg import CandidateFact, CandidateLabel, Interner, KnowledgeGraph, Ontology
from kgrefine.psl.ground import AtomStore, GroundProgram, GroundRule


def make_kg(facts, labels=(), n_entities=None, n_relations=None, n_labels=None,
            ontology=None, truth=None):
    """Build a KG from integer-id fact triples.

    ``facts``: iterable of (s, r, o, conf) or (s, r, o, [(source, conf), ...]).
    ``labels``: iterable of (e, l, conf).
    """
    fact_objs = []
    for item in facts:
        s, r, o, conf = item
        confs = tuple(conf) if isinstance(conf, (list, tuple)) else (("src", float(conf)),)
        fact_objs.append(CandidateFact(s, r, o, confs))
    label_objs = [CandidateLabel(e, l, (("src", float(c)),)) for e, l, c in labels]

    max_e = max([f.subject for f in fact_objs] + [f.object for f in fact_objs]
                + [l.entity for l in label_objs] + [-1])
    max_r = max([f.relation for f in fact_objs] + [-1])
    max_l = max([l.label for l in label_objs] + [-1])
    n_entities = n_entities if n_entities is not None else max_e + 1
    n_relations = n_relations if n_relations is not None else max_r + 1
    n_labels = n_labels if n_labels is not None else max_l + 1

    kg = KnowledgeGraph(
        Interner([f"e{i}" for i in range(n_entities)]),
        Interner([f"r{i}" for i in range(n_relations)]),
        Interner([f"L{i}" for i in range(n_labels)]),
        tuple(fact_objs), tuple(label_objs),
        ontology or Ontology(), truth=truth)
    return kg


@pytest.fixture
def toy_full_coverage_kg():
    """Five facts plus one label assertion exercising all twelve templates.

    Entities a=0, b=1, c=2, d=3; relations r=0, s=1, t=2, u=3;
    labels L1=0, L2=1, P=2.
    """
    ontology = Ontology(
        dom={0: 0},              # dom(r) = L1
        rng={0: 1},              # rng(r) = L2
        sub=frozenset({(0, 2)}),      # L1 < P
        rsub=frozenset({(0, 2)}),     # r < t
        mut=frozenset({(0, 1)}),      # L1 x L2
        rmut=frozenset({(0, 3)}),     # r x u
        inv=frozenset({(0, 1)}),      # r inverse-of s
        sameent={(0, 1): 0.7},        # a ~ b
    )
    return make_kg(
        facts=[(0, 0, 2, 0.9),   # (a, r, c)
               (3, 0, 0, 0.8),   # (d, r, a)
               (2, 3, 3, 0.6),   # (c, u, d)
               (1, 1, 3, 0.7),   # (b, s, d)
               (0, 2, 3, 0.5)],  # (a, t, d)
        labels=[(0, 0, 0.9)],    # (a, L1)
        n_entities=4, n_relations=4, n_labels=3,
        ontology=ontology)


def random_ground_program(rng, n_atoms, n_rules, power, max_weight=2.0,
                          max_body=1, prior=0.05):
    """Random packed-program builder shared by solver tests."""
    store = AtomStore()
    for i in range(n_atoms):
        store.add(("rel", i, 0, i))
    rules = []
    for j in range(n_rules):
        nb = min(int(rng.integers(0, max_body + 1)), n_atoms)
        body = tuple(rng.choice(n_atoms, size=nb, replace=False).tolist())
        rules.append(GroundRule(
            "cand_rel", ((("obs", j), float(rng.uniform(0.1, 1.0))),),
            body, int(rng.integers(n_atoms)), bool(rng.integers(2)),
            float(rng.uniform(0.05, max_weight))))
    for i in range(n_atoms):
        rules.append(GroundRule("neg_prior", ((("prior",), 1.0),), (), i, True, prior))
    return GroundProgram(store, rules, power)
