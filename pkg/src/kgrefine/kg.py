"""Graded knowledge-graph data model, TSV I/O, splitting and SAMEENT generation.

A knowledge graph holds candidate relation facts and candidate type-label
assertions, each carrying one confidence value per extraction source, plus
the ontology components used by the rule engine (domain/range of relations,
label and relation subsumption, mutual exclusion, inverses and same-entity
evidence).  Graphs are treated as immutable after construction and are safe
to share read-only.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field, replace

from .errors import ConfigError, DataError, OntologyError, ParseError, UnknownReferenceError
from .rng import substream
from .util import parse_unit_float, read_tsv, write_atomic

ONTOLOGY_COMPONENTS = ("dom", "rng", "sub", "rsub", "mut", "rmut", "inv", "sameent")


class Interner:
    """Bijective string <-> dense-int mapping; ids assigned in first-seen order."""

    __slots__ = ("_ids", "_names")

    def __init__(self, names=()):
        self._ids = {}
        self._names = []
        for name in names:
            self.intern(name)

    def intern(self, name: str) -> int:
        i = self._ids.get(name)
        if i is None:
            i = len(self._names)
            self._ids[name] = i
            self._names.append(name)
        return i

    def id(self, name: str) -> int:
        try:
            return self._ids[name]
        except KeyError:
            raise UnknownReferenceError(f"unknown name: {name!r}") from None

    def name(self, i: int) -> str:
        return self._names[i]

    def names(self):
        return tuple(self._names)

    def __contains__(self, name) -> bool:
        return name in self._ids

    def __len__(self) -> int:
        return len(self._names)

    def __eq__(self, other) -> bool:
        return isinstance(other, Interner) and self._names == other._names

    def copy(self) -> "Interner":
        return Interner(self._names)


@dataclass(frozen=True)
class CandidateFact:
    """A graded (subject, relation, object) triple with per-source confidences."""

    subject: int
    relation: int
    object: int
    confidences: tuple  # ((source, value), ...), every value in [0, 1]

    @property
    def key(self):
        return (self.subject, self.relation, self.object)


@dataclass(frozen=True)
class CandidateLabel:
    """A graded (entity, type label) assertion with per-source confidences."""

    entity: int
    label: int
    confidences: tuple

    @property
    def key(self):
        return (self.entity, self.label)


@dataclass(frozen=True)
class Ontology:
    """Schema-level components; pair sets are stored sorted for determinism.

    ``mut``/``rmut``/``inv``/``sameent`` pairs are unordered and normalized to
    (min, max).  ``sub``/``rsub`` are directed (child, parent).
    """

    dom: dict = field(default_factory=dict)  # relation -> label
    rng: dict = field(default_factory=dict)  # relation -> label
    sub: frozenset = frozenset()  # (child label, parent label)
    rsub: frozenset = frozenset()  # (relation, super relation)
    mut: frozenset = frozenset()  # unordered label pairs
    rmut: frozenset = frozenset()  # unordered relation pairs
    inv: frozenset = frozenset()  # unordered relation pairs
    sameent: dict = field(default_factory=dict)  # (e1, e2) min-max ordered -> score

    def component(self, name: str):
        if name not in ONTOLOGY_COMPONENTS:
            raise ConfigError(f"unknown ontology component: {name!r}")
        return getattr(self, name)

    def replace_component(self, name: str, value) -> "Ontology":
        if name not in ONTOLOGY_COMPONENTS:
            raise ConfigError(f"unknown ontology component: {name!r}")
        return replace(self, **{name: value})

    @staticmethod
    def empty_value(name: str):
        return {} if name in ("dom", "rng", "sameent") else frozenset()

    def counts(self) -> dict:
        return {name: len(self.component(name)) for name in ONTOLOGY_COMPONENTS}

    def validate(self) -> None:
        for child, parent in self.sub:
            if child == parent:
                raise OntologyError(f"sub self-loop on label {child}")
        for a, b in itertools.chain(self.mut, self.rmut):
            if a == b:
                raise OntologyError(f"mutual-exclusion pair with equal members: {a}")
        for pair, score in self.sameent.items():
            if not 0.0 <= score <= 1.0:
                raise OntologyError(f"sameent score {score} outside [0, 1] for {pair}")
            if pair[0] == pair[1]:
                raise OntologyError(f"sameent pair with equal members: {pair}")


def _norm_pair(a, b):
    return (a, b) if a <= b else (b, a)


@dataclass
class KnowledgeGraph:
    """Immutable graded KG: interned ids, facts, label assertions, ontology.

    ``truth`` / ``label_truth`` optionally carry gold noise labels
    (1 = correct, 0 = noise) keyed by fact/label key.  ``noise_compat`` flags
    which corrupted facts were sampled type-compatibly.
    """

    entities: Interner
    relations: Interner
    labels: Interner
    facts: tuple = ()
    label_facts: tuple = ()
    ontology: Ontology = field(default_factory=Ontology)
    truth: dict | None = None
    label_truth: dict | None = None
    noise_compat: dict | None = None

    def fact_index(self) -> dict:
        return {f.key: f for f in self.facts}

    def fact_keys(self) -> set:
        return {f.key for f in self.facts}

    def label_index(self) -> dict:
        return {l.key: l for l in self.label_facts}

    def validate(self) -> None:
        seen = set()
        for f in self.facts:
            if f.key in seen:
                raise DataError(f"duplicate fact key {f.key}")
            seen.add(f.key)
            if not f.confidences:
                raise DataError(f"fact {f.key} has no confidences")
            for _, c in f.confidences:
                if not 0.0 <= c <= 1.0:
                    raise DataError(f"fact {f.key} confidence {c} outside [0, 1]")
        seen = set()
        for l in self.label_facts:
            if l.key in seen:
                raise DataError(f"duplicate label key {l.key}")
            seen.add(l.key)
            for _, c in l.confidences:
                if not 0.0 <= c <= 1.0:
                    raise DataError(f"label {l.key} confidence {c} outside [0, 1]")
        self.ontology.validate()


@dataclass(frozen=True)
class SplitSpec:
    """Train/valid/test fractions (must sum to 1) and the shuffle seed."""

    train: float = 0.8
    valid: float = 0.1
    test: float = 0.1
    seed: int = 0

    def validate(self) -> None:
        for name, frac in (("train", self.train), ("valid", self.valid), ("test", self.test)):
            if frac <= 0:
                raise ConfigError(f"split fraction {name}={frac} must be > 0")
        total = self.train + self.valid + self.test
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"split fractions sum to {total}, expected 1")


@dataclass(frozen=True)
class EvalSet:
    """Facts paired with gold noise labels (1 = correct, 0 = noise)."""

    items: tuple  # ((CandidateFact, gold), ...)

    def keys(self):
        return [f.key for f, _ in self.items]

    def gold(self) -> dict:
        return {f.key: g for f, g in self.items}

    def __len__(self) -> int:
        return len(self.items)


# ---------------------------------------------------------------------------
# Loading


def _merge_rows(rows, make):
    """Merge duplicate keys by appending confidence sources in file order."""
    order = []
    merged = {}
    for key, conf in rows:
        if key in merged:
            merged[key].append(conf)
        else:
            merged[key] = [conf]
            order.append(key)
    return tuple(make(key, tuple(merged[key])) for key in order)


def load_kg(
    triples_path,
    labels_path=None,
    ontology_dir=None,
    typeof_relation: str | None = None,
) -> KnowledgeGraph:
    """Load a KG from the TSV formats.

    triples.tsv rows are ``subject relation object confidence source``;
    labels.tsv rows are ``entity label confidence source``.  Rows whose
    relation equals ``typeof_relation`` are routed to label assertions.
    Duplicate (s, r, o) rows merge their confidence lists.
    """
    entities, relations, labels = Interner(), Interner(), Interner()
    fact_rows, label_rows = [], []

    for lineno, cols in read_tsv(triples_path, 5):
        s_name, r_name, o_name, conf_text, source = cols
        conf = parse_unit_float(conf_text, triples_path, lineno, "confidence")
        if typeof_relation is not None and r_name == typeof_relation:
            label_rows.append(((entities.intern(s_name), labels.intern(o_name)), (source, conf)))
        else:
            key = (entities.intern(s_name), relations.intern(r_name), entities.intern(o_name))
            fact_rows.append((key, (source, conf)))

    if labels_path is not None and os.path.exists(os.fspath(labels_path)):
        for lineno, cols in read_tsv(labels_path, 4):
            e_name, l_name, conf_text, source = cols
            conf = parse_unit_float(conf_text, labels_path, lineno, "confidence")
            label_rows.append(((entities.intern(e_name), labels.intern(l_name)), (source, conf)))

    facts = _merge_rows(fact_rows, lambda k, c: CandidateFact(k[0], k[1], k[2], c))
    label_facts = _merge_rows(label_rows, lambda k, c: CandidateLabel(k[0], k[1], c))

    ontology = Ontology()
    if ontology_dir is not None:
        ontology = load_ontology(ontology_dir, entities, relations, labels)

    kg = KnowledgeGraph(entities, relations, labels, facts, label_facts, ontology)
    kg.validate()
    return kg


def load_ontology(ontology_dir, entities: Interner, relations: Interner, labels: Interner) -> Ontology:
    """Load one TSV per component from a directory; missing files mean empty.

    Relations referenced by ontology files must already be interned (i.e.
    appear in the triples); labels are interned on the fly.
    """
    ontology_dir = os.fspath(ontology_dir)

    def path(name):
        return os.path.join(ontology_dir, name + ".tsv")

    def known_relation(name, where, lineno):
        if name not in relations:
            raise UnknownReferenceError(f"{where}:{lineno}: unknown relation {name!r}")
        return relations.id(name)

    dom, rng = {}, {}
    for target, fname in ((dom, "dom"), (rng, "rng")):
        if not os.path.exists(path(fname)):
            continue
        for lineno, (r_name, l_name) in read_tsv(path(fname), 2):
            r = known_relation(r_name, path(fname), lineno)
            l = labels.intern(l_name)
            if r in target and target[r] != l:
                raise ParseError(f"{path(fname)}:{lineno}: conflicting {fname} for {r_name!r}")
            target[r] = l

    sub = set()
    if os.path.exists(path("sub")):
        for lineno, (c_name, p_name) in read_tsv(path("sub"), 2):
            child, parent = labels.intern(c_name), labels.intern(p_name)
            if child == parent:
                raise ParseError(f"{path('sub')}:{lineno}: self-loop on {c_name!r}")
            sub.add((child, parent))

    rsub = set()
    if os.path.exists(path("rsub")):
        for lineno, (r_name, s_name) in read_tsv(path("rsub"), 2):
            rsub.add((known_relation(r_name, path("rsub"), lineno),
                      known_relation(s_name, path("rsub"), lineno)))

    mut = set()
    if os.path.exists(path("mut")):
        for lineno, (a_name, b_name) in read_tsv(path("mut"), 2):
            a, b = labels.intern(a_name), labels.intern(b_name)
            if a == b:
                raise ParseError(f"{path('mut')}:{lineno}: pair with equal members {a_name!r}")
            mut.add(_norm_pair(a, b))

    rmut = set()
    if os.path.exists(path("rmut")):
        for lineno, (a_name, b_name) in read_tsv(path("rmut"), 2):
            a = known_relation(a_name, path("rmut"), lineno)
            b = known_relation(b_name, path("rmut"), lineno)
            if a == b:
                raise ParseError(f"{path('rmut')}:{lineno}: pair with equal members {a_name!r}")
            rmut.add(_norm_pair(a, b))

    inv = set()
    if os.path.exists(path("inv")):
        for lineno, (r_name, s_name) in read_tsv(path("inv"), 2):
            inv.add(_norm_pair(known_relation(r_name, path("inv"), lineno),
                               known_relation(s_name, path("inv"), lineno)))

    sameent = {}
    if os.path.exists(path("sameent")):
        for lineno, (a_name, b_name, score_text) in read_tsv(path("sameent"), 3):
            for name in (a_name, b_name):
                if name not in entities:
                    raise UnknownReferenceError(
                        f"{path('sameent')}:{lineno}: unknown entity {name!r}")
            score = parse_unit_float(score_text, path("sameent"), lineno, "score")
            pair = _norm_pair(entities.id(a_name), entities.id(b_name))
            if pair[0] == pair[1]:
                raise ParseError(f"{path('sameent')}:{lineno}: pair with equal members")
            sameent[pair] = score

    onto = Ontology(dom, rng, frozenset(sub), frozenset(rsub), frozenset(mut),
                    frozenset(rmut), frozenset(inv), sameent)
    onto.validate()
    return onto


def load_truth(path, kg: KnowledgeGraph) -> dict:
    """Load gold fact labels: ``subject relation object {0|1}`` per row."""
    truth = {}
    for lineno, (s, r, o, v) in read_tsv(path, 4):
        key = (kg.entities.id(s), kg.relations.id(r), kg.entities.id(o))
        if v not in ("0", "1"):
            raise ParseError(f"{path}:{lineno}: truth value must be 0 or 1, got {v!r}")
        truth[key] = int(v)
    return truth


def load_label_truth(path, kg: KnowledgeGraph) -> dict:
    """Load gold label-assertion truths: ``entity label {0|1}`` per row."""
    truth = {}
    for lineno, (e, l, v) in read_tsv(path, 3):
        if v not in ("0", "1"):
            raise ParseError(f"{path}:{lineno}: truth value must be 0 or 1, got {v!r}")
        truth[(kg.entities.id(e), kg.labels.id(l))] = int(v)
    return truth


# ---------------------------------------------------------------------------
# Writing


def write_kg(kg: KnowledgeGraph, out_dir) -> dict:
    """Write triples.tsv, labels.tsv, ontology/ and any truth files.

    Returns the mapping of logical names to written paths.  Files are written
    atomically; re-loading reproduces an equal KG (same interning order).
    """
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    ent, rel, lab = kg.entities.name, kg.relations.name, kg.labels.name

    lines = []
    for f in kg.facts:
        for source, conf in f.confidences:
            lines.append(f"{ent(f.subject)}\t{rel(f.relation)}\t{ent(f.object)}\t{conf!r}\t{source}")
    paths["triples"] = os.path.join(out_dir, "triples.tsv")
    write_atomic(paths["triples"], "\n".join(lines) + ("\n" if lines else ""))

    lines = []
    for l in kg.label_facts:
        for source, conf in l.confidences:
            lines.append(f"{ent(l.entity)}\t{lab(l.label)}\t{conf!r}\t{source}")
    paths["labels"] = os.path.join(out_dir, "labels.tsv")
    write_atomic(paths["labels"], "\n".join(lines) + ("\n" if lines else ""))

    onto_dir = os.path.join(out_dir, "ontology")
    os.makedirs(onto_dir, exist_ok=True)
    o = kg.ontology

    def dump(name, rows):
        paths[name] = os.path.join(onto_dir, name + ".tsv")
        write_atomic(paths[name], "\n".join(rows) + ("\n" if rows else ""))

    dump("dom", [f"{rel(r)}\t{lab(l)}" for r, l in sorted(o.dom.items())])
    dump("rng", [f"{rel(r)}\t{lab(l)}" for r, l in sorted(o.rng.items())])
    dump("sub", [f"{lab(c)}\t{lab(p)}" for c, p in sorted(o.sub)])
    dump("rsub", [f"{rel(r)}\t{rel(s)}" for r, s in sorted(o.rsub)])
    dump("mut", [f"{lab(a)}\t{lab(b)}" for a, b in sorted(o.mut)])
    dump("rmut", [f"{rel(a)}\t{rel(b)}" for a, b in sorted(o.rmut)])
    dump("inv", [f"{rel(a)}\t{rel(b)}" for a, b in sorted(o.inv)])
    dump("sameent", [f"{ent(a)}\t{ent(b)}\t{s!r}" for (a, b), s in sorted(o.sameent.items())])

    if kg.truth is not None:
        rows = [f"{ent(s)}\t{rel(r)}\t{ent(ob)}\t{v}" for (s, r, ob), v in
                ((f.key, kg.truth[f.key]) for f in kg.facts if f.key in kg.truth)]
        paths["truth"] = os.path.join(out_dir, "truth.tsv")
        write_atomic(paths["truth"], "\n".join(rows) + ("\n" if rows else ""))

    if kg.label_truth is not None:
        rows = [f"{ent(l.entity)}\t{lab(l.label)}\t{kg.label_truth[l.key]}"
                for l in kg.label_facts if l.key in kg.label_truth]
        paths["label_truth"] = os.path.join(out_dir, "label_truth.tsv")
        write_atomic(paths["label_truth"], "\n".join(rows) + ("\n" if rows else ""))

    if kg.noise_compat is not None:
        rows = [f"{ent(s)}\t{rel(r)}\t{ent(ob)}\t{int(flag)}"
                for (s, r, ob), flag in sorted(kg.noise_compat.items())]
        paths["compat"] = os.path.join(out_dir, "compat.tsv")
        write_atomic(paths["compat"], "\n".join(rows) + ("\n" if rows else ""))

    return paths


def load_compat_flags(path, kg: KnowledgeGraph) -> dict:
    flags = {}
    for lineno, (s, r, o, v) in read_tsv(path, 4):
        key = (kg.entities.id(s), kg.relations.id(r), kg.entities.id(o))
        flags[key] = bool(int(v))
    return flags


# ---------------------------------------------------------------------------
# Splitting


def split_kg(kg: KnowledgeGraph, spec: SplitSpec):
    """Partition facts into (train KG, valid EvalSet, test EvalSet).

    The partition is a seeded shuffle at the fact level; labels and ontology
    stay with the train KG.  Requires gold truth (eval sets need labels).
    """
    spec.validate()
    if kg.truth is None:
        raise DataError("split_kg requires gold truth labels on the KG")

    n = len(kg.facts)
    rng = substream(spec.seed, "split")
    perm = rng.permutation(n)
    n_test = round(spec.test * n)
    n_valid = min(round(spec.valid * n), n - n_test)
    test_idx = sorted(perm[:n_test].tolist())
    valid_idx = sorted(perm[n_test:n_test + n_valid].tolist())
    train_idx = sorted(perm[n_test + n_valid:].tolist())

    def eval_set(indices):
        items = []
        for i in indices:
            f = kg.facts[i]
            if f.key not in kg.truth:
                raise DataError(f"fact {f.key} has no truth label")
            items.append((f, kg.truth[f.key]))
        return EvalSet(tuple(items))

    train_facts = tuple(kg.facts[i] for i in train_idx)
    train_truth = {f.key: kg.truth[f.key] for f in train_facts}
    train = replace(kg, facts=train_facts, truth=train_truth)
    return train, eval_set(valid_idx), eval_set(test_idx)


def split_balanced_halves(items: EvalSet, seed: int):
    """Split an eval set into two halves preserving class balance within 1."""
    rng = substream(seed, "balanced-split")
    first, second = [], []
    for cls in (1, 0):
        members = [item for item in items.items if item[1] == cls]
        order = rng.permutation(len(members))
        for slot, i in enumerate(order.tolist()):
            (first if slot % 2 == 0 else second).append(members[i])
    return EvalSet(tuple(first)), EvalSet(tuple(second))


# ---------------------------------------------------------------------------
# SAMEENT generation


def _relation_profiles(kg: KnowledgeGraph):
    headrels, tailrels = {}, {}
    for f in kg.facts:
        headrels.setdefault(f.subject, set()).add(f.relation)
        tailrels.setdefault(f.object, set()).add(f.relation)
    return headrels, tailrels


def _jaccard(a: set, b: set) -> float:
    if not a and not b:
        return 0.0
    inter = len(a & b)
    if inter == 0:
        return 0.0
    return inter / len(a | b)


def jaccard_sameent(kg: KnowledgeGraph, e1: int, e2: int) -> float:
    """Average of head-position and tail-position relation-set Jaccard scores."""
    for e in (e1, e2):
        if not 0 <= e < len(kg.entities):
            raise DataError(f"entity id {e} out of range")
    headrels, tailrels = _relation_profiles(kg)
    empty = set()
    return 0.5 * (_jaccard(headrels.get(e1, empty), headrels.get(e2, empty))
                  + _jaccard(tailrels.get(e1, empty), tailrels.get(e2, empty)))


def generate_sameent(kg: KnowledgeGraph, k: int):
    """Top-k positively scored entity pairs by relation-profile similarity.

    Candidate pairs are restricted to entities sharing at least one relation
    in the same position (other pairs score 0).  Ties break on
    (min id, max id).  Returns ((e1, e2, score), ...) with e1 < e2.
    """
    if k < 0:
        raise ConfigError(f"k must be >= 0, got {k}")
    if k == 0:
        return ()

    headrels, tailrels = _relation_profiles(kg)
    by_rel_subj, by_rel_obj = {}, {}
    for f in kg.facts:
        by_rel_subj.setdefault(f.relation, set()).add(f.subject)
        by_rel_obj.setdefault(f.relation, set()).add(f.object)

    candidates = set()
    for groups in (by_rel_subj, by_rel_obj):
        for members in groups.values():
            for a, b in itertools.combinations(sorted(members), 2):
                candidates.add((a, b))

    empty = set()
    scored = []
    for a, b in candidates:
        score = 0.5 * (_jaccard(headrels.get(a, empty), headrels.get(b, empty))
                       + _jaccard(tailrels.get(a, empty), tailrels.get(b, empty)))
        if score > 0.0:
            scored.append((a, b, score))
    scored.sort(key=lambda t: (-t[2], t[0], t[1]))
    return tuple(scored[:k])


def with_sameent(kg: KnowledgeGraph, pairs) -> KnowledgeGraph:
    """Return a copy of the KG whose ontology carries the given sameent pairs."""
    sameent = {_norm_pair(a, b): score for a, b, score in pairs}
    return replace(kg, ontology=replace(kg.ontology, sameent=sameent))


# ---------------------------------------------------------------------------
# Subclass hierarchy helpers


def sub_ancestors(sub_pairs) -> dict:
    """Strict ancestor sets per label from (child, parent) pairs.

    Raises OntologyError if the hierarchy contains a cycle.
    """
    parents = {}
    for child, parent in sorted(sub_pairs):
        parents.setdefault(child, []).append(parent)

    ancestors = {}

    def walk(label, stack):
        if label in ancestors:
            return ancestors[label]
        if label in stack:
            raise OntologyError(f"cycle in subclass hierarchy at label {label}")
        stack.add(label)
        acc = set()
        for p in parents.get(label, ()):
            acc.add(p)
            acc |= walk(p, stack)
        stack.discard(label)
        ancestors[label] = acc
        return acc

    for label in list(parents):
        walk(label, set())
    return ancestors
