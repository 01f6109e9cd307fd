"""Grounding of the twelve ontological rule templates into hinge potentials.

Atoms are [0,1]-valued REL(s, r, o) and LBL(e, l) variables.  Observed
evidence (per-source candidate confidences, ontology memberships, same-entity
scores, the negative-prior constant) enters rules as fixed body values.  Each
ground rule is the soft implication ``body => head`` under Lukasiewicz
semantics, with distance-to-satisfaction max(0, body - head_value).

Grounding is lazy: starting from the candidate facts/labels (and feedback
evidence), a worklist instantiates every template whose body touches a known
atom, creating head atoms on the fly, until a fixpoint is reached.  A
negative-prior rule is then added for every free atom.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, fields

import numpy as np

from ..errors import ConfigError, DataError, UnknownReferenceError
from ..kg import KnowledgeGraph

TEMPLATES = (
    "cand_rel", "cand_lbl",
    "er_lbl", "er_rel_subj", "er_rel_obj",
    "inv", "dom", "rng", "sub", "rsub", "mut", "rmut",
    "neg_prior",
)


def lukasiewicz_body(values) -> float:
    """Lukasiewicz conjunction: max(0, sum(v) - (n - 1))."""
    values = list(values)
    if not values:
        raise ValueError("lukasiewicz_body requires a non-empty list")
    return max(0.0, sum(values) - (len(values) - 1))


@dataclass
class RuleWeights:
    """Template and per-source weights for the ground program.

    ``candidate_rel`` / ``candidate_lbl`` override the default candidate
    weight per extraction source.  ``hinge_power`` selects linear (1) or
    squared (2) distances.
    """

    candidate_rel: dict = field(default_factory=dict)
    candidate_lbl: dict = field(default_factory=dict)
    default_candidate_weight: float = 1.0
    entity_resolution: float = 1.0
    inverse: float = 1.0
    selectional_preference: float = 1.0
    subsumption: float = 1.0
    mutual_exclusion: float = 1.0
    negative_prior_weight: float = 0.05
    hinge_power: int = 1

    def w_cand_rel(self, source: str) -> float:
        return self.candidate_rel.get(source, self.default_candidate_weight)

    def w_cand_lbl(self, source: str) -> float:
        return self.candidate_lbl.get(source, self.default_candidate_weight)

    def validate(self) -> None:
        if self.hinge_power not in (1, 2):
            raise ConfigError(f"hinge_power must be 1 or 2, got {self.hinge_power}")
        numeric = ("default_candidate_weight", "entity_resolution", "inverse",
                   "selectional_preference", "subsumption", "mutual_exclusion",
                   "negative_prior_weight")
        for name in numeric:
            if getattr(self, name) < 0:
                raise ConfigError(f"weight {name} must be >= 0")
        for d in (self.candidate_rel, self.candidate_lbl):
            for source, w in d.items():
                if w < 0:
                    raise ConfigError(f"weight for source {source!r} must be >= 0")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "RuleWeights":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown weight keys: {sorted(unknown)}")
        w = cls(**data)
        w.validate()
        return w


@dataclass(frozen=True)
class Atom:
    """A REL/LBL atom; ``value`` is None for free atoms, fixed otherwise."""

    key: tuple  # ("rel", s, r, o) or ("lbl", e, l)
    value: float | None = None

    @property
    def free(self) -> bool:
        return self.value is None


class AtomStore:
    """Dense index of atoms; each (kind, args) key appears exactly once."""

    def __init__(self):
        self.keys: list[tuple] = []
        self.index: dict[tuple, int] = {}
        self.observed: dict[int, float] = {}

    def add(self, key: tuple, value: float | None = None) -> int:
        i = self.index.get(key)
        if i is None:
            i = len(self.keys)
            self.index[key] = i
            self.keys.append(key)
            if value is not None:
                self.observed[i] = value
        return i

    def is_free(self, i: int) -> bool:
        return i not in self.observed

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def n_free(self) -> int:
        return len(self.keys) - len(self.observed)


@dataclass(frozen=True)
class GroundRule:
    """One weighted hinge potential.

    ``observed`` holds the fixed body terms as ((tag, value), ...);
    ``body_atoms`` the store indices of variable body atoms.  The head is a
    store atom, negated for mutual-exclusion style rules and the negative
    prior.
    """

    template: str
    observed: tuple
    body_atoms: tuple
    head: int
    negated_head: bool
    weight: float

    def canonical(self, store: AtomStore) -> tuple:
        """Store-independent identity used for multiset comparisons."""
        return (
            self.template,
            self.observed,
            tuple(store.keys[i] for i in self.body_atoms),
            store.keys[self.head],
            self.negated_head,
            self.weight,
        )


def hinge_distance(rule: GroundRule, values) -> float:
    """Distance to satisfaction of a ground rule under an assignment.

    ``values`` maps store index -> value (dict or array).  The body is the
    Lukasiewicz conjunction of observed and free body terms; the head value
    is flipped for negated heads.
    """
    terms = [v for _, v in rule.observed] + [float(values[i]) for i in rule.body_atoms]
    body = lukasiewicz_body(terms)
    head_val = float(values[rule.head])
    if rule.negated_head:
        head_val = 1.0 - head_val
    return max(0.0, body - head_val)


@dataclass
class PackedProgram:
    """Flat-array view of a ground program for the solver kernels.

    Each rule's distance is max(0, sum(coef * x[idx]) + bias) over free-atom
    variables; the objective is sum(weight * distance ** power).
    """

    n_vars: int
    var_of_atom: np.ndarray  # atom index -> variable slot, -1 if observed
    indptr: np.ndarray
    var_idx: np.ndarray
    coefs: np.ndarray
    bias: np.ndarray
    weights: np.ndarray
    power: int

    @property
    def n_rules(self) -> int:
        return len(self.bias)

    def objective(self, x: np.ndarray) -> float:
        z = np.empty(self.n_rules)
        for j in range(self.n_rules):
            lo, hi = self.indptr[j], self.indptr[j + 1]
            z[j] = self.coefs[lo:hi] @ x[self.var_idx[lo:hi]] + self.bias[j]
        d = np.maximum(z, 0.0)
        return float(self.weights @ (d if self.power == 1 else d * d))


@dataclass
class GroundProgram:
    """Instantiated rules over a shared atom store."""

    store: AtomStore
    rules: list
    hinge_power: int = 1

    def free_atom_keys(self):
        return [k for i, k in enumerate(self.store.keys) if self.store.is_free(i)]

    def canonical_rules(self):
        return sorted(r.canonical(self.store) for r in self.rules)

    def pack(self) -> PackedProgram:
        store = self.store
        var_of_atom = np.full(len(store), -1, dtype=np.int64)
        slot = 0
        for i in range(len(store)):
            if store.is_free(i):
                var_of_atom[i] = slot
                slot += 1

        indptr = [0]
        var_idx: list[int] = []
        coefs: list[float] = []
        bias: list[float] = []
        weights: list[float] = []
        for rule in self.rules:
            n_terms = len(rule.observed) + len(rule.body_atoms)
            c = sum(v for _, v in rule.observed) - (n_terms - 1)
            row: dict[int, float] = {}
            for a in rule.body_atoms:
                if store.is_free(a):
                    row[var_of_atom[a]] = row.get(var_of_atom[a], 0.0) + 1.0
                else:
                    c += store.observed[a]
            sign = 1.0 if rule.negated_head else -1.0
            if rule.negated_head:
                c -= 1.0
            if store.is_free(rule.head):
                v = var_of_atom[rule.head]
                row[v] = row.get(v, 0.0) + sign
            else:
                c += sign * store.observed[rule.head]
            for v in sorted(row):
                if row[v] != 0.0:
                    var_idx.append(v)
                    coefs.append(row[v])
            indptr.append(len(var_idx))
            bias.append(c)
            weights.append(rule.weight)

        return PackedProgram(
            n_vars=slot,
            var_of_atom=var_of_atom,
            indptr=np.asarray(indptr, dtype=np.int64),
            var_idx=np.asarray(var_idx, dtype=np.int64),
            coefs=np.asarray(coefs, dtype=np.float64),
            bias=np.asarray(bias, dtype=np.float64),
            weights=np.asarray(weights, dtype=np.float64),
            power=self.hinge_power,
        )


def _pair_partners(pairs):
    """partner lists per member from normalized unordered pairs, sorted."""
    out: dict[int, list] = {}
    for a, b in sorted(pairs):
        out.setdefault(a, []).append((b, (a, b)))
        if a != b:
            out.setdefault(b, []).append((a, (a, b)))
    return out


def ground(
    kg: KnowledgeGraph,
    weights: RuleWeights,
    feedback=None,
    feedback_weight: float = 1.0,
) -> GroundProgram:
    """Lazily ground the rule templates against a KG (plus feedback evidence).

    Feedback evidence is treated exactly like an extra candidate source: each
    fed-back triple contributes one candidate rule whose observed body value
    is its predicted score, weighted by ``feedback_weight``.
    """
    weights.validate()
    onto = kg.ontology
    n_e, n_r, n_l = len(kg.entities), len(kg.relations), len(kg.labels)

    def check_entity(e):
        if not 0 <= e < n_e:
            raise UnknownReferenceError(f"entity id {e} out of range")

    for r, l in list(onto.dom.items()) + list(onto.rng.items()):
        if not 0 <= r < n_r:
            raise UnknownReferenceError(f"relation id {r} out of range in ontology")
        if not 0 <= l < n_l:
            raise UnknownReferenceError(f"label id {l} out of range in ontology")

    inv_partners = _pair_partners(onto.inv)
    rmut_partners = _pair_partners(onto.rmut)
    mut_partners = _pair_partners(onto.mut)
    rsub_by_rel: dict[int, list] = {}
    for r, s in sorted(onto.rsub):
        rsub_by_rel.setdefault(r, []).append(s)
    sub_by_child: dict[int, list] = {}
    for c, p in sorted(onto.sub):
        sub_by_child.setdefault(c, []).append(p)
    sameent_by_entity: dict[int, list] = {}
    for (a, b), score in sorted(onto.sameent.items()):
        sameent_by_entity.setdefault(a, []).append((b, score, (a, b)))
        sameent_by_entity.setdefault(b, []).append((a, score, (a, b)))

    store = AtomStore()
    rules: list[GroundRule] = []
    queue: deque[int] = deque()

    def add_atom(key) -> int:
        n_before = len(store)
        i = store.add(key)
        if len(store) > n_before:
            queue.append(i)
        return i

    def emit(template, observed, body, head_key, negated, weight):
        if weight <= 0.0:
            return
        head = add_atom(head_key)
        rules.append(GroundRule(template, tuple(observed), tuple(body), head, negated, weight))

    # Seed the store with candidate evidence.
    for f in kg.facts:
        check_entity(f.subject)
        check_entity(f.object)
        key = ("rel", f.subject, f.relation, f.object)
        for source, conf in f.confidences:
            emit("cand_rel", [(("candrel", source) + f.key, conf)], [], key, False,
                 weights.w_cand_rel(source))
    for lf in kg.label_facts:
        check_entity(lf.entity)
        key = ("lbl", lf.entity, lf.label)
        for source, conf in lf.confidences:
            emit("cand_lbl", [(("candlbl", source) + lf.key, conf)], [], key, False,
                 weights.w_cand_lbl(source))

    if feedback is not None:
        source = f"feedback-iter-{feedback.iteration}"
        for (s, r, o), score in list(feedback.positive) + list(feedback.negative):
            emit("cand_rel", [(("candrel", source, s, r, o), score)], [],
                 ("rel", s, r, o), False, feedback_weight)

    # Worklist: each atom fires every template matching it, creating head
    # atoms that are processed in turn.
    while queue:
        i = queue.popleft()
        key = store.keys[i]
        if key[0] == "rel":
            _, s, r, o = key
            if r in onto.dom:
                emit("dom", [(("dom", r, onto.dom[r]), 1.0)], [i],
                     ("lbl", s, onto.dom[r]), False, weights.selectional_preference)
            if r in onto.rng:
                emit("rng", [(("rng", r, onto.rng[r]), 1.0)], [i],
                     ("lbl", o, onto.rng[r]), False, weights.selectional_preference)
            for sup in rsub_by_rel.get(r, ()):
                emit("rsub", [(("rsub", r, sup), 1.0)], [i],
                     ("rel", s, sup, o), False, weights.subsumption)
            for partner, pair in rmut_partners.get(r, ()):
                emit("rmut", [(("rmut",) + pair, 1.0)], [i],
                     ("rel", s, partner, o), True, weights.mutual_exclusion)
            for partner, pair in inv_partners.get(r, ()):
                emit("inv", [(("inv",) + pair, 1.0)], [i],
                     ("rel", o, partner, s), False, weights.inverse)
            for other, score, pair in sameent_by_entity.get(s, ()):
                emit("er_rel_subj", [(("sameent",) + pair, score)], [i],
                     ("rel", other, r, o), False, weights.entity_resolution)
            for other, score, pair in sameent_by_entity.get(o, ()):
                emit("er_rel_obj", [(("sameent",) + pair, score)], [i],
                     ("rel", s, r, other), False, weights.entity_resolution)
        else:
            _, e, l = key
            for parent in sub_by_child.get(l, ()):
                emit("sub", [(("sub", l, parent), 1.0)], [i],
                     ("lbl", e, parent), False, weights.subsumption)
            for partner, pair in mut_partners.get(l, ()):
                emit("mut", [(("mut",) + pair, 1.0)], [i],
                     ("lbl", e, partner), True, weights.mutual_exclusion)
            for other, score, pair in sameent_by_entity.get(e, ()):
                emit("er_lbl", [(("sameent",) + pair, score)], [i],
                     ("lbl", other, l), False, weights.entity_resolution)

    if weights.negative_prior_weight > 0.0:
        for i in range(len(store)):
            if store.is_free(i):
                rules.append(GroundRule("neg_prior", ((("prior",), 1.0),), (), i, True,
                                        weights.negative_prior_weight))

    return GroundProgram(store=store, rules=rules, hinge_power=weights.hinge_power)
