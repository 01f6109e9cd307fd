import os

import numpy as np
import pytest

from kgrefine.errors import ConfigError, DataError, ParseError, UnknownReferenceError
from kgrefine.kg import (
    EvalSet,
    SplitSpec,
    generate_sameent,
    jaccard_sameent,
    load_kg,
    load_truth,
    split_balanced_halves,
    split_kg,
    sub_ancestors,
    write_kg,
)
from conftest import make_kg


def write(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


@pytest.fixture
def kg_dir(tmp_path):
    write(tmp_path / "triples.tsv",
          "# a comment line\n"
          "alice\tworks_for\tacme\t0.9\tsrcA\n"
          "bob\tworks_for\tacme\t0.8\tsrcA\n"
          "alice\tlives_in\tberlin\t0.7\tsrcB\n")
    onto = tmp_path / "ontology"
    onto.mkdir()
    return tmp_path


class TestLoad:
    def test_minimal_load(self, kg_dir):
        kg = load_kg(kg_dir / "triples.tsv", None, kg_dir / "ontology")
        assert len(kg.facts) == 3
        assert all(len(v) == 0 for v in
                   (kg.ontology.sub, kg.ontology.rsub, kg.ontology.mut,
                    kg.ontology.rmut, kg.ontology.inv))
        assert kg.ontology.dom == {} and kg.ontology.rng == {} and kg.ontology.sameent == {}

    def test_duplicate_rows_merge_confidences(self, tmp_path):
        write(tmp_path / "t.tsv",
              "a\tr\tb\t0.9\tsrcA\n"
              "a\tr\tb\t0.6\tsrcB\n")
        kg = load_kg(tmp_path / "t.tsv")
        assert len(kg.facts) == 1
        assert kg.facts[0].confidences == (("srcA", 0.9), ("srcB", 0.6))

    def test_typeof_relation_routes_to_labels(self, tmp_path):
        write(tmp_path / "t.tsv",
              "a\tr\tb\t0.9\tsrc\n"
              "a\ttypeOf\tperson\t0.8\tsrc\n")
        kg = load_kg(tmp_path / "t.tsv", typeof_relation="typeOf")
        assert len(kg.facts) == 1
        assert len(kg.label_facts) == 1
        assert kg.labels.name(kg.label_facts[0].label) == "person"
        assert "typeOf" not in kg.relations

    def test_wrong_column_count_names_line(self, tmp_path):
        write(tmp_path / "t.tsv", "a\tr\tb\t0.9\tsrc\na\tr\tb\n")
        with pytest.raises(ParseError, match=r"t\.tsv:2"):
            load_kg(tmp_path / "t.tsv")

    def test_confidence_out_of_range(self, tmp_path):
        write(tmp_path / "t.tsv", "a\tr\tb\t1.5\tsrc\n")
        with pytest.raises(ParseError, match="outside"):
            load_kg(tmp_path / "t.tsv")

    def test_unknown_relation_in_ontology(self, kg_dir):
        write(kg_dir / "ontology" / "dom.tsv", "no_such_relation\tperson\n")
        with pytest.raises(UnknownReferenceError, match="no_such_relation"):
            load_kg(kg_dir / "triples.tsv", None, kg_dir / "ontology")

    def test_nell_shaped_ontology_counts(self, tmp_path):
        # Ontology dir shaped like the NELL benchmark: 461 relations with
        # DOM=418, RNG=418, SUB=288, RSUB=461, INV=418 rows.
        n_rel = 461
        rows = [f"e{i}\trel{i:03d}\te{i + 1}\t0.9\tsrc" for i in range(n_rel)]
        write(tmp_path / "triples.tsv", "\n".join(rows) + "\n")
        onto = tmp_path / "ontology"
        onto.mkdir()
        write(onto / "dom.tsv", "".join(f"rel{i:03d}\tlab{i % 37}\n" for i in range(418)))
        write(onto / "rng.tsv", "".join(f"rel{i:03d}\tlab{i % 37}\n" for i in range(418)))
        write(onto / "sub.tsv", "".join(f"lab{i}\tlab{i + 1}\n" for i in range(288)))
        write(onto / "rsub.tsv",
              "".join(f"rel{i:03d}\trel{(i + 1) % n_rel:03d}\n" for i in range(461)))
        write(onto / "inv.tsv",
              "".join(f"rel{i:03d}\trel{(i + 230) % n_rel:03d}\n" for i in range(418)))
        kg = load_kg(tmp_path / "triples.tsv", None, onto)
        counts = kg.ontology.counts()
        assert counts["dom"] == 418
        assert counts["rng"] == 418
        assert counts["sub"] == 288
        assert counts["rsub"] == 461
        assert counts["inv"] == 418

    def test_truth_loading(self, kg_dir):
        kg = load_kg(kg_dir / "triples.tsv")
        write(kg_dir / "truth.tsv", "alice\tworks_for\tacme\t1\nbob\tworks_for\tacme\t0\n")
        truth = load_truth(kg_dir / "truth.tsv", kg)
        assert len(truth) == 2 and sum(truth.values()) == 1


class TestRoundTrip:
    def test_write_then_load_preserves_kg(self, tmp_path):
        rng = np.random.default_rng(5)
        keys = set()
        facts = []
        while len(facts) < 20:
            key = (int(rng.integers(6)), int(rng.integers(3)), int(rng.integers(6)))
            if key not in keys:
                keys.add(key)
                facts.append(key + (round(float(rng.uniform(0, 1)), 6),))
        kg = make_kg(facts, labels=[(0, 0, 0.5), (1, 1, 0.25)])
        kg.ontology.dom[0] = 0
        kg.ontology.rng[0] = 1
        out = tmp_path / "out"
        write_kg(kg, out)
        kg2 = load_kg(out / "triples.tsv", out / "labels.tsv", out / "ontology")

        def named_facts(g):
            return sorted((g.entities.name(f.subject), g.relations.name(f.relation),
                           g.entities.name(f.object), f.confidences) for f in g.facts)

        def named_labels(g):
            return sorted((g.entities.name(l.entity), g.labels.name(l.label),
                           l.confidences) for l in g.label_facts)

        assert named_facts(kg2) == named_facts(kg)
        assert named_labels(kg2) == named_labels(kg)
        assert {(kg2.relations.name(r), kg2.labels.name(l)) for r, l in kg2.ontology.dom.items()} \
            == {(kg.relations.name(r), kg.labels.name(l)) for r, l in kg.ontology.dom.items()}
        assert {(kg2.relations.name(r), kg2.labels.name(l)) for r, l in kg2.ontology.rng.items()} \
            == {(kg.relations.name(r), kg.labels.name(l)) for r, l in kg.ontology.rng.items()}


class TestSplit:
    def test_exact_proportions(self):
        kg = make_kg([(i, 0, (i + 1) % 100, 0.5) for i in range(100)])
        kg.truth = {f.key: 1 for f in kg.facts}
        train, valid, test = split_kg(kg, SplitSpec(0.8, 0.1, 0.1, seed=7))
        assert (len(train.facts), len(valid), len(test)) == (80, 10, 10)

    def test_deterministic(self):
        kg = make_kg([(i, 0, (i + 1) % 50, 0.5) for i in range(50)])
        kg.truth = {f.key: 1 for f in kg.facts}
        a = split_kg(kg, SplitSpec(seed=3))
        b = split_kg(kg, SplitSpec(seed=3))
        assert [f.key for f in a[0].facts] == [f.key for f in b[0].facts]
        assert a[1].keys() == b[1].keys() and a[2].keys() == b[2].keys()

    def test_partition_disjoint_and_complete(self):
        rng = np.random.default_rng(11)
        for trial in range(5):
            n = int(rng.integers(20, 200))
            kg = make_kg([(i, 0, (i + 1) % n, 0.5) for i in range(n)])
            kg.truth = {f.key: int(rng.integers(2)) for f in kg.facts}
            train, valid, test = split_kg(kg, SplitSpec(seed=trial))
            parts = [set(f.key for f in train.facts), set(valid.keys()), set(test.keys())]
            assert parts[0] | parts[1] | parts[2] == kg.fact_keys()
            assert not (parts[0] & parts[1]) and not (parts[0] & parts[2])
            assert not (parts[1] & parts[2])

    def test_fractions_must_sum_to_one(self):
        kg = make_kg([(0, 0, 1, 0.5)])
        kg.truth = {kg.facts[0].key: 1}
        with pytest.raises(ConfigError):
            split_kg(kg, SplitSpec(0.5, 0.2, 0.2))

    def test_requires_truth(self):
        kg = make_kg([(0, 0, 1, 0.5)])
        with pytest.raises(DataError):
            split_kg(kg, SplitSpec())

    def test_balanced_halves_preserve_class_ratio(self):
        kg = make_kg([(i, 0, (i + 1) % 101, 0.5) for i in range(101)])
        items = tuple((f, 1 if i % 3 else 0) for i, f in enumerate(kg.facts))
        first, second = split_balanced_halves(EvalSet(items), seed=5)
        assert abs(len(first) - len(second)) <= 1
        for cls in (0, 1):
            a = sum(1 for _, g in first.items if g == cls)
            b = sum(1 for _, g in second.items if g == cls)
            assert abs(a - b) <= 1
        merged = sorted(f.key for f, _ in first.items + second.items)
        assert merged == sorted(f.key for f, _ in items)


class TestJaccard:
    def test_identical_profiles(self):
        kg = make_kg([(0, 0, 2, 0.5), (1, 0, 2, 0.5),
                      (2, 1, 0, 0.5), (2, 1, 1, 0.5)])
        assert jaccard_sameent(kg, 0, 1) == 1.0

    def test_disjoint_profiles(self):
        kg = make_kg([(0, 0, 2, 0.5), (1, 1, 3, 0.5),
                      (2, 2, 0, 0.5), (3, 3, 1, 0.5)])
        assert jaccard_sameent(kg, 0, 1) == 0.0

    def test_hand_computed_mixed(self):
        # headrels(0) = {0, 1}, headrels(1) = {1, 2}  -> J = 1/3
        # tailrels(0) = {3},    tailrels(1) = {3}     -> J = 1
        kg = make_kg([(0, 0, 4, 0.5), (0, 1, 4, 0.5),
                      (1, 1, 4, 0.5), (1, 2, 4, 0.5),
                      (4, 3, 0, 0.5), (5, 3, 1, 0.5)])
        assert jaccard_sameent(kg, 0, 1) == pytest.approx((1 / 3 + 1.0) / 2)

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        kg = make_kg([(int(rng.integers(8)), int(rng.integers(4)), int(rng.integers(8)), 0.5)
                      for _ in range(40)])
        for _ in range(20):
            e1, e2 = int(rng.integers(8)), int(rng.integers(8))
            assert jaccard_sameent(kg, e1, e2) == jaccard_sameent(kg, e2, e1)


class TestGenerateSameent:
    def test_k_zero(self):
        kg = make_kg([(0, 0, 1, 0.5)])
        assert generate_sameent(kg, 0) == ()

    def test_matches_exhaustive_pairwise_oracle(self):
        rng = np.random.default_rng(9)
        kg = make_kg([(int(rng.integers(6)), int(rng.integers(3)), int(rng.integers(6)), 0.5)
                      for _ in range(25)])
        # Oracle: score every unordered pair directly.
        n = len(kg.entities)
        expected = []
        for a in range(n):
            for b in range(a + 1, n):
                score = jaccard_sameent(kg, a, b)
                if score > 0:
                    expected.append((a, b, score))
        expected.sort(key=lambda t: (-t[2], t[0], t[1]))
        assert generate_sameent(kg, len(expected)) == tuple(expected)
        assert generate_sameent(kg, 3) == tuple(expected[:3])

    def test_returns_exactly_k_when_available(self):
        kg = make_kg([(i, 0, 20, 0.5) for i in range(12)])
        out = generate_sameent(kg, 5)
        assert len(out) == 5
        assert all(0.0 <= s <= 1.0 and a < b for a, b, s in out)

    def test_fewer_than_k_when_scarce(self):
        kg = make_kg([(0, 0, 2, 0.5), (1, 1, 3, 0.5)])
        assert len(generate_sameent(kg, 10)) == 0


class TestSubAncestors:
    def test_chain(self):
        anc = sub_ancestors({(0, 1), (1, 2)})
        assert anc[0] == {1, 2} and anc[1] == {2}

    def test_cycle_detected(self):
        from kgrefine.errors import OntologyError
        with pytest.raises(OntologyError, match="cycle"):
            sub_ancestors({(0, 1), (1, 0)})
