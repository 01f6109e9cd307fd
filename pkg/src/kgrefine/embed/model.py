"""Embedding models: ComplEx/DistMult bases with type-gated wrappers.

Three scoring modes share a base model Y(s, r, o):

* ``plain``          -- the raw bilinear score, squashed by sigmoid for
                        probabilities.
* ``implicit_typed`` -- sigmoid(s_t . r_h) * Y * sigmoid(o_t . r_t), with a
                        learned implicit type vector per entity and
                        head/tail type vectors per relation.
* ``typee``          -- the gates additionally receive explicit type-label
                        embeddings: the entity's assigned label row is
                        concatenated with the implicit vector, the relation's
                        domain/range rows with the head/tail vectors, so the
                        gate argument becomes s_t . r_h + s_l . r_dom.
                        Entities without a label use the UNK row.

Probabilities (used by the training loss and ``predict``) squash the base
factor: p = gate_s * sigmoid(Y) * gate_o for the gated modes and sigmoid(Y)
for plain, so values always lie in (0, 1).
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..errors import ConfigError, DataError

BASES = ("complex", "distmult")
MODES = ("plain", "implicit_typed", "typee")

_INIT_SCALE = 0.05
_CHECKPOINT_MAGIC = b"KGRM"
_CHECKPOINT_VERSION = 1


def sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class ModelConfig:
    """Base/mode selection, dimensions and training hyper-parameters."""

    base: str = "complex"
    mode: str = "typee"
    dim: int = 100
    implicit_type_dim: int = 20
    explicit_type_dim: int = 20
    negatives_per_positive: int = 5
    learning_rate: float = 0.05
    l2_reg: float = 1e-4
    epochs: int = 100
    batch_size: int = 512
    seed: int = 0

    def validate(self) -> None:
        if self.base not in BASES:
            raise ConfigError(f"unknown base {self.base!r}, expected one of {BASES}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}, expected one of {MODES}")
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if self.mode != "plain" and self.implicit_type_dim < 1:
            raise ConfigError("implicit_type_dim must be >= 1 for typed modes")
        if self.mode == "typee" and self.explicit_type_dim < 1:
            raise ConfigError("explicit_type_dim must be >= 1 for typee mode")
        if self.negatives_per_positive < 0:
            raise ConfigError("negatives_per_positive must be >= 0")
        if self.learning_rate < 0 or self.l2_reg < 0:
            raise ConfigError("learning_rate and l2_reg must be >= 0")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")


def param_block_names(config: ModelConfig):
    names = (["ent_re", "ent_im", "rel_re", "rel_im"] if config.base == "complex"
             else ["ent", "rel"])
    if config.mode in ("implicit_typed", "typee"):
        names += ["ent_type", "rel_head_type", "rel_tail_type"]
    if config.mode == "typee":
        names += ["label_emb", "rel_dom_type", "rel_range_type"]
    return names


@dataclass
class EmbeddingModel:
    """Parameter blocks plus the explicit type assignment.

    ``type_assignment`` maps every entity id to a label id, with
    ``n_labels`` acting as the UNK row of the label table.
    """

    config: ModelConfig
    n_entities: int
    n_relations: int
    n_labels: int
    params: dict
    type_assignment: np.ndarray = field(default=None)

    @property
    def unk_label(self) -> int:
        return self.n_labels

    @classmethod
    def init(cls, config: ModelConfig, n_entities: int, n_relations: int, n_labels: int,
             types: dict | None = None, rng: np.random.Generator | None = None) -> "EmbeddingModel":
        """Seeded uniform init in [-0.05, 0.05] for every active block."""
        config.validate()
        if rng is None:
            rng = np.random.default_rng(config.seed)
        d, dt, dl = config.dim, config.implicit_type_dim, config.explicit_type_dim
        shapes = {
            "ent_re": (n_entities, d), "ent_im": (n_entities, d),
            "rel_re": (n_relations, d), "rel_im": (n_relations, d),
            "ent": (n_entities, d), "rel": (n_relations, d),
            "ent_type": (n_entities, dt),
            "rel_head_type": (n_relations, dt), "rel_tail_type": (n_relations, dt),
            "label_emb": (n_labels + 1, dl),
            "rel_dom_type": (n_relations, dl), "rel_range_type": (n_relations, dl),
        }
        params = {name: rng.uniform(-_INIT_SCALE, _INIT_SCALE, size=shapes[name])
                  for name in param_block_names(config)}
        assignment = np.full(n_entities, n_labels, dtype=np.int64)
        if types:
            for e, l in types.items():
                if l is not None:
                    assignment[e] = l
        return cls(config, n_entities, n_relations, n_labels, params, assignment)

    def check_ids(self, s, r, o) -> None:
        for name, ids, bound in (("entity", s, self.n_entities), ("relation", r, self.n_relations),
                                 ("entity", o, self.n_entities)):
            ids = np.atleast_1d(ids)
            bad = ids[(ids < 0) | (ids >= bound)]
            if bad.size:
                raise DataError(f"unseen {name} id(s): {sorted(set(bad.tolist()))}")

    def base_scores(self, s, r, o) -> np.ndarray:
        s, r, o = np.atleast_1d(s), np.atleast_1d(r), np.atleast_1d(o)
        p = self.params
        if self.config.base == "complex":
            a, b = p["ent_re"][s], p["ent_im"][s]
            c, d = p["rel_re"][r], p["rel_im"][r]
            e, f = p["ent_re"][o], p["ent_im"][o]
            # Re<e_s, w_r, conj(e_o)> = sum (ac - bd) e + (ad + bc) f
            return ((a * c - b * d) * e + (a * d + b * c) * f).sum(axis=1)
        return (p["ent"][s] * p["rel"][r] * p["ent"][o]).sum(axis=1)

    def gate_arguments(self, s, r, o):
        """Pre-sigmoid gate inputs (u_subject, u_object) for typed modes."""
        s, r, o = np.atleast_1d(s), np.atleast_1d(r), np.atleast_1d(o)
        p = self.params
        u_s = (p["ent_type"][s] * p["rel_head_type"][r]).sum(axis=1)
        u_o = (p["ent_type"][o] * p["rel_tail_type"][r]).sum(axis=1)
        if self.config.mode == "typee":
            ls = self.type_assignment[s]
            lo = self.type_assignment[o]
            u_s = u_s + (p["label_emb"][ls] * p["rel_dom_type"][r]).sum(axis=1)
            u_o = u_o + (p["label_emb"][lo] * p["rel_range_type"][r]).sum(axis=1)
        return u_s, u_o

    def predict_proba(self, s, r, o) -> np.ndarray:
        """Probability scores in (0, 1); raises on out-of-range ids."""
        self.check_ids(s, r, o)
        s, r, o = np.atleast_1d(s), np.atleast_1d(r), np.atleast_1d(o)
        y = sigmoid(self.base_scores(s, r, o))
        if self.config.mode == "plain":
            return y
        u_s, u_o = self.gate_arguments(s, r, o)
        return sigmoid(u_s) * y * sigmoid(u_o)


def base_score(model: EmbeddingModel, s: int, r: int, o: int) -> float:
    """Raw bilinear base score (unbounded)."""
    return float(model.base_scores(s, r, o)[0])


def implicit_typed_score(model: EmbeddingModel, s: int, r: int, o: int) -> float:
    """sigmoid(s_t . r_h) * Y(s, r, o) * sigmoid(o_t . r_t) with the raw base."""
    if model.config.mode == "plain":
        raise ConfigError("implicit_typed_score requires a typed mode")
    p = model.params
    u_s = float(p["ent_type"][s] @ p["rel_head_type"][r])
    u_o = float(p["ent_type"][o] @ p["rel_tail_type"][r])
    y = float(model.base_scores(s, r, o)[0])
    return float(sigmoid(np.array([u_s]))[0] * y * sigmoid(np.array([u_o]))[0])


def typee_score(model: EmbeddingModel, s: int, r: int, o: int) -> float:
    """Explicit-type gated score: the concatenated dot product decomposes into
    s_t . r_h + s_l . r_dom (and the object-side twin) inside each gate."""
    if model.config.mode != "typee":
        raise ConfigError("typee_score requires mode='typee'")
    u_s, u_o = model.gate_arguments(s, r, o)
    y = float(model.base_scores(s, r, o)[0])
    return float(sigmoid(u_s)[0] * y * sigmoid(u_o)[0])


def predict(model: EmbeddingModel, triples) -> np.ndarray:
    """Probability scores for a batch of (s, r, o) triples."""
    if len(triples) == 0:
        return np.empty(0)
    arr = np.asarray(triples, dtype=np.int64)
    return model.predict_proba(arr[:, 0], arr[:, 1], arr[:, 2])


# ---------------------------------------------------------------------------
# Checkpoint format: magic + version + length-prefixed JSON header followed by
# little-endian float64 parameter blocks in header order.


def save_model(model: EmbeddingModel, path) -> None:
    header = {
        "config": asdict(model.config),
        "n_entities": model.n_entities,
        "n_relations": model.n_relations,
        "n_labels": model.n_labels,
        "blocks": [{"name": k, "shape": list(v.shape)} for k, v in model.params.items()],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".bin")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(_CHECKPOINT_MAGIC)
            fh.write(struct.pack("<II", _CHECKPOINT_VERSION, len(header_bytes)))
            fh.write(header_bytes)
            fh.write(np.ascontiguousarray(model.type_assignment, dtype="<i8").tobytes())
            for name in header["blocks"]:
                fh.write(np.ascontiguousarray(model.params[name["name"]], dtype="<f8").tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_model(path) -> EmbeddingModel:
    with open(os.fspath(path), "rb") as fh:
        magic = fh.read(4)
        if magic != _CHECKPOINT_MAGIC:
            raise DataError(f"{path}: not a model checkpoint")
        version, header_len = struct.unpack("<II", fh.read(8))
        if version != _CHECKPOINT_VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        config = ModelConfig(**header["config"])
        n_entities = header["n_entities"]
        assignment = np.frombuffer(fh.read(8 * n_entities), dtype="<i8").copy()
        params = {}
        for block in header["blocks"]:
            shape = tuple(block["shape"])
            count = int(np.prod(shape))
            params[block["name"]] = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape).copy()
    return EmbeddingModel(config, n_entities, header["n_relations"], header["n_labels"],
                          params, assignment)
