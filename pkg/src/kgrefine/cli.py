"""Command-line entry point wiring all stages.

Subcommands: prepare, infer, train, iterate, eval, ablate, heatmap.  Outputs
are written atomically (temp file + rename) and every successful run prints a
one-line JSON summary to stdout.  Exit codes: 0 success, 1 usage/config
error, 2 data error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .config import build, load_config_file
from .embed import ModelConfig, load_model, predict, save_model
from .errors import ConfigError, DataError, KGRefineError
from .evaluate import ablate_ontology, threshold_heatmap, weighted_f1_from_dicts
from .kg import (
    ONTOLOGY_COMPONENTS,
    SplitSpec,
    load_compat_flags,
    load_kg,
    load_label_truth,
    load_truth,
    split_kg,
    write_kg,
)
from .noise import NoiseSpec, assign_extraction_scores, corrupt_kg, noise_stats
from .pipeline import FeedbackConfig, classify, refine, tune_threshold, types_from_labels
from .psl import BACKEND, RuleWeights, SolverConfig, infer
from .synth import SynthSpec, generate_kg
from .util import read_tsv, write_atomic, write_json_atomic


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _summary(command: str, outputs: dict, **extra) -> None:
    line = {"command": command, "status": "ok", "outputs": outputs}
    line.update(extra)
    print(json.dumps(line, sort_keys=True))


def _load_prepared_kg(kg_dir, require_truth=False):
    triples = os.path.join(kg_dir, "triples.tsv")
    labels = os.path.join(kg_dir, "labels.tsv")
    onto = os.path.join(kg_dir, "ontology")
    kg = load_kg(triples, labels if os.path.exists(labels) else None,
                 onto if os.path.isdir(onto) else None)
    truth_path = os.path.join(kg_dir, "truth.tsv")
    if os.path.exists(truth_path):
        kg.truth = load_truth(truth_path, kg)
    elif require_truth:
        raise DataError(f"{truth_path} not found (gold labels required)")
    label_truth_path = os.path.join(kg_dir, "label_truth.tsv")
    if os.path.exists(label_truth_path):
        kg.label_truth = load_label_truth(label_truth_path, kg)
    compat_path = os.path.join(kg_dir, "compat.tsv")
    if os.path.exists(compat_path):
        kg.noise_compat = load_compat_flags(compat_path, kg)
    return kg


def _model_config(args, file_cfg) -> ModelConfig:
    return build(ModelConfig, file_cfg.get("model"), {
        "base": args.base, "mode": args.mode, "dim": args.dim,
        "implicit_type_dim": args.implicit_type_dim,
        "explicit_type_dim": args.explicit_type_dim,
        "negatives_per_positive": args.negatives,
        "learning_rate": args.learning_rate, "l2_reg": args.l2_reg,
        "epochs": args.epochs, "batch_size": args.batch_size, "seed": args.seed,
    })


def _solver_config(args, file_cfg) -> SolverConfig:
    return build(SolverConfig, file_cfg.get("solver"), {
        "max_iterations": getattr(args, "max_iterations", None),
        "tolerance": getattr(args, "tolerance", None),
        "method": getattr(args, "method", None),
    })


def _weights(args, file_cfg) -> RuleWeights:
    section = dict(file_cfg.get("weights") or {})
    if getattr(args, "weights", None):
        section.update(load_config_file(args.weights))
    overrides = {"hinge_power": getattr(args, "hinge_power", None),
                 "negative_prior_weight": getattr(args, "negative_prior", None)}
    return build(RuleWeights, section, overrides)


def _add_model_flags(p):
    p.add_argument("--base", choices=("complex", "distmult"))
    p.add_argument("--mode", choices=("plain", "implicit_typed", "typee"))
    p.add_argument("--dim", type=int)
    p.add_argument("--implicit-type-dim", type=int, dest="implicit_type_dim")
    p.add_argument("--explicit-type-dim", type=int, dest="explicit_type_dim")
    p.add_argument("--negatives", type=int)
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--l2-reg", type=float, dest="l2_reg")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")


def _add_solver_flags(p):
    p.add_argument("--max-iterations", type=int, dest="max_iterations")
    p.add_argument("--tolerance", type=float)
    p.add_argument("--hinge-power", type=int, dest="hinge_power", choices=(1, 2))
    p.add_argument("--method", choices=("admm", "subgradient"))
    p.add_argument("--negative-prior", type=float, dest="negative_prior")
    p.add_argument("--weights", help="YAML file with rule weights")


def _write_scores_tsv(path, kg, rel_scores, lbl_scores):
    ent, rel, lab = kg.entities.name, kg.relations.name, kg.labels.name
    lines = [f"rel\t{ent(s)}\t{rel(r)}\t{ent(o)}\t{v!r}" for (s, r, o), v in rel_scores.items()]
    lines += [f"lbl\t{ent(e)}\t{lab(l)}\t{v!r}" for (e, l), v in lbl_scores.items()]
    write_atomic(path, "\n".join(lines) + ("\n" if lines else ""))


# ---------------------------------------------------------------------------
# Subcommands


def cmd_prepare(args):
    file_cfg = load_config_file(args.config)
    noise_spec = build(NoiseSpec, file_cfg.get("noise"), {
        "corrupt_fraction": args.noise_fraction,
        "type_compatible_fraction": args.type_compatible_fraction,
        "seed": args.seed,
    })
    if args.synthetic:
        synth_spec = build(SynthSpec, file_cfg.get("synth"), {
            "n_entities": args.entities, "n_facts": args.facts, "seed": args.seed,
        })
        kg = generate_kg(synth_spec)
    else:
        if not args.triples:
            raise ConfigError("prepare needs --triples (or --synthetic)")
        kg = load_kg(args.triples, args.labels, args.ontology_dir,
                     typeof_relation=args.typeof_relation)
        kg.truth = {f.key: 1 for f in kg.facts}
        kg.label_truth = {l.key: 1 for l in kg.label_facts}
    noisy = corrupt_kg(kg, noise_spec)
    noisy = assign_extraction_scores(noisy, noise_spec)
    paths = write_kg(noisy, args.out)
    stats = noise_stats(noisy)
    stats_path = os.path.join(args.out, "stats.json")
    write_json_atomic(stats_path, stats)
    paths["stats"] = stats_path
    _summary("prepare", paths, stats=stats)
    return 0


def cmd_infer(args):
    file_cfg = load_config_file(args.config)
    kg = _load_prepared_kg(args.kg_dir)
    weights = _weights(args, file_cfg)
    solver = _solver_config(args, file_cfg)
    result = infer(kg, weights, config=solver)
    out = args.out or os.path.join(args.kg_dir, "inferred.tsv")
    _write_scores_tsv(out, kg, result.rel_scores, result.lbl_scores)
    _summary("infer", {"inferred": out}, objective=result.objective,
             iterations=result.iterations, atoms=len(result.rel_scores) + len(result.lbl_scores),
             backend=BACKEND)
    return 0


def cmd_train(args):
    from .embed import make_training_set, train as train_model

    file_cfg = load_config_file(args.config)
    kg = _load_prepared_kg(args.kg_dir)
    config = _model_config(args, file_cfg)
    types = types_from_labels(kg)
    model, losses = train_model(make_training_set(f.key for f in kg.facts), types, config,
                                len(kg.entities), len(kg.relations), len(kg.labels))
    out = args.out or os.path.join(args.kg_dir, "model.bin")
    save_model(model, out)
    _summary("train", {"model": out},
             final_loss=losses[-1] if losses else None, epochs=len(losses))
    return 0


def cmd_iterate(args):
    file_cfg = load_config_file(args.config)
    kg = _load_prepared_kg(args.kg_dir, require_truth=True)
    split_spec = build(SplitSpec, file_cfg.get("split"), {
        "train": args.train_fraction, "valid": args.valid_fraction,
        "test": args.test_fraction, "seed": args.seed,
    })
    feedback = build(FeedbackConfig, file_cfg.get("feedback"), {
        "phi1": args.phi1, "phi2": args.phi2, "max_iter": args.max_iter,
        "size_cap": args.size_cap, "feedback_weight": args.feedback_weight,
    })
    weights = _weights(args, file_cfg)
    solver = _solver_config(args, file_cfg)
    model_config = _model_config(args, file_cfg)

    train_kg, valid, test = split_kg(kg, split_spec)
    os.makedirs(args.out, exist_ok=True)

    def sink(iteration, result, fb):
        _write_scores_tsv(os.path.join(args.out, f"inferred-{iteration}.tsv"),
                          kg, result.rel_scores, result.lbl_scores)
        ent, rel = kg.entities.name, kg.relations.name
        lines = [f"{sign}\t{ent(s)}\t{rel(r)}\t{ent(o)}\t{score!r}"
                 for sign, items in (("+", fb.positive), ("-", fb.negative))
                 for (s, r, o), score in items]
        write_atomic(os.path.join(args.out, f"feedback-{iteration}.tsv"),
                     "\n".join(lines) + ("\n" if lines else ""))

    reports, model, _kg_final = refine(
        train_kg, valid, test, weights=weights, model_config=model_config,
        feedback_config=feedback, solver_config=solver,
        compat_flags=kg.noise_compat, artifact_sink=sink)

    reports_path = os.path.join(args.out, "reports.json")
    write_json_atomic(reports_path, [r.to_dict() for r in reports])
    model_path = os.path.join(args.out, "model.bin")
    save_model(model, model_path)
    best = max(reports, key=lambda r: r.model_test.wf1)
    _summary("iterate", {"reports": reports_path, "model": model_path},
             iterations=len(reports), best_model_test_wf1=best.model_test.wf1)
    return 0


def _read_scores(path):
    """Read scored triples: either `s r o score` or inferred.tsv's
    `kind args... score` rows (label rows are skipped)."""
    scores = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) == 5 and cols[0] == "rel":
                cols = cols[1:]
            elif cols[0] == "lbl":
                continue
            if len(cols) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 score columns")
            scores[(cols[0], cols[1], cols[2])] = float(cols[3])
    return scores


def _read_truth_names(path):
    truth = {}
    for lineno, (s, r, o, v) in read_tsv(path, 4):
        if v not in ("0", "1"):
            raise DataError(f"{path}:{lineno}: truth value must be 0 or 1")
        truth[(s, r, o)] = int(v)
    return truth


def cmd_eval(args):
    scores = _read_scores(args.scores)
    truth = _read_truth_names(args.truth)
    items = [k for k in truth if k in scores] if args.intersect else list(truth)
    gold = {k: truth[k] for k in items}
    if args.threshold is not None:
        threshold = args.threshold
    elif args.valid_scores and args.valid_truth:
        v_scores = _read_scores(args.valid_scores)
        v_truth = _read_truth_names(args.valid_truth)
        threshold = tune_threshold([(k, v_scores.get(k, 0.0)) for k in v_truth], v_truth)
    else:
        raise ConfigError("eval needs --threshold or --valid-scores/--valid-truth")
    report = weighted_f1_from_dicts(classify(scores, items, threshold), gold)
    out = args.out or "report.json"
    payload = {"threshold": threshold, **report.to_dict()}
    write_json_atomic(out, payload)
    _summary("eval", {"report": out}, **payload)
    return 0


def _ablation_modes(text):
    if text:
        modes = []
        for item in text.split(","):
            if ":" in item:
                mode, component = item.split(":", 1)
                modes.append((mode, component))
            else:
                modes.append((item, None))
        return modes
    modes = [("all", None), ("none", None)]
    modes += [("without", c) for c in ONTOLOGY_COMPONENTS]
    modes += [("only", c) for c in ONTOLOGY_COMPONENTS]
    return modes


def cmd_ablate(args):
    from dataclasses import replace as dc_replace

    file_cfg = load_config_file(args.config)
    kg = _load_prepared_kg(args.kg_dir, require_truth=True)
    split_spec = build(SplitSpec, file_cfg.get("split"), {"seed": args.seed})
    feedback = build(FeedbackConfig, file_cfg.get("feedback"), {"max_iter": args.max_iter})
    weights = _weights(args, file_cfg)
    solver = _solver_config(args, file_cfg)
    model_config = _model_config(args, file_cfg)

    rows = ["mode,component,best_iteration,pos_f1,neg_f1,wf1,normalized_size"]
    for mode, component in _ablation_modes(args.modes):
        ablated = dc_replace(kg, ontology=ablate_ontology(kg.ontology, mode, component))
        train_kg, valid, test = split_kg(ablated, split_spec)
        reports, _, _ = refine(train_kg, valid, test, weights=weights,
                               model_config=model_config, feedback_config=feedback,
                               solver_config=solver, compat_flags=kg.noise_compat)
        best = max(reports, key=lambda r: r.model_test.wf1)
        rows.append(f"{mode},{component or ''},{best.iteration},"
                    f"{best.model_test.pos_f1!r},{best.model_test.neg_f1!r},"
                    f"{best.model_test.wf1!r},{best.normalized_size!r}")
    out = args.out or "ablation.csv"
    write_atomic(out, "\n".join(rows) + "\n")
    _summary("ablate", {"ablation": out}, runs=len(rows) - 1)
    return 0


def cmd_heatmap(args):
    file_cfg = load_config_file(args.config)
    kg = _load_prepared_kg(args.kg_dir, require_truth=True)
    split_spec = build(SplitSpec, file_cfg.get("split"), {"seed": args.seed})
    weights = _weights(args, file_cfg)
    solver = _solver_config(args, file_cfg)
    model_config = _model_config(args, file_cfg)
    train_kg, valid, test = split_kg(kg, split_spec)

    reports, model, kg_clean = refine(
        train_kg, valid, test, weights=weights, model_config=model_config,
        feedback_config=FeedbackConfig(max_iter=1), solver_config=solver)
    universe = [f.key for f in kg_clean.facts]
    scored = list(zip(universe, predict(model, universe)))
    grid = tuple(int(p) for p in args.grid.split(","))
    gold = valid.gold()
    from dataclasses import replace as dc_replace
    psl_input = dc_replace(train_kg, facts=train_kg.facts + tuple(f for f, _ in valid.items),
                           truth=None)
    rows = threshold_heatmap(scored, gold, psl_input, weights, grid, grid, solver)
    out = args.out or "heatmap.csv"
    write_atomic(out, "pos_pct,neg_pct,wf1,normalized_size\n"
                 + "\n".join(f"{p},{q},{w!r},{s!r}" for p, q, w, s in rows) + "\n")
    _summary("heatmap", {"heatmap": out}, cells=len(rows))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="kgrefine", description=__doc__)
    parser.add_argument("--version", action="version", version=f"kgrefine {__version__}")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("prepare", help="corrupt a clean KG into a refinement benchmark")
    p.add_argument("--synthetic", action="store_true")
    p.add_argument("--triples")
    p.add_argument("--labels")
    p.add_argument("--ontology-dir", dest="ontology_dir")
    p.add_argument("--typeof-relation", dest="typeof_relation")
    p.add_argument("--entities", type=int)
    p.add_argument("--facts", type=int)
    p.add_argument("--noise-fraction", type=float, dest="noise_fraction")
    p.add_argument("--type-compatible-fraction", type=float, dest="type_compatible_fraction")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("infer", help="run rule grounding and MAP inference")
    p.add_argument("--kg-dir", dest="kg_dir", required=True)
    _add_solver_flags(p)
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("train", help="train an embedding model on a KG")
    p.add_argument("--kg-dir", dest="kg_dir", required=True)
    _add_model_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("iterate", help="run the full co-training refinement loop")
    p.add_argument("--kg-dir", dest="kg_dir", required=True)
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.add_argument("--phi1", type=float)
    p.add_argument("--phi2", type=float)
    p.add_argument("--size-cap", type=float, dest="size_cap")
    p.add_argument("--feedback-weight", type=float, dest="feedback_weight")
    p.add_argument("--train-fraction", type=float, dest="train_fraction")
    p.add_argument("--valid-fraction", type=float, dest="valid_fraction")
    p.add_argument("--test-fraction", type=float, dest="test_fraction")
    _add_model_flags(p)
    _add_solver_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_iterate)

    p = sub.add_parser("eval", help="score stored predictions against gold truth")
    p.add_argument("--scores", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--threshold", type=float)
    p.add_argument("--valid-scores", dest="valid_scores")
    p.add_argument("--valid-truth", dest="valid_truth")
    p.add_argument("--intersect", action="store_true",
                   help="evaluate only items present in both files")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="rerun the loop with ontology components removed")
    p.add_argument("--kg-dir", dest="kg_dir", required=True)
    p.add_argument("--modes", help="comma list like 'all,none,without:rng,only:dom'")
    p.add_argument("--max-iter", type=int, dest="max_iter")
    _add_model_flags(p)
    _add_solver_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("heatmap", help="feedback-volume study over a percentage grid")
    p.add_argument("--kg-dir", dest="kg_dir", required=True)
    p.add_argument("--grid", default="0,1,2,5,10,20,50,100")
    _add_model_flags(p)
    _add_solver_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_heatmap)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            print(parser.format_help(), file=sys.stderr)
            return 1
        return args.func(args)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except KGRefineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
