"""Command-line entry point.

Every subcommand exits 0 on success.  Failures print one JSON line
``{"error": ..., "message": ...}`` to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import evaluation as ev
from .data import (
    Standardizer,
    ensure_dir,
    load_dataset,
    load_expert_predictions,
    save_dataset,
    save_expert_predictions,
)
from .inference import predict_batch, predict_sparse_batch
from .losses import Batch
from .models import ClassifierModel, DeferrerModel, load_checkpoint, save_checkpoint
from .synthetic import (
    gen_biased_experts,
    gen_grouped_feature_dataset,
    gen_three_cluster_dataset,
    biased_metadata,
    mask_predictions,
    save_metadata,
    simulate_expert_predictions,
)
from .training import TrainConfig, train

EXIT_USAGE = 2
EXIT_FAILURE = 1


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("UsageError", message)
        sys.exit(EXIT_USAGE)


def _emit_error(kind, message):
    sys.stderr.write(json.dumps({"error": kind, "message": str(message)}) + "\n")


# ------------------------------------------------------------------ helpers


def _count_experts(path):
    top = -1
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for row in reader:
            if len(row) == 3 and row[1].strip():
                top = max(top, int(row[1]))
    return top + 1


def _load_experts(path, dataset, num_experts=None):
    e = num_experts if num_experts is not None else _count_experts(path)
    if e < 1:
        raise CliError(f"{path}: no expert predictions found")
    return load_expert_predictions(path, len(dataset), e, dataset.num_classes)


def _write_json(obj, path):
    ev.write_json(obj, path)


def _print_summary(obj):
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


# --------------------------------------------------------------- generators


def cmd_gen_data(args):
    if args.kind == "three-cluster":
        gen = gen_three_cluster_dataset(args.seed, args.n or 1000)
        ds = gen.dataset
        meta = gen.metadata()
    else:
        ds = gen_grouped_feature_dataset(
            args.n or 2500, args.dim, args.group_fraction, args.class_sep, args.seed, args.group_shift
        )
        meta = {"generator": "grouped", "group_fraction": args.group_fraction}
    meta["seed"] = args.seed
    save_dataset(ds, args.out)
    save_metadata(meta, args.meta or args.out + ".meta.json")
    _print_summary({"rows": len(ds), "out": args.out})


def cmd_gen_experts(args):
    ds = load_dataset(args.data)
    if args.kind == "cluster":
        meta_path = args.meta or args.data + ".meta.json"
        with open(meta_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        if "clusters" not in meta:
            raise CliError(f"{meta_path}: no cluster metadata; cluster experts need a three-cluster dataset")
        gen_meta = dict(meta)
        clusters = np.asarray(meta["clusters"])
        specs = gen_three_cluster_dataset(0).experts
        matrix = simulate_expert_predictions(specs, ds, args.seed, clusters)
        out_meta = {"generator": "cluster-experts", "seed": args.seed, "source": gen_meta["generator"]}
    else:
        specs = gen_biased_experts(args.m, args.seed)
        matrix = simulate_expert_predictions(specs, ds, args.seed + 1)
        out_meta = biased_metadata(specs)
        out_meta["seed"] = args.seed
    if args.coverage < 1.0:
        matrix = mask_predictions(matrix, args.coverage, args.seed + 2)
    save_expert_predictions(matrix, args.out)
    save_metadata(out_meta, args.out + ".meta.json")
    _print_summary({"experts": matrix.num_experts, "observed": int(matrix.mask.sum()), "out": args.out})


# ------------------------------------------------------------- train/predict


TRAIN_FLAGS = (
    "eta",
    "iters",
    "batch_size",
    "alpha_mode",
    "alpha1",
    "alpha2",
    "decay_c",
    "fairness",
    "minimax_rounds",
    "minimax_inner_steps",
    "group_lr",
    "dropout_rate",
    "lam",
)


def _train_config(args):
    values = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            values.update(json.load(fh))
    for key in TRAIN_FLAGS:
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    values["seed"] = args.seed
    return TrainConfig.from_dict(values)


def cmd_train(args):
    ds = load_dataset(args.data)
    experts = _load_experts(args.experts, ds, args.num_experts)
    out = ensure_dir(args.out)
    std = None
    if not args.no_standardize:
        std = Standardizer.fit(ds.features)
        ds = std.apply(ds)
    cfg = _train_config(args)
    batch = Batch.from_data(ds, experts)
    batch.costs = np.full(experts.num_experts, float(args.cost))
    clf = ClassifierModel(ds.dim, ds.num_classes, args.classifier, args.hidden, seed=args.seed)
    de = DeferrerModel(ds.dim, experts.num_experts + 1, args.deferrer, args.hidden, seed=args.seed + 1)
    report = train(batch, clf, de, cfg, ds.num_groups)
    save_checkpoint(report.classifier, os.path.join(out, "classifier.ckpt"))
    save_checkpoint(report.deferrer, os.path.join(out, "deferrer.ckpt"))
    cfg.save(os.path.join(out, "train_config.json"))
    report.save(os.path.join(out, "train_report.json"))
    if std is not None:
        _write_json(
            {"mean": std.mean.tolist(), "scale": std.scale.tolist()}, os.path.join(out, "standardizer.json")
        )
    _print_summary({"final_loss": float(report.loss_trace[-1]), "iterations": report.iterations, "out": out})


def _load_model_dir(path):
    clf = load_checkpoint(os.path.join(path, "classifier.ckpt"))
    de = load_checkpoint(os.path.join(path, "deferrer.ckpt"))
    std = None
    std_path = os.path.join(path, "standardizer.json")
    if os.path.exists(std_path):
        with open(std_path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        std = Standardizer(np.asarray(raw["mean"]), np.asarray(raw["scale"]))
    return clf, de, std


def cmd_predict(args):
    clf, de, std = _load_model_dir(args.model)
    ds = load_dataset(args.data)
    experts = _load_experts(args.experts, ds, de.num_experts - 1)
    x = ds.features if std is None else std.transform(ds.features)
    ids = np.arange(len(ds))
    if args.k:
        labels, _, members = predict_sparse_batch(clf, de, x, experts.predictions, experts.mask, args.k, args.seed)
        committees = list(members)
    else:
        labels, _, _ = predict_batch(clf, de, x, experts.predictions, experts.mask)
        committees = None
    ev._write_predictions(args.out, ids, labels, committees)
    _print_summary({"rows": len(ds), "out": args.out})


def _read_predictions(path):
    ids, labels, committees = [], [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["sample_id", "label_pred", "committee"]:
            raise CliError(f"{path}: header must be sample_id,label_pred,committee")
        for row in reader:
            ids.append(int(row[0]))
            labels.append(int(row[1]))
            committees.append([int(v) for v in row[2].split(";")] if row[2] else None)
    if any(c is None for c in committees):
        committees = None
    return np.asarray(ids), np.asarray(labels), committees


def cmd_evaluate(args):
    if args.config:
        if not args.out:
            raise CliError("evaluate --config needs --out")
        cfg = ev.load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        out = ensure_dir(args.out)
        _, agg = ev.run_experiment(cfg, out)
        _print_summary(agg)
        return
    if not (args.predictions and args.data):
        raise CliError("evaluate needs --config, or --predictions with --data")
    ds = load_dataset(args.data)
    ids, labels, committees = _read_predictions(args.predictions)
    report = ev.compute_metrics(
        labels,
        ds.labels[ids],
        ds.groups[ids],
        ds.num_groups,
        committees=committees,
        num_workers=args.num_workers,
    )
    if args.out:
        _write_json(report.to_dict(), args.out)
    _print_summary(report.to_dict())


def cmd_sweep(args):
    with open(args.spec, "r", encoding="utf-8") as fh:
        spec = ev.SweepSpec.from_dict(json.load(fh))
    rows, summary = ev.run_sweep(spec, args.out, workers=args.workers)
    failed = sum(1 for r in rows if r[7] == "failed")
    _print_summary({"cells": len(spec.values) * spec.repetitions, "failed": failed, "out": args.out})


def cmd_repro_three_cluster(args):
    out = ensure_dir(args.out)
    cfg = ev.three_cluster_config(args.seed)
    cfg["repetitions"] = args.repetitions
    _, agg = ev.run_experiment(cfg, out)
    _print_summary(agg)


def cmd_repro_biased_experts(args):
    out = ensure_dir(args.out)
    cfg = ev.biased_experts_config(args.seed, repetitions=args.repetitions, num_experts=args.m)
    _, agg = ev.run_experiment(cfg, out)
    _print_summary(agg)


# ------------------------------------------------------------------- parser


def build_parser():
    p = _Parser(prog="multidefer", description="Joint classifier and multi-expert deferral toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset CSV")
    g.add_argument("--kind", choices=("three-cluster", "grouped"), default="three-cluster")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--meta")
    g.add_argument("--n", type=int)
    g.add_argument("--dim", type=int, default=10)
    g.add_argument("--group-fraction", type=float, default=0.36)
    g.add_argument("--class-sep", type=float, default=2.5)
    g.add_argument("--group-shift", type=float, default=1.0)
    g.set_defaults(func=cmd_gen_data)

    e = sub.add_parser("gen-experts", help="simulate expert predictions for a dataset")
    e.add_argument("--kind", choices=("cluster", "biased"), default="biased")
    e.add_argument("--data", required=True)
    e.add_argument("--seed", type=int, required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--meta", help="dataset metadata (cluster experts)")
    e.add_argument("--m", type=int, default=20, help="experts including the classifier")
    e.add_argument("--coverage", type=float, default=1.0)
    e.set_defaults(func=cmd_gen_experts)

    t = sub.add_parser("train", help="train classifier and deferrer jointly")
    t.add_argument("--data", required=True)
    t.add_argument("--experts", required=True)
    t.add_argument("--seed", type=int, required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--config", help="JSON file with training options")
    t.add_argument("--num-experts", type=int, help="human experts (default: from the file)")
    t.add_argument("--classifier", choices=("linear", "two-layer"), default="linear")
    t.add_argument("--deferrer", choices=("input", "global"), default="input")
    t.add_argument("--hidden", type=int, default=16)
    t.add_argument("--cost", type=float, default=1.0)
    t.add_argument("--no-standardize", action="store_true")
    t.add_argument("--eta", type=float)
    t.add_argument("--iters", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--alpha-mode", choices=("constant", "time-decay", "indicator"))
    t.add_argument("--alpha1", type=float)
    t.add_argument("--alpha2", type=float)
    t.add_argument("--decay-c", type=float)
    t.add_argument("--fairness", choices=("none", "balanced", "minimax"))
    t.add_argument("--minimax-rounds", type=int)
    t.add_argument("--minimax-inner-steps", type=int)
    t.add_argument("--group-lr", type=float)
    t.add_argument("--dropout-rate", type=float)
    t.add_argument("--lam", type=float)
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("predict", help="predict with a trained model directory")
    r.add_argument("--model", required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--experts", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--k", type=int, default=0, help="sparse committee size (0: full committee)")
    r.add_argument("--seed", type=int, default=0)
    r.set_defaults(func=cmd_predict)

    v = sub.add_parser("evaluate", help="score predictions, or run a config-driven experiment")
    v.add_argument("--config")
    v.add_argument("--predictions")
    v.add_argument("--data")
    v.add_argument("--num-workers", type=int)
    v.add_argument("--seed", type=int)
    v.add_argument("--out")
    v.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep", help="run a parameter sweep")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    for name, func, extra in (
        ("repro-sec31", cmd_repro_three_cluster, False),
        ("repro-sec32", cmd_repro_biased_experts, True),
    ):
        q = sub.add_parser(name, help="run a reference experiment")
        q.add_argument("--seed", type=int, required=True)
        q.add_argument("--out", required=True)
        q.add_argument("--repetitions", type=int, default=1)
        if extra:
            q.add_argument("--m", type=int, default=20)
        q.set_defaults(func=func)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "evaluate" and args.config is None and args.out is None and args.predictions is None:
        _emit_error("UsageError", "evaluate needs --config or --predictions")
        return EXIT_USAGE
    try:
        args.func(args)
    except Exception as exc:  # every failure becomes one JSON line on stderr
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        _emit_error(type(exc).__name__, msg)
        return EXIT_FAILURE
    return 0


if __name__ == "__main__":
    sys.exit(main())
