"""Config-driven experiments, metrics, sweeps and the two reference setups."""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import baselines as bl
from .data import (
    ExpertCostVector,
    ExpertPredictionMatrix,
    Standardizer,
    ensure_dir,
    load_dataset,
    load_expert_predictions,
    split,
)
from .inference import predict_batch, predict_sparse_batch
from .losses import Batch, LossConfig, group_losses
from .models import ClassifierModel, DeferrerModel, save_checkpoint
from .synthetic import (
    gen_biased_experts,
    gen_grouped_feature_dataset,
    gen_three_cluster_dataset,
    mask_predictions,
    simulate_expert_predictions,
)
from .training import TrainConfig, alpha_schedule, fit_classifier, train

logger = logging.getLogger(__name__)

JOINT_METHODS = ("joint", "balanced", "minimax")
SPARSE_METHODS = tuple(f"{m}-sparse" for m in JOINT_METHODS)
BASELINE_METHODS = (
    "classifier-only",
    "svm",
    "random-committee",
    "random-fair-committee",
    "ll",
    "crowdselect",
)
METHODS = JOINT_METHODS + SPARSE_METHODS + BASELINE_METHODS
GENERATORS = ("three-cluster", "grouped", "files")

DEFAULT_CONFIG = {
    "seed": 0,
    "generator": "grouped",
    "n": 2500,
    "dim": 10,
    "group_fraction": 0.36,
    "class_sep": 2.5,
    "group_shift": 1.0,
    "num_experts": 20,  # m, the classifier included
    "coverage": 1.0,
    "data_path": None,
    "experts_path": None,
    "test_fraction": 0.2,
    "standardize": True,
    "methods": ["joint"],
    "k": 5,
    "baseline_k": None,  # None means ceil(m / 4)
    "cost": 1.0,
    "repetitions": 1,
    "classifier": {"kind": "linear", "hidden_dim": 16},
    "deferrer": {"kind": "input", "hidden_dim": 16},
    "pretrain": {"eta": 0.5, "iters": 1000},
    "crowdselect": {"hidden_dim": 16, "eta": 0.5, "iters": 2000},
    "train": {},
}
_NESTED = ("classifier", "deferrer", "pretrain", "crowdselect")


class ConfigError(ValueError):
    pass


def make_config(overrides=None):
    """Defaults merged with ``overrides``; unknown keys raise ``ConfigError`` naming them."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    overrides = dict(overrides or {})
    if "method" in overrides:
        overrides["methods"] = [overrides.pop("method")]
    unknown = sorted(set(overrides) - set(cfg))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    for key, value in overrides.items():
        if key in _NESTED:
            bad = sorted(set(value) - set(cfg[key]))
            if bad:
                raise ConfigError(f"unknown config key(s): {', '.join(f'{key}.{b}' for b in bad)}")
            cfg[key].update(value)
        else:
            cfg[key] = copy.deepcopy(value)
    try:
        TrainConfig.from_dict(cfg["train"])
    except KeyError as exc:
        raise ConfigError(f"unknown config key(s): {exc.args[0].split(': ', 1)[-1]}") from None
    if isinstance(cfg["methods"], str):
        cfg["methods"] = [cfg["methods"]]
    bad = [m for m in cfg["methods"] if m not in METHODS]
    if bad:
        raise ConfigError(f"unknown method(s): {', '.join(bad)}")
    if cfg["generator"] not in GENERATORS:
        raise ConfigError(f"unknown generator {cfg['generator']!r}")
    if cfg["repetitions"] < 1:
        raise ConfigError("repetitions must be >= 1")
    return cfg


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return make_config(json.load(fh))


# ------------------------------------------------------------------ metrics


@dataclass
class MetricsReport:
    overall_accuracy: float
    group_accuracy: list  # None marks a group absent from the evaluated rows
    group_counts: list
    group_loss: list | None = None
    loads: list | None = None  # per worker, classifier last; sums to 1
    classifier_consultation: float | None = None
    classifier_weight_share: float | None = None
    expert_weight: list | None = None
    expert_accuracy: list | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _num_or_none(v):
    v = float(v)
    return None if math.isnan(v) else v


def compute_metrics(
    predictions,
    labels,
    groups=None,
    num_groups=None,
    committees=None,
    weights=None,
    num_workers=None,
    expert_preds=None,
    expert_mask=None,
    group_loss=None,
) -> MetricsReport:
    """Accuracy, per-group accuracy and load statistics for one evaluated method.

    ``committees`` holds per-sample worker indices (classifier is the last
    worker); loads are committee-slot frequencies.  Without committees,
    loads are the mean normalised deferrer ``weights``.
    """
    pred = np.asarray(predictions, dtype=np.int64)
    y = np.asarray(labels, dtype=np.int64)
    if pred.shape != y.shape:
        raise ValueError("predictions and labels must be aligned")
    n = y.size
    groups = np.zeros(n, dtype=np.int64) if groups is None else np.asarray(groups, dtype=np.int64)
    k = int(num_groups) if num_groups is not None else (int(groups.max()) + 1 if n else 1)
    correct = pred == y
    counts = np.bincount(groups, minlength=k)
    group_acc = [
        float(correct[groups == z].mean()) if counts[z] else None for z in range(k)
    ]
    report = MetricsReport(
        overall_accuracy=float(correct.mean()) if n else float("nan"),
        group_accuracy=group_acc,
        group_counts=counts.tolist(),
    )
    if group_loss is not None:
        report.group_loss = [_num_or_none(v) for v in group_loss]
    if weights is not None:
        w = np.atleast_2d(np.asarray(weights, dtype=np.float64))
        num_workers = num_workers or w.shape[1]
        share = w / np.maximum(w.sum(axis=1, keepdims=True), 1e-300)
        report.classifier_weight_share = float(share[:, -1].mean())
        report.expert_weight = w[:, :-1].mean(axis=0).tolist()
        if committees is None:
            report.loads = share.mean(axis=0).tolist()
    if committees is not None:
        if num_workers is None:
            raise ValueError("num_workers is required with committees")
        slots = np.zeros(num_workers)
        has_clf = 0
        for c in committees:
            c = np.asarray(c, dtype=np.int64).ravel()
            slots += np.bincount(c, minlength=num_workers)
            has_clf += int(np.any(c == num_workers - 1))
        report.loads = (slots / slots.sum()).tolist() if slots.sum() else slots.tolist()
        report.classifier_consultation = has_clf / len(committees) if len(committees) else 0.0
    if expert_preds is not None:
        p = np.atleast_2d(expert_preds)
        m = np.ones(p.shape, dtype=bool) if expert_mask is None else np.asarray(expert_mask, dtype=bool)
        seen = m.sum(axis=0)
        hits = ((p == y[:, None]) & m).sum(axis=0)
        report.expert_accuracy = [
            float(h / s) if s else None for h, s in zip(hits, seen)
        ]
    return report


# --------------------------------------------------------------- data setup


@dataclass
class PreparedData:
    dataset: object  # standardised when requested
    experts: ExpertPredictionMatrix
    train: np.ndarray
    test: np.ndarray
    meta: dict
    clusters: np.ndarray | None = None

    @property
    def num_workers(self):
        return self.experts.num_experts + 1

    def batch(self, rows, cost):
        b = Batch.from_data(self.dataset, self.experts, rows)
        b.costs = ExpertCostVector.uniform(self.experts.num_experts, cost).costs
        return b


def prepare_data(cfg) -> PreparedData:
    seed = int(cfg["seed"])
    clusters = None
    if cfg["generator"] == "three-cluster":
        gen = gen_three_cluster_dataset(seed, cfg["n"] if cfg["n"] else 1000)
        ds = gen.dataset
        experts = simulate_expert_predictions(gen.experts, ds, seed + 1000, gen.clusters)
        clusters = gen.clusters
        meta = gen.metadata()
    elif cfg["generator"] == "grouped":
        ds = gen_grouped_feature_dataset(
            cfg["n"], cfg["dim"], cfg["group_fraction"], cfg["class_sep"], seed, cfg["group_shift"]
        )
        specs = gen_biased_experts(cfg["num_experts"], seed + 1000)
        experts = simulate_expert_predictions(specs, ds, seed + 2000)
        meta = {"generator": "grouped", "experts": [asdict(s) for s in specs]}
    else:
        if not cfg["data_path"] or not cfg["experts_path"]:
            raise ConfigError("generator 'files' needs data_path and experts_path")
        ds = load_dataset(cfg["data_path"])
        experts = load_expert_predictions(
            cfg["experts_path"], len(ds), cfg["num_experts"] - 1, ds.num_classes
        )
        meta = {"generator": "files", "data_path": cfg["data_path"]}
    if cfg["coverage"] < 1.0:
        experts = mask_predictions(experts, cfg["coverage"], seed + 3000)
    sp = split(ds, cfg["test_fraction"], seed)
    if cfg["standardize"]:
        ds = Standardizer.fit(ds.features[sp.train]).apply(ds)
    return PreparedData(ds, experts, sp.train, sp.test, meta, clusters)


# ------------------------------------------------------------------ methods


@dataclass
class MethodResult:
    metrics: MetricsReport
    predictions: np.ndarray
    committees: list | None = None
    classifier: object = None
    deferrer: object = None
    train_report: object = None


def _new_models(cfg, data):
    d = data.dataset.dim
    seed = int(cfg["seed"])
    clf = ClassifierModel(
        d, data.dataset.num_classes, cfg["classifier"]["kind"], cfg["classifier"]["hidden_dim"], seed=seed
    )
    de = DeferrerModel(
        d, data.num_workers, cfg["deferrer"]["kind"], cfg["deferrer"]["hidden_dim"], seed=seed + 1
    )
    return clf, de


def _train_config(cfg, fairness):
    values = dict(cfg["train"])
    values["fairness"] = fairness
    values.setdefault("seed", int(cfg["seed"]))
    return TrainConfig.from_dict(values)


def _eval_loss_config(tcfg, classifier, batch):
    correct = classifier.predict(batch.features) == batch.labels
    a1, a2 = alpha_schedule(
        tcfg.alpha_mode, tcfg.iters, correct, tcfg.alpha1, tcfg.alpha2, tcfg.decay_c
    )
    return LossConfig(alpha1=a1, alpha2=a2, lam=tcfg.lam)


def _joint_result(cfg, data, fairness, sparse, cache):
    if fairness not in cache:
        tcfg = _train_config(cfg, {"joint": "none"}.get(fairness, fairness))
        clf, de = _new_models(cfg, data)
        rep = train(data.batch(data.train, cfg["cost"]), clf, de, tcfg, data.dataset.num_groups)
        cache[fairness] = (rep, tcfg)
    rep, tcfg = cache[fairness]
    clf, de = rep.classifier, rep.deferrer
    te = data.test
    x, preds, mask = data.dataset.features[te], data.experts.predictions[te], data.experts.mask[te]
    test_batch = data.batch(te, cfg["cost"])
    gl = group_losses(
        clf, de, test_batch, _eval_loss_config(tcfg, clf, test_batch), num_groups=data.dataset.num_groups
    )
    committees = None
    if sparse:
        labels, _, members = predict_sparse_batch(clf, de, x, preds, mask, int(cfg["k"]), int(cfg["seed"]))
        committees = list(members)
        weights = de.forward(x)
    else:
        labels, _, weights = predict_batch(clf, de, x, preds, mask)
    metrics = compute_metrics(
        labels,
        data.dataset.labels[te],
        data.dataset.groups[te],
        data.dataset.num_groups,
        committees=committees,
        weights=weights,
        num_workers=data.num_workers,
        expert_preds=preds,
        expert_mask=mask,
        group_loss=gl,
    )
    return MethodResult(metrics, labels, committees, clf, de, rep)


def _pretrained_classifier(cfg, data, cache):
    if "pretrained" not in cache:
        clf, _ = _new_models(cfg, data)
        tr = data.train
        cache["pretrained"] = fit_classifier(
            clf,
            data.dataset.features[tr],
            data.dataset.labels[tr],
            eta=cfg["pretrain"]["eta"],
            iters=cfg["pretrain"]["iters"],
        )
    return cache["pretrained"]


def _require_full(data, method):
    if not data.experts.mask.all():
        raise ConfigError(f"method {method!r} needs fully observed expert predictions")


def _baseline_result(cfg, data, method, cache):
    ds = data.dataset
    tr, te = data.train, data.test
    x_te, y_te = ds.features[te], ds.labels[te]
    preds_te = data.experts.predictions[te]
    c = ds.num_classes
    workers = data.num_workers
    k = cfg["baseline_k"] or math.ceil(workers / 4)
    seed = int(cfg["seed"])
    clf = None
    committees = None
    if method == "classifier-only":
        clf = _pretrained_classifier(cfg, data, cache)
        labels = clf.predict(x_te)
        committees = [np.array([workers - 1])] * len(te)
    elif method == "svm":
        from sklearn.svm import SVC

        model = SVC().fit(ds.features[tr], ds.labels[tr])
        labels = model.predict(x_te).astype(np.int64)
        committees = [np.array([workers - 1])] * len(te)
    elif method == "random-committee":
        _require_full(data, method)
        labels, members = bl.predict_random_committee(preds_te, min(k, workers - 1), seed, c)
        committees = list(members)
    elif method == "random-fair-committee":
        _require_full(data, method)
        acc = bl.group_accuracy_table(
            data.experts.predictions[tr], ds.labels[tr], ds.groups[tr], ds.num_groups
        )
        labels, committees, fallbacks = bl.predict_random_fair_committee(
            preds_te, ds.groups[te], acc, min(k, workers - 1), seed, c
        )
        cache.setdefault("fallbacks", {})[method] = fallbacks
    elif method == "ll":
        _require_full(data, method)
        clf = _pretrained_classifier(cfg, data, cache)
        rel = bl.reliability_table(clf, ds.features[tr], ds.labels[tr], data.experts.predictions[tr])
        members = bl.ll_select(rel, k)
        labels = bl.predict_committee(bl.worker_votes(clf, x_te, preds_te), members, c)
        committees = [members] * len(te)
    elif method == "crowdselect":
        _require_full(data, method)
        clf = _pretrained_classifier(cfg, data, cache)
        cs = cfg["crowdselect"]
        models = bl.crowdselect_train(
            clf,
            ds.features[tr],
            ds.labels[tr],
            data.experts.predictions[tr],
            c,
            hidden_dim=cs["hidden_dim"],
            eta=cs["eta"],
            iters=cs["iters"],
            seed=seed,
        )
        labels, members = bl.crowdselect_predict(models, clf, x_te, preds_te, k)
        committees = list(members)
    else:
        raise ConfigError(f"unknown method {method!r}")
    metrics = compute_metrics(
        labels,
        y_te,
        ds.groups[te],
        ds.num_groups,
        committees=committees,
        num_workers=workers,
        expert_preds=preds_te,
        expert_mask=data.experts.mask[te],
    )
    if "fallbacks" in cache and method in cache["fallbacks"]:
        metrics.extra["fallbacks"] = cache["fallbacks"][method]
    return MethodResult(metrics, np.asarray(labels), committees, clf)


def run_method(cfg, data, method, cache=None) -> MethodResult:
    cache = {} if cache is None else cache
    if method in JOINT_METHODS:
        return _joint_result(cfg, data, method, False, cache)
    if method in SPARSE_METHODS:
        return _joint_result(cfg, data, method[: -len("-sparse")], True, cache)
    return _baseline_result(cfg, data, method, cache)


# ---------------------------------------------------------------- artifacts


def _write_predictions(path, sample_ids, labels, committees):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_id", "label_pred", "committee"])
        for i, (s, y) in enumerate(zip(sample_ids, labels)):
            members = "" if committees is None else ";".join(str(int(v)) for v in committees[i])
            writer.writerow([int(s), int(y), members])


def write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _run_once(cfg, out_dir=None):
    data = prepare_data(cfg)
    cache = {}
    results = {}
    for method in cfg["methods"]:
        res = run_method(cfg, data, method, cache)
        results[method] = res
        if out_dir is None:
            continue
        _write_predictions(
            os.path.join(out_dir, f"predictions_{method}.csv"), data.test, res.predictions, res.committees
        )
        if res.classifier is not None:
            save_checkpoint(res.classifier, os.path.join(out_dir, f"{method}_classifier.ckpt"))
        if res.deferrer is not None:
            save_checkpoint(res.deferrer, os.path.join(out_dir, f"{method}_deferrer.ckpt"))
        if res.train_report is not None:
            res.train_report.save(os.path.join(out_dir, f"{method}_train.json"))
    if out_dir is not None:
        write_json(
            {
                "config": cfg,
                "methods": {m: r.metrics.to_dict() for m, r in results.items()},
            },
            os.path.join(out_dir, "report.json"),
        )
    return results


def summarize(values):
    """Mean and standard error (ddof=1) of the finite entries; stderr is 0 for one value."""
    v = np.asarray([x for x in values if x is not None and np.isfinite(x)], dtype=np.float64)
    if v.size == 0:
        return None, None
    se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


def _aggregate(reports):
    """reports: list of {method: MetricsReport} -> {method: {metric: [mean, stderr]}}."""
    out = {}
    for method in reports[0]:
        rows = [r[method] for r in reports]
        entry = {"overall_accuracy": summarize([r.overall_accuracy for r in rows])}
        for z in range(len(rows[0].group_accuracy)):
            entry[f"group{z}_accuracy"] = summarize([r.group_accuracy[z] for r in rows])
        if rows[0].loads is not None:
            entry["classifier_load"] = summarize([r.loads[-1] for r in rows])
        out[method] = {k: list(v) for k, v in entry.items()}
    return out


def run_experiment(config, out_dir=None):
    """Run every configured method for ``repetitions`` seeds (``seed``, ``seed + 1``, ...).

    Returns ``(per-repetition results, aggregate)``.  With ``out_dir`` each
    repetition writes ``rep_<r>/`` (report, prediction CSVs, checkpoints)
    and ``aggregate.json`` holds mean and standard error per method.
    """
    cfg = make_config(config) if not _is_full_config(config) else config
    reps = []
    for r in range(cfg["repetitions"]):
        rcfg = dict(cfg, seed=int(cfg["seed"]) + r, repetitions=1)
        rdir = None
        if out_dir is not None:
            rdir = ensure_dir(os.path.join(out_dir, f"rep_{r}"))
        reps.append(_run_once(rcfg, rdir))
    agg = _aggregate([{m: res.metrics for m, res in rep.items()} for rep in reps])
    if out_dir is not None:
        write_json({"repetitions": cfg["repetitions"], "methods": agg}, os.path.join(out_dir, "aggregate.json"))
    return reps, agg


def _is_full_config(config):
    return isinstance(config, dict) and set(config) == set(DEFAULT_CONFIG)


# ------------------------------------------------------------------- sweeps

SWEEP_PARAMS = {
    "m": ("num_experts",),
    "lambda": ("train", "lam"),
    "dropout_rate": ("train", "dropout_rate"),
    "k": ("k",),
}


@dataclass
class SweepSpec:
    param: str
    values: list
    repetitions: int = 1
    base_config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.param not in SWEEP_PARAMS:
            raise ConfigError(f"sweep parameter must be one of {sorted(SWEEP_PARAMS)}")
        if not len(self.values):
            raise ConfigError("sweep grid is empty")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        make_config(self.base_config)

    @classmethod
    def from_dict(cls, values):
        unknown = sorted(set(values) - {"param", "values", "repetitions", "base_config"})
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**values)


def cell_config(spec, value, rep):
    cfg = make_config(spec.base_config)
    path = SWEEP_PARAMS[spec.param]
    if len(path) == 1:
        cfg[path[0]] = value
    else:
        cfg[path[0]] = dict(cfg[path[0]], **{path[1]: value})
    cfg["seed"] = int(cfg["seed"]) + rep
    cfg["repetitions"] = 1
    return cfg


def _run_cell(args):
    cfg = args
    try:
        reps, _ = run_experiment(cfg)
        return {m: r.metrics.to_dict() for m, r in reps[0].items()}, None
    except Exception as exc:  # a failed cell must not abort the grid
        return None, f"{type(exc).__name__}: {exc}"


def _cell_rows(metrics):
    for method, rep in metrics.items():
        yield method, "overall_accuracy", rep["overall_accuracy"]
        for z, acc in enumerate(rep["group_accuracy"]):
            yield method, f"group{z}_accuracy", acc
        if rep["loads"] is not None:
            yield method, "classifier_load", rep["loads"][-1]
        if rep["classifier_weight_share"] is not None:
            yield method, "classifier_weight_share", rep["classifier_weight_share"]


def run_sweep(spec, out_dir=None, workers=1):
    """One experiment per (value, repetition).

    Returns ``(rows, summary)``: long-format rows
    ``(param, value, rep, seed, method, metric, number, status)`` and per-cell
    mean/stderr.  Failed cells get ``status="failed"`` and do not stop the grid.
    """
    cells = [(v, r) for v in spec.values for r in range(spec.repetitions)]
    configs = [cell_config(spec, v, r) for v, r in cells]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_cell, configs))
    else:
        outcomes = [_run_cell(c) for c in configs]
    rows = []
    for (value, rep), cfg, (metrics, err) in zip(cells, configs, outcomes):
        if err is not None:
            logger.warning("sweep cell %s=%s rep %d failed: %s", spec.param, value, rep, err)
            rows.append((spec.param, value, rep, cfg["seed"], "", "error", None, "failed"))
            continue
        for method, metric, number in _cell_rows(metrics):
            rows.append((spec.param, value, rep, cfg["seed"], method, metric, number, "ok"))
    summary = []
    keys = []
    for r in rows:
        if r[7] == "ok" and (r[1], r[4], r[5]) not in keys:
            keys.append((r[1], r[4], r[5]))
    for value, method, metric in keys:
        vals = [r[6] for r in rows if r[7] == "ok" and (r[1], r[4], r[5]) == (value, method, metric)]
        failed = sum(1 for r in rows if r[7] == "failed" and r[1] == value)
        mean, se = summarize(vals)
        summary.append((spec.param, value, method, metric, mean, se, len(vals), failed))
    if out_dir is not None:
        ensure_dir(out_dir)
        with open(os.path.join(out_dir, "sweep_long.csv"), "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["param", "value", "rep", "seed", "method", "metric", "number", "status"])
            w.writerows(rows)
        with open(os.path.join(out_dir, "sweep_summary.csv"), "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["param", "value", "method", "metric", "mean", "stderr", "n_ok", "n_failed"])
            w.writerows(summary)
    return rows, summary


# --------------------------------------------------------- reference setups


def three_cluster_config(seed=0, methods=None):
    """Three-cluster task: linear classifier, input-conditioned deferrer, 3000 full-batch steps."""
    return make_config(
        {
            "seed": seed,
            "generator": "three-cluster",
            "n": 1000,
            "methods": methods or ["joint", "joint-sparse", "classifier-only", "svm", "ll", "crowdselect"],
            "k": 1,
            "baseline_k": 1,
            "cost": 0.0,
            "classifier": {"kind": "linear"},
            "deferrer": {"kind": "input", "hidden_dim": 32},
            "train": {"eta": 0.05, "iters": 3000, "alpha_mode": "constant", "alpha1": 0.0, "alpha2": 1.0},
        }
    )


def biased_experts_config(seed=0, methods=None, repetitions=1, num_experts=20):
    """Grouped task with biased experts: two-layer models, SGD, time-decay weights."""
    return make_config(
        {
            "seed": seed,
            "generator": "grouped",
            "num_experts": num_experts,
            "methods": methods
            or [
                "classifier-only",
                "random-committee",
                "random-fair-committee",
                "ll",
                "crowdselect",
                "joint",
                "balanced",
                "minimax",
                "joint-sparse",
                "balanced-sparse",
                "minimax-sparse",
            ],
            "k": 5,
            "cost": 1.0,
            "repetitions": repetitions,
            "classifier": {"kind": "two-layer", "hidden_dim": 16},
            "deferrer": {"kind": "input", "hidden_dim": 16},
            "train": {
                "eta": 0.1,
                # 100 passes over 2000 training rows in batches of 200
                "iters": 1000,
                "batch_size": 200,
                "alpha_mode": "time-decay",
                "decay_c": 0.5,
                "dropout_rate": 0.2,
                "lam": 0.05,
                "minimax_rounds": 10,
                "minimax_inner_steps": 100,
            },
        }
    )


def missing_data_config(seed=0, num_experts=100, coverage=0.1, methods=None):
    """Sparse crowd labels: many workers, each sees ``coverage`` of the rows; no dropout, no costs."""
    return make_config(
        {
            "seed": seed,
            "generator": "grouped",
            "num_experts": num_experts,
            "coverage": coverage,
            "methods": methods or ["classifier-only", "joint", "joint-sparse"],
            "k": max(1, int(round(0.75 * num_experts))),
            "cost": 0.0,
            "classifier": {"kind": "two-layer", "hidden_dim": 16},
            "deferrer": {"kind": "input", "hidden_dim": 16},
            "train": {
                "eta": 0.3,
                "iters": 1000,
                "batch_size": 200,
                "alpha_mode": "time-decay",
                "decay_c": 0.5,
                "dropout_rate": 0.0,
                "lam": 0.0,
            },
        }
    )
