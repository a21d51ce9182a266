"""Gradient-descent training loops for the joint, balanced and minimax objectives."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .losses import LossConfig, apply_dropout, joint_loss_and_grad, per_sample_loss, _group_means

ALPHA_MODES = ("constant", "time-decay", "indicator")
FAIRNESS_MODES = ("none", "balanced", "minimax")


class TrainingError(RuntimeError):
    """Optimisation diverged (non-finite loss)."""


@dataclass
class TrainConfig:
    eta: float = 0.05
    iters: int = 1000
    batch_size: int | None = None  # None means full batch
    alpha_mode: str = "constant"
    alpha1: float = 1.0
    alpha2: float = 1.0
    decay_c: float = 0.5
    fairness: str = "none"
    minimax_rounds: int = 20
    minimax_inner_steps: int = 50
    group_lr: float = 1.0
    dropout_rate: float = 0.0
    lam: float = 0.0
    seed: int = 0
    lipschitz_hint: float | None = None
    debug: bool = False

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be > 0")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if self.alpha_mode not in ALPHA_MODES:
            raise ValueError(f"alpha_mode must be one of {ALPHA_MODES}")
        if self.alpha_mode == "time-decay" and self.decay_c <= 0:
            raise ValueError("decay_c must be > 0")
        if self.fairness not in FAIRNESS_MODES:
            raise ValueError(f"fairness must be one of {FAIRNESS_MODES}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1 or None")
        if self.minimax_rounds < 1 or self.minimax_inner_steps < 1:
            raise ValueError("minimax rounds and inner steps must be >= 1")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, values):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise KeyError(f"unknown TrainConfig key(s): {', '.join(unknown)}")
        return cls(**values)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class TrainReport:
    loss_trace: np.ndarray
    group_loss_trace: np.ndarray
    classifier: object
    deferrer: object
    wall_clock: float = 0.0
    iterations: int = 0
    group_weight_trace: np.ndarray | None = None
    round_max_loss: np.ndarray | None = None
    best_round: int | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self, include_timing=False):
        out = {
            "iterations": self.iterations,
            "loss_trace": [float(v) for v in self.loss_trace],
            "group_loss_trace": [[_nan_to_none(v) for v in row] for row in self.group_loss_trace],
        }
        if self.group_weight_trace is not None:
            out["group_weight_trace"] = self.group_weight_trace.tolist()
            out["round_max_loss"] = self.round_max_loss.tolist()
            out["best_round"] = self.best_round
        if include_timing:
            out["wall_clock"] = self.wall_clock
        return out

    def save(self, path, include_timing=False):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(include_timing), fh, indent=1)
            fh.write("\n")


def _nan_to_none(v):
    v = float(v)
    return None if np.isnan(v) else v


def alpha_schedule(mode, t, classifier_correct=None, alpha1=1.0, alpha2=1.0, c=0.5):
    """Loss weights ``(alpha1, alpha2)`` at iteration ``t >= 1``.

    ``time-decay`` gives ``(1, 1 - t**-c)``; ``indicator`` gives
    ``(1, 1[classifier wrong])`` per sample.
    """
    if mode == "constant":
        return float(alpha1), float(alpha2)
    if mode == "time-decay":
        if t < 1:
            raise ValueError("iteration index starts at 1")
        return 1.0, 1.0 - float(t) ** (-c)
    if mode == "indicator":
        if classifier_correct is None:
            raise ValueError("indicator schedule needs per-sample classifier correctness")
        return 1.0, 1.0 - np.asarray(classifier_correct, dtype=np.float64)
    raise ValueError(f"unknown alpha mode {mode!r}")


class _Stepper:
    """Holds the optimisation state so the minimax loop can resume it between rounds."""

    def __init__(self, batch, classifier, deferrer, cfg, num_groups):
        self.batch = batch
        self.classifier = classifier
        self.deferrer = deferrer
        self.cfg = cfg
        self.num_groups = num_groups
        self.rng = np.random.default_rng(cfg.seed)
        self.t = 0
        self._order = np.empty(0, dtype=np.int64)
        self._pos = 0
        self.losses = []
        self.group_losses = []
        self.num_human = batch.preds.shape[1]

    def _next_indices(self):
        n = len(self.batch)
        bs = self.cfg.batch_size
        if bs is None or bs >= n:
            return None
        if self._pos >= self._order.size:
            self._order = self.rng.permutation(n)
            self._pos = 0
        idx = self._order[self._pos : self._pos + bs]
        self._pos += bs
        return idx

    def loss_config(self, t, batch):
        cfg = self.cfg
        correct = None
        if cfg.alpha_mode == "indicator":
            correct = self.classifier.predict(batch.features) == batch.labels
        a1, a2 = alpha_schedule(cfg.alpha_mode, max(t, 1), correct, cfg.alpha1, cfg.alpha2, cfg.decay_c)
        return LossConfig(alpha1=a1, alpha2=a2, lam=cfg.lam, dropout_rate=cfg.dropout_rate)

    def step(self, sample_weight=None):
        self.t += 1
        idx = self._next_indices()
        batch = self.batch if idx is None else self.batch.take(idx)
        w = sample_weight if sample_weight is None or idx is None else sample_weight[idx]
        drop = None
        if self.cfg.dropout_rate > 0:
            drop = apply_dropout(self.num_human, self.cfg.dropout_rate, self.rng, len(batch))
        lcfg = self.loss_config(self.t, batch)
        loss, g_clf, g_def, terms = joint_loss_and_grad(
            self.classifier, self.deferrer, batch, lcfg, drop, w
        )
        if not np.isfinite(loss) or not (np.all(np.isfinite(g_clf)) and np.all(np.isfinite(g_def))):
            raise TrainingError(f"non-finite loss or gradient at iteration {self.t}")
        eta = self.cfg.eta
        self.classifier.params -= eta * g_clf
        self.deferrer.params -= eta * g_def
        self.deferrer.project()
        if self.cfg.debug and self.deferrer.kind == "global":
            assert np.all((self.deferrer.params >= 0) & (self.deferrer.params <= 1))
        self.losses.append(loss)
        if batch.groups is not None:
            self.group_losses.append(_group_means(terms.total, batch.groups, self.num_groups))
        else:
            self.group_losses.append(np.array([loss]))
        return loss

    def evaluate_groups(self):
        """Group objectives on the whole training set, no dropout."""
        lcfg = self.loss_config(self.t, self.batch)
        terms = per_sample_loss(self.classifier, self.deferrer, self.batch, lcfg)
        return _group_means(terms.total, self.batch.groups, self.num_groups)

    def report(self, start, **kw):
        return TrainReport(
            loss_trace=np.array(self.losses),
            group_loss_trace=np.array(self.group_losses),
            classifier=kw.pop("classifier", self.classifier),
            deferrer=kw.pop("deferrer", self.deferrer),
            wall_clock=time.perf_counter() - start,
            iterations=self.t,
            **kw,
        )


def _num_groups(batch, num_groups):
    if batch.groups is None:
        return 1
    if num_groups is not None:
        return int(num_groups)
    return int(batch.groups.max()) + 1 if len(batch) else 1


def _check_models(batch, classifier, deferrer):
    if classifier.input_dim != batch.features.shape[1] or deferrer.input_dim != batch.features.shape[1]:
        raise ValueError("model input dimension does not match the data")
    if deferrer.num_experts != batch.preds.shape[1] + 1:
        raise ValueError("deferrer must have one output per human expert plus the identity expert")
    if classifier.num_classes != batch.num_classes:
        raise ValueError("classifier class count does not match the data")


def train_joint(batch, classifier, deferrer, cfg, sample_weight=None, num_groups=None) -> TrainReport:
    """Simultaneous (projected) gradient descent on classifier and deferrer.

    Input models are copied; the trained copies are returned in the report.
    """
    _check_models(batch, classifier, deferrer)
    start = time.perf_counter()
    stepper = _Stepper(batch, classifier.copy(), deferrer.copy(), cfg, _num_groups(batch, num_groups))
    w = None if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    for _ in range(cfg.iters):
        stepper.step(w)
    return stepper.report(start)


def balanced_weights(groups, num_groups=None):
    """Per-sample weights proportional to ``1 / P(Z = z)``, normalised to mean 1."""
    groups = np.asarray(groups, dtype=np.int64)
    k = int(num_groups) if num_groups is not None else int(groups.max()) + 1
    counts = np.bincount(groups, minlength=k)
    if np.any(counts == 0):
        raise ValueError(f"empty protected group(s): {np.flatnonzero(counts == 0).tolist()}")
    freq = counts / groups.size
    return 1.0 / (k * freq[groups])


def train_balanced(batch, classifier, deferrer, cfg, num_groups=None) -> TrainReport:
    """Train on the unweighted sum of group objectives via inverse-frequency weights."""
    if batch.groups is None:
        raise ValueError("balanced training needs group labels")
    w = balanced_weights(batch.groups, num_groups)
    return train_joint(batch, classifier, deferrer, cfg, sample_weight=w, num_groups=num_groups)


def train_minimax(batch, classifier, deferrer, cfg, num_groups=None) -> TrainReport:
    """Two-player minimax training over protected groups.

    Each round runs ``cfg.minimax_inner_steps`` weighted gradient steps, then
    multiplies group ``z``'s weight by ``exp(group_lr * L^z)`` and
    renormalises.  The returned models are the round iterate with the
    smallest worst-group objective.
    """
    if batch.groups is None:
        raise ValueError("minimax training needs group labels")
    _check_models(batch, classifier, deferrer)
    k = _num_groups(batch, num_groups)
    counts = np.bincount(batch.groups, minlength=k)
    if np.any(counts == 0):
        raise ValueError(f"empty protected group(s): {np.flatnonzero(counts == 0).tolist()}")
    freq = counts / counts.sum()
    start = time.perf_counter()
    stepper = _Stepper(batch, classifier.copy(), deferrer.copy(), cfg, k)
    lam = np.full(k, 1.0 / k)
    weight_trace, round_max = [], []
    best = None
    for r in range(cfg.minimax_rounds):
        weight_trace.append(lam.copy())
        sample_weight = (lam / freq)[batch.groups] if k > 1 else None
        for _ in range(cfg.minimax_inner_steps):
            stepper.step(sample_weight)
        group_loss = stepper.evaluate_groups()
        worst = float(np.max(group_loss))
        round_max.append(worst)
        if best is None or worst < best[0]:
            best = (worst, r, stepper.classifier.copy(), stepper.deferrer.copy())
        logits = np.log(lam) + cfg.group_lr * group_loss
        lam = np.exp(logits - logits.max())
        lam /= lam.sum()
    return stepper.report(
        start,
        classifier=best[2],
        deferrer=best[3],
        group_weight_trace=np.array(weight_trace),
        round_max_loss=np.array(round_max),
        best_round=best[1],
    )


def train(batch, classifier, deferrer, cfg, num_groups=None) -> TrainReport:
    """Dispatch on ``cfg.fairness``."""
    if cfg.fairness == "balanced":
        return train_balanced(batch, classifier, deferrer, cfg, num_groups)
    if cfg.fairness == "minimax":
        return train_minimax(batch, classifier, deferrer, cfg, num_groups)
    return train_joint(batch, classifier, deferrer, cfg, num_groups=num_groups)


def fit_classifier(classifier, features, labels, eta=0.5, iters=1000, sample_weight=None):
    """Plain full-batch gradient descent on the classifier log-loss; returns a trained copy."""
    model = classifier.copy()
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n = y.shape[0]
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    scale = (w / w.sum())[:, None]
    onehot = np.zeros((n, model.num_classes))
    onehot[np.arange(n), y] = 1.0
    for _ in range(iters):
        probs, cache = model.forward(x, return_cache=True)
        grad = model.backward_logits(cache, scale * (probs - onehot))
        model.params -= eta * grad
    return model
