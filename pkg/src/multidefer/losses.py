"""Joint classifier/deferrer objective and its gradients.

Per sample the objective is::

    alpha1 * L_clf + alpha2 * L_defer + lam * sum_i cost_i * D_i   (active human experts)

where ``L_clf`` is the classifier log-loss and ``L_defer`` the negative
log-likelihood of the aggregated prediction.  For two classes the aggregate
probability of label 1 is ``sigma(s_1)`` with ``sigma(x) = e^x / (e^x + e^(1-x))``
and ``s_1`` the deferrer-weighted vote for label 1; for more classes it is the
softmax of the per-class weighted votes.

During training the identity expert contributes the classifier's soft output
F(x) so that the deferral term also trains the classifier.  Dropped-out and
unobserved experts contribute nothing to the score, the regulariser or the
gradient of that sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .models import logistic

_LN2 = np.log(2.0)


def sigma(x):
    """``e^x / (e^x + e^(1-x))`` evaluated as ``logistic(2x - 1)``."""
    arr = np.asarray(x, dtype=np.float64)
    out = logistic(np.atleast_1d(2.0 * arr - 1.0))
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def _softplus(z):
    return np.logaddexp(0.0, z)


def log_sigma(x):
    """``log sigma(x)`` without cancellation."""
    return -_softplus(1.0 - 2.0 * np.asarray(x, dtype=np.float64))


@dataclass
class LossConfig:
    """Weights of the three loss terms.

    ``alpha2`` may be a per-sample array (indicator schedule).  ``costs`` is a
    vector over human experts or an (n, experts) table; ``None`` means unit
    cost.
    """

    alpha1: float = 1.0
    alpha2: float | np.ndarray = 1.0
    lam: float = 0.0
    dropout_rate: float = 0.0
    costs: np.ndarray | None = None

    def __post_init__(self):
        if self.alpha1 < 0 or np.any(np.asarray(self.alpha2) < 0):
            raise ValueError("alpha1 and alpha2 must be >= 0")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")


@dataclass
class Batch:
    """Training rows with human-expert predictions and their observation mask."""

    features: np.ndarray
    labels: np.ndarray
    preds: np.ndarray
    mask: np.ndarray
    num_classes: int
    groups: np.ndarray | None = None
    costs: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.preds = np.asarray(self.preds, dtype=np.int64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.groups is not None:
            self.groups = np.asarray(self.groups, dtype=np.int64)

    def __len__(self):
        return self.labels.shape[0]

    @classmethod
    def from_data(cls, dataset, experts, indices=None):
        if indices is None:
            indices = np.arange(len(dataset))
        return cls(
            dataset.features[indices],
            dataset.labels[indices],
            experts.predictions[indices],
            experts.mask[indices],
            dataset.num_classes,
            dataset.groups[indices],
        )

    def take(self, idx):
        return Batch(
            self.features[idx],
            self.labels[idx],
            self.preds[idx],
            self.mask[idx],
            self.num_classes,
            None if self.groups is None else self.groups[idx],
            self.costs if self.costs is None or np.ndim(self.costs) == 1 else self.costs[idx],
        )


# ------------------------------------------------------------ aggregation


def aggregate_proba(scores):
    """Label distribution from per-class weighted votes (n, C)."""
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    if scores.shape[1] == 2:
        p1 = sigma(scores[:, 1])
        return np.stack([1.0 - p1, p1], axis=1)
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def predict_proba(deferrer_out, expert_onehots, observed=None):
    """Aggregated distribution for one sample.

    ``expert_onehots`` is (C, m) with the identity expert as the last column;
    columns flagged False in ``observed`` are dropped from the vote.  The
    identity column is always kept.
    """
    d = np.asarray(deferrer_out, dtype=np.float64)
    ye = np.asarray(expert_onehots, dtype=np.float64)
    if ye.shape[1] != d.shape[0]:
        raise ValueError("expert_onehots must have one column per deferrer weight")
    keep = np.ones(d.shape[0], dtype=bool) if observed is None else np.asarray(observed, bool).copy()
    keep[-1] = True
    scores = ye[:, keep] @ d[keep]
    return aggregate_proba(scores[None, :])[0]


def _deferral_nll(scores, labels):
    """Per-sample NLL and dL/dscores for the aggregated prediction."""
    n, c = scores.shape
    rows = np.arange(n)
    if c == 2:
        t = 2.0 * scores[:, 1] - 1.0
        y = labels.astype(np.float64)
        nll = y * _softplus(-t) + (1.0 - y) * _softplus(t)
        grad = np.zeros_like(scores)
        grad[:, 1] = 2.0 * (logistic(t) - y)
        return nll, grad
    z = scores - scores.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    nll = lse - z[rows, labels]
    grad = np.exp(z - lse[:, None])
    grad[rows, labels] -= 1.0
    return nll, grad


def _cost_table(costs, n, h):
    if costs is None:
        return np.ones((n, h))
    costs = np.asarray(getattr(costs, "costs", costs), dtype=np.float64)
    if costs.ndim == 1:
        if costs.shape[0] != h:
            raise ValueError(f"expected {h} expert costs, got {costs.shape[0]}")
        return np.broadcast_to(costs, (n, h))
    return costs


def _broadcast_alpha(alpha, n):
    return np.broadcast_to(np.asarray(alpha, dtype=np.float64), (n,))


@dataclass
class LossTerms:
    clf: np.ndarray
    defer: np.ndarray
    reg: np.ndarray
    total: np.ndarray
    scores: np.ndarray
    defer_grad_scores: np.ndarray
    active: np.ndarray


def loss_terms_from_outputs(
    probs, weights, labels, preds, active, cfg, costs=None, log_probs=None
) -> LossTerms:
    """Per-sample loss terms given classifier outputs and deferrer weights.

    ``active`` (n, m-1) is already the intersection of observation and dropout
    masks.  This is the form in which the loss is convex in both the
    classifier output and the deferrer output.
    """
    probs = np.asarray(probs, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    n = probs.shape[0]
    rows = np.arange(n)
    if log_probs is None:
        log_probs = np.log(np.maximum(probs, 1e-300))
    clf = -log_probs[rows, labels]
    scores = _kernels.class_scores(weights, preds, active, probs)
    defer, g_scores = _deferral_nll(scores, labels)
    h = weights.shape[1] - 1
    cost = _cost_table(costs if costs is not None else cfg.costs, n, h)
    reg_per = np.where(active, cost * weights[:, :h], 0.0).sum(axis=1)
    a1 = cfg.alpha1
    a2 = _broadcast_alpha(cfg.alpha2, n)
    total = a1 * clf + a2 * defer + cfg.lam * reg_per
    return LossTerms(clf, defer, reg_per, total, scores, g_scores, active)


def _active_mask(batch, dropout_mask):
    if dropout_mask is None:
        return batch.mask
    dm = np.asarray(dropout_mask, dtype=bool)
    # accept masks with or without the identity column
    if dm.shape[1] == batch.mask.shape[1] + 1:
        dm = dm[:, :-1]
    return batch.mask & dm


def _weights_or_ones(sample_weight, n):
    if sample_weight is None:
        return np.ones(n)
    w = np.asarray(sample_weight, dtype=np.float64)
    if w.shape != (n,) or np.any(w < 0):
        raise ValueError("sample_weight must be a non-negative vector over the batch")
    return w


def per_sample_loss(classifier, deferrer, batch, cfg, dropout_mask=None) -> LossTerms:
    logits = classifier.logits(batch.features)
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    probs = np.exp(log_probs)
    weights = deferrer.forward(batch.features)
    active = _active_mask(batch, dropout_mask)
    return loss_terms_from_outputs(
        probs, weights, batch.labels, batch.preds, active, cfg, batch.costs, log_probs
    )


def joint_loss(classifier, deferrer, batch, cfg, dropout_mask=None, sample_weight=None) -> float:
    """Weighted mean of per-sample objectives over the batch."""
    terms = per_sample_loss(classifier, deferrer, batch, cfg, dropout_mask)
    w = _weights_or_ones(sample_weight, len(batch))
    return float(np.dot(w, terms.total) / w.sum())


def joint_loss_and_grad(classifier, deferrer, batch, cfg, dropout_mask=None, sample_weight=None):
    """Return ``(loss, grad_classifier_params, grad_deferrer_params, terms)``."""
    n = len(batch)
    w = _weights_or_ones(sample_weight, n)
    scale = w / w.sum()

    logits, c_cache = classifier.logits(batch.features, return_cache=True)
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    probs = np.exp(log_probs)
    weights, d_cache = deferrer.forward(batch.features, return_cache=True)
    active = _active_mask(batch, dropout_mask)
    terms = loss_terms_from_outputs(
        probs, weights, batch.labels, batch.preds, active, cfg, batch.costs, log_probs
    )
    loss = float(np.dot(scale, terms.total))

    a2 = _broadcast_alpha(cfg.alpha2, n) * scale
    g_weights, g_identity = _kernels.score_backward(
        terms.defer_grad_scores * a2[:, None], weights, batch.preds, active, probs
    )
    h = weights.shape[1] - 1
    if cfg.lam:
        cost = _cost_table(batch.costs if batch.costs is not None else cfg.costs, n, h)
        g_weights[:, :h] += cfg.lam * np.where(active, cost, 0.0) * scale[:, None]

    onehot = np.zeros_like(probs)
    onehot[np.arange(n), batch.labels] = 1.0
    g_logits = (cfg.alpha1 * scale)[:, None] * (probs - onehot)
    g_logits += probs * (g_identity - np.sum(g_identity * probs, axis=1, keepdims=True))
    g_clf = classifier.backward_logits(c_cache, g_logits)
    g_def = deferrer.backward(d_cache, g_weights)
    return loss, g_clf, g_def, terms


def group_losses(classifier, deferrer, batch, cfg, groups=None, num_groups=None, dropout_mask=None):
    """Mean objective restricted to each protected group; NaN where a group is absent."""
    groups = batch.groups if groups is None else np.asarray(groups, dtype=np.int64)
    if groups is None:
        raise ValueError("group labels are required")
    terms = per_sample_loss(classifier, deferrer, batch, cfg, dropout_mask)
    return _group_means(terms.total, groups, num_groups)


def _group_means(values, groups, num_groups=None):
    k = int(num_groups) if num_groups is not None else int(groups.max()) + 1
    sums = np.bincount(groups, weights=values, minlength=k)
    counts = np.bincount(groups, minlength=k)
    out = np.full(k, np.nan)
    present = counts > 0
    out[present] = sums[present] / counts[present]
    return out


def deferrer_gradient_binary(weights, label, expert_class1):
    """Closed-form ``dL_defer/dD`` for one binary sample.

    ``expert_class1`` holds the label-1 indicator of every expert (identity
    last).  Correct label-1 voters get ``-2 e^(1-s)/(e^s + e^(1-s))``,
    wrong label-1 voters get ``+2 e^s/(e^s + e^(1-s))``; label-0 voters get 0.
    """
    d = np.asarray(weights, dtype=np.float64)
    ye1 = np.asarray(expert_class1, dtype=np.float64)
    s = float(d @ ye1)
    # 2 e^(1-s) / (e^s + e^(1-s)) = 2 (1 - sigma(s));  2 e^s / (...) = 2 sigma(s)
    if label == 1:
        return -2.0 * (1.0 - sigma(s)) * ye1
    return 2.0 * sigma(s) * ye1


def apply_dropout(num_experts, rate, rng, num_samples=1):
    """Keep-mask (num_samples, num_experts + 1); the identity column is always kept."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must lie in [0, 1)")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    keep = np.ones((num_samples, num_experts + 1), dtype=bool)
    if rate > 0.0 and num_experts:
        keep[:, :num_experts] = rng.random((num_samples, num_experts)) >= rate
    return keep


def lipschitz_hint(features):
    """Largest eigenvalue of the feature covariance (smoothness of logistic log-loss)."""
    x = np.asarray(features, dtype=np.float64)
    if x.shape[0] < 2:
        return float(np.max(np.sum(x * x, axis=1))) if x.size else 0.0
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    return float(np.linalg.eigvalsh(cov)[-1])


def suggested_step(lipschitz, num_experts, c=0.5):
    """Step size ``c / (lipschitz + m)``."""
    return c / (lipschitz + num_experts)
