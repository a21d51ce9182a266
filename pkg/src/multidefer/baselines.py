"""Reference policies: classifier only, random committees, LL-style and CrowdSelect-style selection.

Workers are indexed like the deferrer outputs: human experts ``0..m-2``
and the classifier as the last worker ``m-1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .models import ClassifierModel
from .training import fit_classifier


def majority_vote(votes, num_classes):
    """Row-wise plurality over committee votes (n, k); ties go to the lowest class."""
    votes = np.atleast_2d(np.asarray(votes, dtype=np.int64))
    counts = _kernels.vote_counts(votes, num_classes)
    return np.argmax(counts, axis=1)


def worker_votes(classifier, features, preds):
    """(n, m) label table with the classifier's argmax appended as the last worker."""
    clf = classifier.predict(np.atleast_2d(features))
    return np.concatenate([np.atleast_2d(preds), clf[:, None]], axis=1)


def classifier_only(classifier, features):
    return classifier.predict(np.atleast_2d(features))


# ------------------------------------------------------------ random pools


def random_committee(m_experts, k, seed):
    """Uniform ``k``-subset of ``range(m_experts)`` without replacement, sorted."""
    if not 1 <= k <= m_experts:
        raise ValueError("committee size must lie in 1..m_experts")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return np.sort(rng.choice(m_experts, size=k, replace=False))


def group_accuracy_table(preds, labels, groups, num_groups, mask=None):
    """(experts, groups) train accuracy of each human expert; NaN where unobserved."""
    preds = np.atleast_2d(preds)
    labels = np.asarray(labels)
    groups = np.asarray(groups)
    mask = np.ones(preds.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    correct = (preds == labels[:, None]) & mask
    out = np.full((preds.shape[1], num_groups), np.nan)
    for z in range(num_groups):
        rows = groups == z
        seen = mask[rows].sum(axis=0)
        hits = correct[rows].sum(axis=0)
        out[:, z] = np.where(seen > 0, hits / np.maximum(seen, 1), np.nan)
    return out


def fair_pool(accuracy, group):
    """Experts whose estimated accuracy on ``group`` beats their best other-group accuracy.

    Falls back to every expert when nobody qualifies (e.g. symmetric experts).
    """
    acc = np.nan_to_num(np.asarray(accuracy, dtype=np.float64), nan=0.0)
    others = np.delete(acc, group, axis=1)
    eligible = np.flatnonzero(acc[:, group] > others.max(axis=1))
    if eligible.size == 0:
        return np.arange(acc.shape[0]), True
    return eligible, False


def random_fair_committee(accuracy, group, k, seed):
    """Uniform committee drawn from the experts that favour ``group``.

    Returns ``(members, fell_back)``; when the pool is smaller than ``k`` the
    whole pool is used.
    """
    pool, fell_back = fair_pool(accuracy, group)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    size = min(k, pool.size)
    return np.sort(rng.choice(pool, size=size, replace=False)), fell_back


def predict_random_committee(preds, k, seed, num_classes=2):
    """Per-sample random committee of human experts plus majority vote."""
    preds = np.atleast_2d(preds)
    n, e = preds.shape
    out = np.empty(n, dtype=np.int64)
    members = np.empty((n, k), dtype=np.int64)
    for s in range(n):
        members[s] = random_committee(e, k, np.random.default_rng([int(seed), s]))
        out[s] = majority_vote(preds[s, members[s]][None], num_classes)[0]
    return out, members


def predict_random_fair_committee(preds, groups, accuracy, k, seed, num_classes=2):
    """Per-sample fair committee; returns ``(labels, members, fallback_count)``."""
    preds = np.atleast_2d(preds)
    n = preds.shape[0]
    out = np.empty(n, dtype=np.int64)
    members = []
    fallbacks = 0
    for s in range(n):
        mem, fb = random_fair_committee(accuracy, int(groups[s]), k, np.random.default_rng([int(seed), s]))
        fallbacks += int(fb)
        members.append(mem)
        out[s] = majority_vote(preds[s, mem][None], num_classes)[0]
    return out, members, fallbacks


# ------------------------------------------------------------------ LL


@dataclass(frozen=True)
class ReliabilityTable:
    """Train accuracy per worker, classifier last."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if np.any((v < 0) | (v > 1)):
            raise ValueError("reliabilities must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


def reliability_table(classifier, features, labels, preds, mask=None) -> ReliabilityTable:
    """Accuracy of every worker over the (observed) training rows."""
    votes = worker_votes(classifier, features, preds)
    labels = np.asarray(labels)
    seen = np.ones(votes.shape, dtype=bool)
    if mask is not None:
        seen[:, :-1] = np.asarray(mask, dtype=bool)
    hits = ((votes == labels[:, None]) & seen).sum(axis=0)
    count = seen.sum(axis=0)
    return ReliabilityTable(np.where(count > 0, hits / np.maximum(count, 1), 0.0))


def ll_select(reliabilities, k):
    """The ``k`` most reliable workers (ties to the lower index), one committee for every input."""
    r = reliabilities.values if isinstance(reliabilities, ReliabilityTable) else np.asarray(reliabilities)
    if not 1 <= k <= r.size:
        raise ValueError("k must lie in 1..number of workers")
    order = np.argsort(-r, kind="stable")
    return np.sort(order[:k])


def predict_committee(votes, members, num_classes):
    """Majority vote of a fixed committee over every row of ``votes`` (n, m)."""
    return majority_vote(np.atleast_2d(votes)[:, np.asarray(members)], num_classes)


# ----------------------------------------------------------- CrowdSelect


@dataclass
class ErrorModelSet:
    """One correctness predictor per worker; ``models[i]`` estimates P(worker i correct | x)."""

    models: list

    def __len__(self):
        return len(self.models)

    def predict(self, features):
        """(n, workers) predicted probability of a correct answer."""
        x = np.atleast_2d(features)
        return np.stack([m.forward(x)[:, 1] for m in self.models], axis=1)


def crowdselect_train(
    classifier, features, labels, preds, num_classes=2, hidden_dim=16, eta=0.5, iters=2000, seed=0
) -> ErrorModelSet:
    """Fit a two-layer correctness model for every worker on the training rows.

    The classifier takes part as the last worker, with correctness computed
    from its own predictions on the same rows.
    """
    if num_classes != 2:
        raise ValueError("CrowdSelect-style selection is only defined for binary tasks")
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    votes = worker_votes(classifier, x, preds)
    correct = (votes == np.asarray(labels)[:, None]).astype(np.int64)
    models = []
    for i in range(votes.shape[1]):
        h = ClassifierModel(x.shape[1], 2, "two-layer", hidden_dim=hidden_dim, seed=seed + i)
        models.append(fit_classifier(h, x, correct[:, i], eta=eta, iters=iters))
    return ErrorModelSet(models)


def crowdselect_predict(error_models, classifier, features, preds, k):
    """Per input, majority vote of the ``k`` workers with the highest predicted correctness.

    Returns ``(labels, members)`` with members shaped (n, k).
    """
    x = np.atleast_2d(features)
    scores = error_models.predict(x)
    if not 1 <= k <= scores.shape[1]:
        raise ValueError("k must lie in 1..number of workers")
    order = np.argsort(-scores, axis=1, kind="stable")[:, :k]
    members = np.sort(order, axis=1)
    votes = worker_votes(classifier, x, preds)
    chosen = np.take_along_axis(votes, members, axis=1)
    return majority_vote(chosen, 2), members
