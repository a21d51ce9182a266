"""Prediction with the full weighted committee or a sampled sparse committee."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .losses import aggregate_proba, log_sigma


@dataclass(frozen=True)
class CommitteeDraw:
    members: np.ndarray  # expert indices, repeats kept; identity expert is m-1
    weight_mass: float
    weights: np.ndarray

    @property
    def k(self):
        return self.members.size


def identity_onehot(classifier, features):
    probs = classifier.forward(np.atleast_2d(features))
    out = np.zeros_like(probs)
    out[np.arange(probs.shape[0]), np.argmax(probs, axis=1)] = 1.0
    return out


def _observed_weights(weights, mask):
    """Zero the weights of unobserved human experts; the identity column stays."""
    w = np.array(weights, dtype=np.float64, copy=True)
    w[:, :-1] = np.where(mask, w[:, :-1], 0.0)
    return w


def predict_batch(classifier, deferrer, features, preds, mask):
    """Labels, aggregated distributions and deferrer weights for a batch.

    The identity expert votes with the one-hot of the classifier's argmax.
    Ties in the aggregated distribution go to the lowest class index.
    """
    features = np.atleast_2d(features)
    preds = np.atleast_2d(preds)
    mask = np.atleast_2d(mask)
    weights = deferrer.forward(features)
    ident = identity_onehot(classifier, features)
    scores = _kernels.class_scores(weights, preds, mask, ident)
    probs = aggregate_proba(scores)
    return np.argmax(probs, axis=1), probs, weights


def predict(classifier, deferrer, x, preds, mask=None):
    """Single-sample prediction; returns ``(label, distribution)``."""
    preds = np.asarray(preds)
    mask = np.ones(preds.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    labels, probs, _ = predict_batch(classifier, deferrer, np.atleast_2d(x), preds[None], mask[None])
    return int(labels[0]), probs[0]


def sample_committee(weights, k, rng, observed=None) -> CommitteeDraw:
    """Draw ``k`` experts i.i.d. with probability proportional to ``weights``."""
    if k < 1:
        raise ValueError("committee size must be >= 1")
    w = np.asarray(weights, dtype=np.float64).copy()
    if observed is not None:
        w[:-1] = np.where(np.asarray(observed, dtype=bool), w[:-1], 0.0)
    total = w.sum()
    if not total > 0:
        raise ValueError("cannot sample a committee from all-zero weights")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    u = rng.random((1, 1, k))
    members = _kernels.draw_members(w[None, :], u)[0, 0]
    return CommitteeDraw(members=members, weight_mass=float(total), weights=w)


def _sample_rngs(seed, n):
    return [np.random.default_rng([int(seed), s]) for s in range(n)]


def _committee_uniforms(seed, n, trials, k):
    u = np.empty((n, trials, k))
    for s, rng in enumerate(_sample_rngs(seed, n)):
        u[s] = rng.random((trials, k))
    return u


def _all_votes(classifier, features, preds):
    """(n, m) class index voted by every expert, identity last."""
    ident = np.argmax(classifier.forward(np.atleast_2d(features)), axis=1)
    return np.concatenate([np.atleast_2d(preds), ident[:, None]], axis=1)


def _sparse_scores(members, votes, mass, k, num_classes):
    """Score tensor (n, trials, C): mass times the committee's mean one-hot."""
    n, trials, _ = members.shape
    voted = np.take_along_axis(votes[:, None, :], members, axis=2)
    counts = _kernels.vote_counts(voted.reshape(n * trials, k), num_classes)
    return counts.reshape(n, trials, num_classes) * (mass[:, None, None] / k)


def predict_sparse_batch(classifier, deferrer, features, preds, mask, k, seed):
    """Sparse-committee predictions with one RNG stream per sample index.

    Returns ``(labels, distributions, members)``, members shaped (n, k).
    """
    if k < 1:
        raise ValueError("committee size must be >= 1")
    features = np.atleast_2d(features)
    preds = np.atleast_2d(preds)
    mask = np.atleast_2d(mask)
    weights = _observed_weights(deferrer.forward(features), mask)
    n = features.shape[0]
    members = _kernels.draw_members(weights, _committee_uniforms(seed, n, 1, k))
    votes = _all_votes(classifier, features, preds)
    mass = weights.sum(axis=1)
    scores = _sparse_scores(members, votes, mass, k, classifier.num_classes)[:, 0, :]
    probs = aggregate_proba(scores)
    return np.argmax(probs, axis=1), probs, members[:, 0, :]


def predict_sparse(classifier, deferrer, x, preds, mask, k, rng):
    """Single-sample sparse prediction; returns ``(label, distribution, draw)``."""
    preds = np.asarray(preds)
    mask = np.ones(preds.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    weights = deferrer.forward(np.atleast_2d(x))[0]
    draw = sample_committee(weights, k, rng, observed=mask)
    votes = _all_votes(classifier, x, preds[None])[0]
    counts = np.bincount(votes[draw.members], minlength=classifier.num_classes)
    scores = draw.weight_mass * counts / k
    probs = aggregate_proba(scores[None])[0]
    return int(np.argmax(probs)), probs, draw


def top_k_committee(weights, k):
    """Indices of the ``k`` largest weights (lower index wins ties), ascending."""
    w = np.asarray(weights, dtype=np.float64)
    if not 1 <= k <= w.size:
        raise ValueError("k must lie in 1..m")
    order = np.argsort(-w, kind="stable")
    return np.sort(order[:k])


def mad(weights, values):
    """Mean absolute deviation of ``values`` under the distribution ``weights / sum``."""
    w = np.asarray(weights, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    total = w.sum()
    if not total > 0:
        raise ValueError("mean absolute deviation needs positive total weight")
    p = w / total
    mean = p @ v
    return float(p @ np.abs(v - mean))


def sparsity_bound_check(classifier, deferrer, features, preds, mask, k, trials=1000, seed=0):
    """Monte-Carlo check of the sparse-vs-full log-probability gap.

    For every sample compares ``E|log Y_full - log Y_sparse|`` (class-1
    probabilities, expectation over ``trials`` committees) with
    ``s_D * ||D||_1 + max(2 ||D||_1, 1)``.
    """
    if classifier.num_classes != 2:
        raise ValueError("the sparsity bound is stated for binary labels")
    if k < 1 or trials < 1:
        raise ValueError("committee size and trial count must be >= 1")
    features = np.atleast_2d(features)
    preds = np.atleast_2d(preds)
    mask = np.atleast_2d(mask)
    n = features.shape[0]
    weights = _observed_weights(deferrer.forward(features), mask)
    votes = _all_votes(classifier, features, preds)
    class1 = (votes == 1).astype(np.float64)
    mass = weights.sum(axis=1)
    full_score = np.einsum("nm,nm->n", weights, class1)
    lhs = np.zeros(n)
    s_d = np.zeros(n)
    positive = mass > 0
    if np.any(positive):
        idx = np.flatnonzero(positive)
        members = _kernels.draw_members(weights[idx], _committee_uniforms(seed, n, trials, k)[idx])
        sparse = _sparse_scores(members, votes[idx], mass[idx], k, 2)[:, :, 1]
        gap = np.abs(log_sigma(full_score[idx])[:, None] - log_sigma(sparse))
        lhs[idx] = gap.mean(axis=1)
        s_d[idx] = [mad(weights[i], class1[i]) for i in idx]
    rhs = s_d * mass + np.maximum(2.0 * mass, 1.0)
    return {"lhs": lhs, "rhs": rhs, "s_d": s_d, "mass": mass, "holds": lhs < rhs}
