"""Synthetic datasets and simulated experts.

Expert-private information (cluster identity, protected group as seen by an
expert) only exists in the metadata returned here, never in
``Dataset.features``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .data import Dataset, ExpertPredictionMatrix

ORANGE, BLUE, GREEN = 0, 1, 2
CLUSTER_NAMES = ("orange", "blue", "green")


@dataclass(frozen=True)
class ClusterExpertSpec:
    """Correct on ``competent_cluster``, uniformly random label elsewhere."""

    competent_cluster: int


@dataclass(frozen=True)
class BiasedExpertSpec:
    """Group-dependent accuracy: ``p`` on group 0, ``q`` on group 1."""

    p: float
    q: float
    favored_group: int

    def accuracy(self, group):
        return self.p if group == 0 else self.q


@dataclass
class ThreeClusterData:
    dataset: Dataset
    clusters: np.ndarray
    experts: list
    mean: np.ndarray
    cov_diag: np.ndarray

    def metadata(self):
        return {
            "generator": "three-cluster",
            "clusters": self.clusters.tolist(),
            "cluster_names": list(CLUSTER_NAMES),
            "experts": [asdict(e) for e in self.experts],
            "mean": self.mean.tolist(),
            "cov_diag": self.cov_diag.tolist(),
        }


def _cluster_sizes(n, parts):
    base, extra = divmod(n, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def gen_three_cluster_dataset(seed, n=1000) -> ThreeClusterData:
    """Two-feature, three-cluster binary task.

    Orange is split evenly into a label-1 blob at ``mu`` and a label-0 blob at
    ``mu + 3``; blue sits at ``mu + 6`` and green at ``mu + 9`` with labels
    that are fair coin flips.  Expert 1 knows blue, expert 2 knows green.
    """
    rng = np.random.default_rng(seed)
    mu = rng.uniform(0.0, 1.0, 2)
    var = rng.uniform(0.0, 1.0, 2)
    sd = np.sqrt(var)
    n_orange, n_blue, n_green = _cluster_sizes(n, 3)
    n_pos = n_orange // 2 + n_orange % 2
    blocks = [
        (mu, n_pos, ORANGE, np.ones(n_pos, dtype=np.int64)),
        (mu + 3.0, n_orange - n_pos, ORANGE, np.zeros(n_orange - n_pos, dtype=np.int64)),
        (mu + 6.0, n_blue, BLUE, rng.integers(0, 2, n_blue)),
        (mu + 9.0, n_green, GREEN, rng.integers(0, 2, n_green)),
    ]
    feats, labels, clusters = [], [], []
    for center, size, cluster, lab in blocks:
        feats.append(center + sd * rng.standard_normal((size, 2)))
        labels.append(lab)
        clusters.append(np.full(size, cluster))
    order = rng.permutation(n)
    features = np.concatenate(feats)[order]
    labels = np.concatenate(labels)[order]
    clusters = np.concatenate(clusters)[order]
    ds = Dataset(features, labels, np.zeros(n, dtype=np.int64), num_classes=2, num_groups=1)
    experts = [ClusterExpertSpec(BLUE), ClusterExpertSpec(GREEN)]
    return ThreeClusterData(ds, clusters, experts, mu, var)


def biased_expert_counts(m):
    """(experts biased against group 1, experts biased against group 0) for ``m``."""
    return (3 * m) // 4, math.ceil(m / 4)


def gen_biased_experts(m, seed, keep_all=False):
    """Sample group-biased experts.

    ``floor(3m/4)`` experts draw ``p ~ U(0.6, 1)``, ``q ~ U(0.6, p)`` and use
    ``p`` on group 0, ``q`` on group 1; ``ceil(m/4)`` experts swap the roles.
    That is ``m`` specs; the last is discarded so that ``m - 1`` human
    experts remain next to the classifier (``keep_all`` returns all ``m``).
    """
    if m < 2:
        raise ValueError("need m >= 2 (at least one human expert)")
    rng = np.random.default_rng(seed)
    n_against_1, n_against_0 = biased_expert_counts(m)
    specs = []
    for i in range(n_against_1 + n_against_0):
        hi = rng.uniform(0.6, 1.0)
        lo = rng.uniform(0.6, hi)
        if i < n_against_1:
            specs.append(BiasedExpertSpec(p=hi, q=lo, favored_group=0))
        else:
            specs.append(BiasedExpertSpec(p=lo, q=hi, favored_group=1))
    return specs if keep_all else specs[:-1]


def _wrong_labels(rng, labels, num_classes):
    if num_classes == 2:
        return 1 - labels
    shift = rng.integers(1, num_classes, labels.shape[0])
    return (labels + shift) % num_classes


def simulate_expert_predictions(specs, dataset, seed, clusters=None) -> ExpertPredictionMatrix:
    """Fully observed predictions of the given experts on ``dataset``."""
    rng = np.random.default_rng(seed)
    n = len(dataset)
    y = dataset.labels
    c = dataset.num_classes
    out = np.empty((n, len(specs)), dtype=np.int64)
    for j, spec in enumerate(specs):
        if isinstance(spec, ClusterExpertSpec):
            if clusters is None:
                raise ValueError("cluster experts need cluster metadata")
            random_labels = rng.integers(0, c, n)
            out[:, j] = np.where(np.asarray(clusters) == spec.competent_cluster, y, random_labels)
        elif isinstance(spec, BiasedExpertSpec):
            acc = np.where(dataset.groups == 0, spec.p, spec.q)
            correct = rng.random(n) < acc
            out[:, j] = np.where(correct, y, _wrong_labels(rng, y, c))
        else:
            raise TypeError(f"unsupported expert spec {type(spec).__name__}")
    return ExpertPredictionMatrix.full(out, c)


def mask_predictions(matrix, coverage, seed) -> ExpertPredictionMatrix:
    """Keep, per expert, an independent uniform subset of ``round(coverage * N)`` samples."""
    if not 0.0 < coverage <= 1.0:
        raise ValueError("coverage must lie in (0, 1]")
    n, e = matrix.predictions.shape
    if coverage == 1.0:
        return matrix
    rng = np.random.default_rng(seed)
    keep = np.zeros((n, e), dtype=bool)
    n_keep = int(np.floor(coverage * n + 0.5))
    for j in range(e):
        keep[rng.choice(n, n_keep, replace=False), j] = True
    return ExpertPredictionMatrix(matrix.predictions, matrix.mask & keep, matrix.num_classes)


def gen_grouped_feature_dataset(
    n, dim, group_fraction=0.36, class_sep=2.0, seed=0, group_shift=0.0
) -> Dataset:
    """Binary task with a protected attribute drawn independently of the label.

    Class-conditional unit-variance Gaussians whose means differ by
    ``class_sep`` along the first axis.  ``group_shift`` optionally moves the
    protected group along the second axis so that group membership is
    recoverable from the features (the group label itself is never a feature).
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if not 0.0 < group_fraction < 1.0:
        raise ValueError("group_fraction must lie in (0, 1)")
    if group_shift and dim < 2:
        raise ValueError("group_shift needs dim >= 2")
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, n)
    groups = (rng.random(n) < group_fraction).astype(np.int64)
    x = rng.standard_normal((n, dim))
    x[:, 0] += (labels - 0.5) * class_sep
    if group_shift:
        x[:, 1] += groups * group_shift
    return Dataset(x, labels, groups, num_classes=2, num_groups=2)


def save_metadata(meta, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")


def biased_metadata(specs, group_fraction=None):
    meta = {"generator": "biased-experts", "experts": [asdict(s) for s in specs]}
    if group_fraction is not None:
        meta["group_fraction"] = group_fraction
    return meta
