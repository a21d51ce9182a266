"""Datasets, expert prediction tables, CSV I/O and seeded splitting."""

from __future__ import annotations

import csv
import io
import logging
import os
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


class ParseError(ValueError):
    """A CSV row could not be parsed."""


class ValidationError(ValueError):
    """Parsed values violate a domain invariant."""


def _frozen(arr, dtype):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Dataset:
    """Features, labels and protected-group ids for ``n`` samples.

    Expert-private information never lives here; synthetic generators keep it
    as separate metadata.
    """

    features: np.ndarray
    labels: np.ndarray
    groups: np.ndarray
    num_classes: int
    num_groups: int = 1

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats[:, None]
        if feats.ndim != 2:
            raise ValidationError("features must be a 2-d array")
        object.__setattr__(self, "features", _frozen(feats, np.float64))
        object.__setattr__(self, "labels", _frozen(self.labels, np.int64))
        object.__setattr__(self, "groups", _frozen(self.groups, np.int64))
        n = feats.shape[0]
        if self.labels.shape != (n,) or self.groups.shape != (n,):
            raise ValidationError(
                f"sample count mismatch: features {n}, labels {self.labels.shape}, "
                f"groups {self.groups.shape}"
            )
        if self.num_classes < 2:
            raise ValidationError("num_classes must be >= 2")
        if self.num_groups < 1:
            raise ValidationError("num_groups must be >= 1")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValidationError(f"label outside 0..{self.num_classes - 1}")
        if n and (self.groups.min() < 0 or self.groups.max() >= self.num_groups):
            raise ValidationError(f"group outside 0..{self.num_groups - 1}")

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.features[idx],
            self.labels[idx],
            self.groups[idx],
            self.num_classes,
            self.num_groups,
        )

    def group_counts(self):
        return np.bincount(self.groups, minlength=self.num_groups)


@dataclass(frozen=True, eq=False)
class ExpertPredictionMatrix:
    """Human-expert predictions (samples x experts) with an observation mask.

    The identity expert is not stored; it is the classifier itself.
    ``duplicates`` counts repeated (sample, expert) pairs collapsed on load.
    """

    predictions: np.ndarray
    mask: np.ndarray
    num_classes: int | None = None
    duplicates: int = 0

    def __post_init__(self):
        preds = np.asarray(self.predictions, dtype=np.int64)
        mask = np.asarray(self.mask, dtype=bool)
        if preds.ndim != 2 or preds.shape != mask.shape:
            raise ValidationError(
                f"predictions {preds.shape} and mask {mask.shape} must be equal 2-d shapes"
            )
        # unobserved cells hold 0 so the table is always safe to index with
        preds = np.where(mask, preds, 0)
        if mask.any():
            observed = preds[mask]
            hi = self.num_classes if self.num_classes is not None else None
            if observed.min() < 0 or (hi is not None and observed.max() >= hi):
                raise ValidationError("observed prediction is not a valid class index")
        object.__setattr__(self, "predictions", _frozen(preds, np.int64))
        object.__setattr__(self, "mask", _frozen(mask, bool))

    @property
    def num_samples(self):
        return self.predictions.shape[0]

    @property
    def num_experts(self):
        return self.predictions.shape[1]

    def subset(self, indices) -> "ExpertPredictionMatrix":
        idx = np.asarray(indices, dtype=np.int64)
        return ExpertPredictionMatrix(self.predictions[idx], self.mask[idx], self.num_classes)

    def onehot(self, num_classes=None):
        """(n, experts, C) one-hot view; unobserved cells are all-zero rows."""
        c = num_classes or self.num_classes
        if c is None:
            raise ValueError("num_classes unknown")
        out = np.zeros(self.predictions.shape + (c,))
        r, e = np.nonzero(self.mask)
        out[r, e, self.predictions[r, e]] = 1.0
        return out

    @classmethod
    def full(cls, predictions, num_classes=None):
        predictions = np.asarray(predictions)
        return cls(predictions, np.ones(predictions.shape, dtype=bool), num_classes)


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    test: np.ndarray


@dataclass(frozen=True, eq=False)
class ExpertCostVector:
    """Per-consultation cost of each human expert (shape (m-1,) or (n, m-1))."""

    costs: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        costs = np.asarray(self.costs, dtype=np.float64)
        if np.any(costs < 0) or not np.all(np.isfinite(costs)):
            raise ValidationError("expert costs must be finite and >= 0")
        object.__setattr__(self, "costs", _frozen(costs, np.float64))

    @classmethod
    def uniform(cls, num_experts, cost=1.0):
        return cls(np.full(num_experts, float(cost)))


# ------------------------------------------------------------------ CSV I/O


def _read_lines(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        text = fh.read()
    return io.StringIO(text.replace("\r\n", "\n").replace("\r", "\n"))


def _parse_meta(line):
    meta = {}
    for part in line.lstrip("#").replace(",", " ").split():
        key, _, value = part.partition("=")
        if value:
            meta[key.strip()] = int(value)
    return meta


def load_dataset(path, num_classes=None, num_groups=None) -> Dataset:
    """Read the dataset CSV (``f0,...,f{n-1},label,group``).

    An optional first line ``# num_classes=K,num_groups=G`` declares the
    label and group ranges; otherwise they are inferred from the data.
    """
    stream = _read_lines(path)
    lines = stream.read().split("\n")
    lineno = 0
    meta = {}
    while lineno < len(lines) and lines[lineno].startswith("#"):
        meta.update(_parse_meta(lines[lineno]))
        lineno += 1
    reader = csv.reader(lines[lineno:])
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(f"{path}: missing header") from None
    header = [h.strip() for h in header]
    if len(header) < 3 or header[-2:] != ["label", "group"]:
        raise ParseError(f"{path}: line {lineno + 1}: header must end with label,group")
    dim = len(header) - 2
    if header[:dim] != [f"f{i}" for i in range(dim)]:
        raise ParseError(f"{path}: line {lineno + 1}: feature columns must be f0..f{dim - 1}")
    feats, labels, groups = [], [], []
    for offset, row in enumerate(reader, start=lineno + 2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != dim + 2:
            raise ParseError(f"{path}: line {offset}: expected {dim + 2} fields, got {len(row)}")
        try:
            feats.append([float(v) for v in row[:dim]])
            labels.append(int(row[dim]))
            groups.append(int(row[dim + 1]))
        except ValueError as exc:
            raise ParseError(f"{path}: line {offset}: {exc}") from None
    labels_arr = np.asarray(labels, dtype=np.int64)
    groups_arr = np.asarray(groups, dtype=np.int64)
    if num_classes is None:
        num_classes = meta.get("num_classes")
    if num_groups is None:
        num_groups = meta.get("num_groups")
    if num_classes is None:
        num_classes = max(2, int(labels_arr.max()) + 1 if labels else 2)
    if num_groups is None:
        num_groups = max(1, int(groups_arr.max()) + 1 if groups else 1)
    return Dataset(
        np.asarray(feats, dtype=np.float64).reshape(len(labels), dim),
        labels_arr,
        groups_arr,
        int(num_classes),
        int(num_groups),
    )


def save_dataset(dataset: Dataset, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# num_classes={dataset.num_classes},num_groups={dataset.num_groups}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"f{i}" for i in range(dataset.dim)] + ["label", "group"])
        for x, y, z in zip(dataset.features, dataset.labels, dataset.groups):
            writer.writerow([repr(float(v)) for v in x] + [int(y), int(z)])


def load_expert_predictions(path, num_samples, num_experts, num_classes=None):
    """Read long-format ``sample_id,expert_id,label`` rows into a masked table.

    Repeated pairs keep the last value and are counted in ``duplicates``.
    """
    preds = np.zeros((num_samples, num_experts), dtype=np.int64)
    mask = np.zeros((num_samples, num_experts), dtype=bool)
    duplicates = 0
    reader = csv.reader(_read_lines(path))
    header = next(reader, None)
    if header is None:
        return ExpertPredictionMatrix(preds, mask, num_classes)
    if [h.strip() for h in header] != ["sample_id", "expert_id", "label"]:
        raise ParseError(f"{path}: line 1: header must be sample_id,expert_id,label")
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 3:
            raise ParseError(f"{path}: line {lineno}: expected 3 fields, got {len(row)}")
        try:
            s, e, y = (int(v) for v in row)
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}") from None
        if not 0 <= s < num_samples:
            raise ValidationError(f"{path}: line {lineno}: sample_id {s} out of range")
        if not 0 <= e < num_experts:
            raise ValidationError(f"{path}: line {lineno}: expert_id {e} out of range")
        if y < 0 or (num_classes is not None and y >= num_classes):
            raise ValidationError(f"{path}: line {lineno}: label {y} out of range")
        if mask[s, e]:
            duplicates += 1
        preds[s, e] = y
        mask[s, e] = True
    if duplicates:
        logger.warning("%s: %d duplicate (sample, expert) pairs, kept last", path, duplicates)
    return ExpertPredictionMatrix(preds, mask, num_classes, duplicates)


def save_expert_predictions(matrix: ExpertPredictionMatrix, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_id", "expert_id", "label"])
        for s, e in zip(*np.nonzero(matrix.mask)):
            writer.writerow([int(s), int(e), int(matrix.predictions[s, e])])


def split(dataset, test_fraction, seed) -> SplitIndices:
    """Seeded random train/test partition with ``round(test_fraction * N)`` test rows."""
    n = dataset if isinstance(dataset, (int, np.integer)) else len(dataset)
    if n < 1:
        raise ValueError("cannot split an empty dataset")
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    n_test = int(np.floor(test_fraction * n + 0.5))
    perm = np.random.default_rng(seed).permutation(n)
    return SplitIndices(train=np.sort(perm[n_test:]), test=np.sort(perm[:n_test]))


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


@dataclass(frozen=True, eq=False)
class Standardizer:
    """Per-feature affine scaling fitted on training rows."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, features):
        x = np.asarray(features, dtype=np.float64)
        sd = x.std(axis=0)
        return cls(x.mean(axis=0), np.where(sd > 0, sd, 1.0))

    def transform(self, features):
        return (np.asarray(features, dtype=np.float64) - self.mean) / self.scale

    def apply(self, dataset: Dataset) -> Dataset:
        return Dataset(
            self.transform(dataset.features),
            dataset.labels,
            dataset.groups,
            dataset.num_classes,
            dataset.num_groups,
        )
