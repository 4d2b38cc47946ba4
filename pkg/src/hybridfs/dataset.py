"""Tabular sensor datasets: loading, imputation, scaling, splitting, projection.

Labels follow the convention used throughout the package: ``0`` is a
*Failure* and ``1`` is a *Success*.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

FAILURE = 0
SUCCESS = 1

__all__ = [
    "FAILURE",
    "SUCCESS",
    "DataError",
    "Dataset",
    "ScalingParams",
    "SplitSpec",
    "load_secom",
    "load_csv",
    "write_secom",
    "write_csv",
    "impute_missing",
    "standardize",
    "stratified_split",
    "project",
]


class DataError(ValueError):
    """Raised for malformed input files or invalid dataset operations."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable observation matrix with binary labels.

    Attributes
    ----------
    X : ndarray, shape (n, m)
        Measurements. Missing cells hold NaN and are flagged in
        ``missing_mask``.
    y : ndarray of int, shape (n,)
        0 = Failure, 1 = Success.
    feature_names : tuple of str, length m
    missing_mask : ndarray of bool, shape (n, m)
    row_ids : ndarray of int, shape (n,)
        Index of each row in the originally loaded file; synthetic rows
        carry ``-1``.
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple = ()
    missing_mask: np.ndarray | None = None
    row_ids: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise DataError(f"X must be 2-D, got shape {X.shape}")
        n, m = X.shape
        y = np.asarray(self.y)
        if y.shape != (n,):
            raise DataError(f"labels length {y.shape[0] if y.ndim else 0} != rows {n}")
        if y.size and not np.isin(y, (0, 1)).all():
            raise DataError("labels must take values in {0, 1}")
        names = tuple(self.feature_names) or tuple(f"f{j}" for j in range(m))
        if len(names) != m:
            raise DataError(f"{len(names)} feature names for {m} columns")
        mask = np.isnan(X) if self.missing_mask is None else np.asarray(self.missing_mask, bool)
        if mask.shape != (n, m):
            raise DataError("missing_mask shape does not match X")
        ids = np.arange(n) if self.row_ids is None else np.asarray(self.row_ids, dtype=np.int64)
        if ids.shape != (n,):
            raise DataError("row_ids length does not match X")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y.astype(np.int64)))
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "missing_mask", _frozen(mask))
        object.__setattr__(self, "row_ids", _frozen(ids))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]

    @property
    def has_missing(self) -> bool:
        return bool(self.missing_mask.any())

    def class_counts(self) -> dict:
        return {c: int(np.sum(self.y == c)) for c in (FAILURE, SUCCESS)}

    def take(self, rows) -> "Dataset":
        """Subset of rows (index array or boolean mask), columns unchanged."""
        rows = np.asarray(rows)
        return Dataset(self.X[rows], self.y[rows], self.feature_names,
                       self.missing_mask[rows], self.row_ids[rows])

    def with_values(self, X, feature_names=None) -> "Dataset":
        names = self.feature_names if feature_names is None else feature_names
        return Dataset(X, self.y, names, None, self.row_ids)

    def __repr__(self):
        c = self.class_counts()
        return (f"Dataset(n={self.n}, m={self.m}, failures={c[FAILURE]}, "
                f"successes={c[SUCCESS]}, missing={int(self.missing_mask.sum())})")


@dataclass(frozen=True, eq=False)
class ScalingParams:
    """Per-feature location/scale learned by :func:`standardize`."""

    mean: np.ndarray
    std: np.ndarray
    zero_variance: np.ndarray = field(default=None)

    def __post_init__(self):
        std = np.asarray(self.std, float)
        if np.any(std < 0):
            raise DataError("standard deviations must be >= 0")
        zv = std == 0 if self.zero_variance is None else np.asarray(self.zero_variance, bool)
        object.__setattr__(self, "mean", _frozen(np.asarray(self.mean, float)))
        object.__setattr__(self, "std", _frozen(std))
        object.__setattr__(self, "zero_variance", _frozen(zv))

    def apply(self, dataset: Dataset) -> Dataset:
        """Scale another dataset (e.g. a test split) with these parameters."""
        if dataset.m != self.mean.shape[0]:
            raise DataError("dimension mismatch between dataset and scaling params")
        safe = np.where(self.zero_variance, 1.0, self.std)
        Z = (dataset.X - self.mean) / safe
        Z[:, self.zero_variance] = 0.0
        return Dataset(Z, dataset.y, dataset.feature_names, dataset.missing_mask, dataset.row_ids)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise DataError("train_fraction must lie in (0, 1)")


# ---------------------------------------------------------------------------
# loaders

def _parse_float(tok: str, where: str) -> float:
    if tok == "NaN":
        return math.nan
    try:
        v = float(tok)
    except ValueError:
        raise DataError(f"non-numeric token {tok!r} at {where}") from None
    if math.isnan(v):
        # only the literal NaN token marks a missing cell
        raise DataError(f"unexpected NaN spelling {tok!r} at {where}")
    return v


def load_secom(features_path, labels_path) -> Dataset:
    """Read the public SECOM files.

    The features file holds whitespace-separated reals with the literal
    ``NaN`` for missing cells. Each line of the labels file is
    ``<-1|1> "<timestamp>"``; -1 (pass) becomes Success and +1 (fail)
    becomes Failure. Timestamps are discarded.
    """
    rows = []
    with open(features_path) as fh:
        for lineno, line in enumerate(fh, 1):
            toks = line.split()
            if not toks:
                continue
            rows.append([_parse_float(t, f"{features_path}:{lineno}") for t in toks])
    if not rows:
        raise DataError(f"empty features file {features_path}")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise DataError(f"ragged row {i + 1} in {features_path}: {len(r)} != {width}")

    labels = []
    with open(labels_path) as fh:
        for lineno, line in enumerate(fh, 1):
            toks = line.split(maxsplit=1)
            if not toks:
                continue
            try:
                v = int(toks[0])
            except ValueError:
                raise DataError(f"bad label {toks[0]!r} at {labels_path}:{lineno}") from None
            if v not in (-1, 1):
                raise DataError(f"label {v} not in {{-1, 1}} at {labels_path}:{lineno}")
            labels.append(SUCCESS if v == -1 else FAILURE)
    if not labels:
        raise DataError(f"empty labels file {labels_path}")
    if len(labels) != len(rows):
        raise DataError(f"row-count mismatch: {len(rows)} feature rows vs {len(labels)} labels")

    X = np.array(rows, dtype=float)
    names = tuple(f"f{j}" for j in range(width))
    return Dataset(X, np.array(labels), names)


def write_secom(dataset: Dataset, features_path, labels_path) -> None:
    """Write ``dataset`` in the SECOM layout read by :func:`load_secom`.

    Timestamps are filled with a fixed placeholder.
    """
    with open(features_path, "w") as fh:
        for row in dataset.X:
            fh.write(" ".join("NaN" if np.isnan(v) else repr(float(v)) for v in row) + "\n")
    with open(labels_path, "w") as fh:
        for label in dataset.y:
            fh.write(f'{-1 if label == SUCCESS else 1} "01/01/2008 00:00:00"\n')


def load_csv(path, label_column: str, label_map: Mapping | None = None) -> Dataset:
    """Read a headed CSV file; every non-label column is a numeric feature.

    Empty cells (and the token ``NaN``) are treated as missing. Without an
    explicit ``label_map`` the lexicographically smaller label string maps
    to 0.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        records = [r for r in csv.reader(fh) if r]
    if not records:
        raise DataError(f"{path}: missing header")
    header = [h.strip() for h in records[0]]
    if all(_looks_numeric(h) for h in header):
        raise DataError(f"{path}: missing header")
    if label_column not in header:
        raise DataError(f"{path}: label column {label_column!r} not in header")
    body = records[1:]
    if not body:
        raise DataError(f"{path}: no data rows")
    li = header.index(label_column)
    feat_cols = [j for j in range(len(header)) if j != li]

    raw_labels, rows = [], []
    for k, rec in enumerate(body, 2):
        if len(rec) != len(header):
            raise DataError(f"{path}:{k}: ragged row ({len(rec)} fields, header has {len(header)})")
        raw_labels.append(rec[li].strip())
        row = []
        for j in feat_cols:
            tok = rec[j].strip()
            row.append(math.nan if tok in ("", "NaN") else _parse_float(tok, f"{path}:{k}"))
        rows.append(row)

    if label_map is None:
        values = sorted(set(raw_labels))
        if len(values) > 2:
            raise DataError(f"{path}: label column has {len(values)} distinct values, expected 2")
        if len(values) < 2:
            raise DataError(f"{path}: label column has a single value")
        label_map = {values[0]: 0, values[1]: 1}
    else:
        label_map = {str(k): int(v) for k, v in label_map.items()}
        unknown = set(raw_labels) - set(label_map)
        if unknown:
            raise DataError(f"{path}: labels {sorted(unknown)} missing from label_map")
    y = np.array([label_map[v] for v in raw_labels])
    X = np.array(rows, dtype=float).reshape(len(rows), len(feat_cols))
    return Dataset(X, y, tuple(header[j] for j in feat_cols))


def _looks_numeric(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def write_csv(dataset: Dataset, path, label_column: str = "label") -> None:
    """Write a dataset in the format read back by :func:`load_csv`.

    Labels are written as the strings ``"0"``/``"1"`` so they round-trip
    under the default lexicographic mapping. Values use ``repr`` so the
    round trip is exact.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(dataset.feature_names) + [label_column])
        for row, lab, miss in zip(dataset.X, dataset.y, dataset.missing_mask):
            cells = ["" if mi else repr(float(v)) for v, mi in zip(row, miss)]
            w.writerow(cells + [str(int(lab))])


# ---------------------------------------------------------------------------
# transforms

def impute_missing(dataset: Dataset, policy: str = "drop", threshold: float = 0.4) -> Dataset:
    """Fill missing cells.

    Parameters
    ----------
    policy : {"mean", "median", "drop"}
        ``"drop"`` first removes every feature whose missing fraction
        exceeds ``threshold`` and then mean-imputes the remaining ones.
    threshold : float
        Only used by ``"drop"``.
    """
    if policy not in ("mean", "median", "drop"):
        raise DataError(f"unknown imputation policy {policy!r}")
    if not dataset.has_missing:
        return dataset

    X = np.array(dataset.X)
    miss = dataset.missing_mask
    names = dataset.feature_names
    if policy == "drop":
        keep = miss.mean(axis=0) <= threshold
        X, miss = X[:, keep], miss[:, keep]
        names = tuple(n for n, k in zip(names, keep) if k)
        if X.shape[1] == 0:
            raise DataError("every feature exceeds the missing-value threshold")
        policy = "mean"

    all_missing = miss.all(axis=0)
    if all_missing.any():
        bad = [names[j] for j in np.flatnonzero(all_missing)]
        raise DataError(f"features entirely missing: {bad[:5]}")

    reducer = np.nanmean if policy == "mean" else np.nanmedian
    fill = reducer(np.where(miss, np.nan, X), axis=0)
    X[miss] = np.broadcast_to(fill, X.shape)[miss]
    return Dataset(X, dataset.y, names, np.zeros_like(miss), dataset.row_ids)


def standardize(dataset: Dataset) -> tuple[Dataset, ScalingParams]:
    """Centre each feature and scale it to unit sample standard deviation.

    Zero-variance features become all-zero columns and are flagged in
    ``ScalingParams.zero_variance``.
    """
    if dataset.has_missing:
        raise DataError("standardize requires an imputed dataset")
    X = dataset.X
    mean = X.mean(axis=0)
    std = X.std(axis=0, ddof=1) if dataset.n > 1 else np.zeros(dataset.m)
    # columns constant up to rounding count as zero-variance
    zv = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    params = ScalingParams(mean, np.where(zv, 0.0, std), zv)
    return params.apply(dataset), params


def stratified_split(dataset: Dataset, spec: SplitSpec = SplitSpec()) -> tuple[Dataset, Dataset]:
    """Disjoint, exhaustive train/test partition.

    Per class, the train share is ``ceil(train_fraction * n_c)``, capped at
    ``n_c - 1`` for classes with two or more members so each such class
    appears on both sides. Row order inside each part follows the input.
    """
    rng = np.random.default_rng(spec.seed)
    n = dataset.n
    if spec.stratified:
        groups = []
        for c in (FAILURE, SUCCESS):
            idx = np.flatnonzero(dataset.y == c)
            if idx.size == 0:
                raise DataError(f"class {c} has no members")
            groups.append(idx)
    else:
        groups = [np.arange(n)]

    train_idx = []
    for idx in groups:
        k = math.ceil(spec.train_fraction * idx.size - 1e-9)
        if idx.size >= 2:
            k = min(max(k, 1), idx.size - 1)
        train_idx.append(rng.permutation(idx)[:k])
    train_idx = np.sort(np.concatenate(train_idx))
    test_mask = np.ones(n, bool)
    test_mask[train_idx] = False
    if train_idx.size == 0 or not test_mask.any():
        raise DataError("split leaves an empty partition")
    return dataset.take(train_idx), dataset.take(np.flatnonzero(test_mask))


def project(dataset: Dataset, mask: Sequence) -> Dataset:
    """Keep the columns where ``mask`` is true, preserving order."""
    mask = np.asarray(mask).astype(bool)
    if mask.shape != (dataset.m,):
        raise DataError(f"mask length {mask.size} != {dataset.m} features")
    if not mask.any():
        raise DataError("empty selection")
    names = tuple(n for n, k in zip(dataset.feature_names, mask) if k)
    return Dataset(dataset.X[:, mask], dataset.y, names, dataset.missing_mask[:, mask], dataset.row_ids)
