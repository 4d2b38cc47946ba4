"""Confusion metrics, ROC/AUC and side-by-side comparison of selectors.

Label 1 (Success) is the positive class throughout.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .baselines import PcaModel, pca_transform
from .classifiers import TrainConfig, predict, train
from .dataset import Dataset, SplitSpec, project, stratified_split

__all__ = [
    "UNDEFINED",
    "ConfusionMatrix",
    "RocCurve",
    "MaskSelection",
    "PcaSelection",
    "MethodSpec",
    "MethodRow",
    "ComparisonReport",
    "confusion",
    "ppv",
    "fdr",
    "accuracy",
    "ppv_failure",
    "fdr_failure",
    "roc_curve",
    "auc",
    "compare_on_split",
    "compare_methods",
]

# sentinel for a metric whose denominator is zero
UNDEFINED = float("nan")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


def _labels(a, name):
    a = np.asarray(a)
    if a.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if a.size and not np.isin(a, (0, 1)).all():
        raise ValueError(f"{name} contains labels outside {{0, 1}}")
    return a.astype(np.int64)


def confusion(true_labels, predicted_labels) -> ConfusionMatrix:
    t = _labels(true_labels, "true_labels")
    p = _labels(predicted_labels, "predicted_labels")
    if t.shape != p.shape:
        raise ValueError("label arrays differ in length")
    return ConfusionMatrix(
        tp=int(np.sum((t == 1) & (p == 1))),
        fp=int(np.sum((t == 0) & (p == 1))),
        tn=int(np.sum((t == 0) & (p == 0))),
        fn=int(np.sum((t == 1) & (p == 0))),
    )


def _pct(num, den):
    return UNDEFINED if den == 0 else 100.0 * num / den


def ppv(cm: ConfusionMatrix) -> float:
    return _pct(cm.tp, cm.tp + cm.fp)


def fdr(cm: ConfusionMatrix) -> float:
    return _pct(cm.fp, cm.tp + cm.fp)


def accuracy(cm: ConfusionMatrix) -> float:
    return _pct(cm.tp + cm.tn, cm.total)


def ppv_failure(cm: ConfusionMatrix) -> float:
    """Share of Failure predictions that are truly Failure."""
    return _pct(cm.tn, cm.tn + cm.fn)


def fdr_failure(cm: ConfusionMatrix) -> float:
    """Share of Failure predictions that are actually Success."""
    return _pct(cm.fn, cm.tn + cm.fn)


# ---------------------------------------------------------------------------
# ROC

@dataclass(frozen=True, eq=False)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    # integer counts behind each point, kept for an exact area
    fp_counts: np.ndarray = field(repr=False, default=None)
    tp_counts: np.ndarray = field(repr=False, default=None)

    @property
    def points(self) -> list:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["fpr", "tpr", "threshold"])
        for f, t, th in zip(self.fpr, self.tpr, self.thresholds):
            w.writerow([repr(float(f)), repr(float(t)), repr(float(th))])
        return buf.getvalue()


def roc_curve(scores, true_labels) -> RocCurve:
    """One point per distinct score, thresholds descending; ties move
    diagonally in a single step. The first point is ``(0, 0)`` at ``+inf``."""
    s = np.asarray(scores, dtype=float)
    y = _labels(true_labels, "true_labels")
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if not np.isfinite(s).all():
        raise ValueError("scores must be finite")
    P = int(y.sum())
    N = int(y.size - P)
    if P == 0 or N == 0:
        raise ValueError("ROC needs both classes")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    tp = np.r_[0, tp]
    fp = np.r_[0, fp]
    return RocCurve(fp / N, tp / P, np.r_[np.inf, s[last]], fp, tp)


def auc(curve: RocCurve) -> float:
    """Trapezoidal area, summed in integers before the final division."""
    if curve.fp_counts is not None:
        fp, tp = curve.fp_counts.astype(np.int64), curve.tp_counts.astype(np.int64)
        twice = int(np.sum((fp[1:] - fp[:-1]) * (tp[1:] + tp[:-1])))
        return twice / (2 * int(fp[-1]) * int(tp[-1]))
    x, yv = curve.fpr, curve.tpr
    return float(np.sum((x[1:] - x[:-1]) * (yv[1:] + yv[:-1])) / 2)


# ---------------------------------------------------------------------------
# comparisons

@dataclass(frozen=True, eq=False)
class MaskSelection:
    mask: np.ndarray

    @property
    def n_selected(self) -> int:
        return int(np.asarray(self.mask).sum())

    def apply(self, dataset: Dataset) -> Dataset:
        return project(dataset, self.mask)


@dataclass(frozen=True, eq=False)
class PcaSelection:
    model: PcaModel

    @property
    def n_selected(self) -> int:
        return self.model.k

    def apply(self, dataset: Dataset) -> Dataset:
        return pca_transform(self.model, dataset)


@dataclass
class MethodSpec:
    """``selector(train) -> MaskSelection | PcaSelection | bool mask``."""

    name: str
    selector: Callable
    classifier: str = "gaussian_svm"
    train_config: TrainConfig = field(default_factory=TrainConfig)


@dataclass
class MethodRow:
    method: str
    n_selected: int | None = None
    train_accuracy: float | None = None
    test_accuracy: float | None = None
    ppv: float | None = None
    fdr: float | None = None
    ppv_failure: float | None = None
    fdr_failure: float | None = None
    auc: float | None = None
    confusion: dict | None = None
    roc: RocCurve | None = field(default=None, repr=False)
    error: str | None = None

    def to_dict(self) -> dict:
        def clean(v):
            return None if isinstance(v, float) and math.isnan(v) else v
        return {
            "method": self.method,
            "n_selected": self.n_selected,
            "train_accuracy": clean(self.train_accuracy),
            "test_accuracy": clean(self.test_accuracy),
            "ppv": clean(self.ppv),
            "fdr": clean(self.fdr),
            "ppv_failure": clean(self.ppv_failure),
            "fdr_failure": clean(self.fdr_failure),
            "auc": clean(self.auc),
            "confusion": self.confusion,
            "error": self.error,
        }


@dataclass
class ComparisonReport:
    rows: list

    def row(self, method: str) -> MethodRow:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)

    def to_dict(self) -> dict:
        return {"rows": [r.to_dict() for r in self.rows]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _as_selection(sel):
    if isinstance(sel, (MaskSelection, PcaSelection)):
        return sel
    if isinstance(sel, PcaModel):
        return PcaSelection(sel)
    return MaskSelection(np.asarray(sel).astype(bool))


def evaluate_selection(name, selection, train_set, test_set, classifier="gaussian_svm",
                       train_config: TrainConfig = TrainConfig()) -> MethodRow:
    if selection.n_selected == 0:
        # nothing selected: fall back to the training prior for every row
        prior = float(train_set.y.mean())
        tr_y, te_y = train_set.y, test_set.y
        tr_labels = np.full(len(tr_y), int(prior >= 0.5))
        te_scores = np.full(len(te_y), prior)
        te_labels = np.full(len(te_y), int(prior >= 0.5))
    else:
        tr = selection.apply(train_set)
        te = selection.apply(test_set)
        tr_y, te_y = tr.y, te.y
        model = train(classifier, tr, train_config)
        tr_labels, _ = predict(model, tr)
        te_labels, te_scores = predict(model, te)
    cm = confusion(te_y, te_labels)
    curve = roc_curve(te_scores, te_y) if 0 < te_y.sum() < len(te_y) else None
    return MethodRow(
        method=name,
        n_selected=selection.n_selected,
        train_accuracy=accuracy(confusion(tr_y, tr_labels)),
        test_accuracy=accuracy(cm),
        ppv=ppv(cm),
        fdr=fdr(cm),
        ppv_failure=ppv_failure(cm),
        fdr_failure=fdr_failure(cm),
        auc=auc(curve) if curve is not None else UNDEFINED,
        confusion=cm.to_dict(),
        roc=curve,
    )


def _run_spec(spec, train_set, test_set):
    try:
        selection = _as_selection(spec.selector(train_set))
        return evaluate_selection(spec.name, selection, train_set, test_set,
                                  spec.classifier, spec.train_config)
    except Exception as exc:  # one failing method must not sink the report
        return MethodRow(method=spec.name, error=f"{type(exc).__name__}: {exc}")


def compare_on_split(train_set: Dataset, test_set: Dataset, method_specs, workers: int = 1) -> ComparisonReport:
    """Selectors only ever see ``train_set``; rows keep the order of ``method_specs``."""
    specs = list(method_specs)
    if not specs:
        raise ValueError("need at least one method")
    if workers > 1 and len(specs) > 1:
        from joblib import Parallel, delayed
        rows = Parallel(n_jobs=workers)(delayed(_run_spec)(s, train_set, test_set) for s in specs)
    else:
        rows = [_run_spec(s, train_set, test_set) for s in specs]
    return ComparisonReport(list(rows))


def compare_methods(dataset: Dataset, method_specs, split_spec: SplitSpec = SplitSpec(),
                    prepare_train: Callable | None = None, workers: int = 1) -> ComparisonReport:
    """Split, optionally transform the training part (e.g. oversample), compare.

    The test partition is never transformed.
    """
    train_set, test_set = stratified_split(dataset, split_spec)
    if prepare_train is not None:
        train_set = prepare_train(train_set)
    return compare_on_split(train_set, test_set, method_specs, workers)
