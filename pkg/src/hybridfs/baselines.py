"""Conventional selectors used as comparison points: univariate ANOVA filters
(Bonferroni, Benjamini-Hochberg, percentile), PCA, sequential forward and
backward search, correlation-based selection and the Lasso path."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from .dataset import DataError, Dataset, project

__all__ = [
    "FeatureScores",
    "PcaModel",
    "LassoPath",
    "univariate_scores",
    "select_fwe",
    "select_fdr",
    "select_percentile",
    "pca_fit",
    "pca_transform",
    "pca_inverse_transform",
    "sfs",
    "sbs",
    "cv_accuracy",
    "cfs",
    "cfs_merit",
    "lasso_path",
    "lasso_select",
    "lasso_lambda_max",
    "lasso_cv",
    "soft_threshold",
]


@dataclass(frozen=True, eq=False)
class FeatureScores:
    statistic: np.ndarray
    p_value: np.ndarray


@dataclass(frozen=True, eq=False)
class PcaModel:
    components: np.ndarray  # (k, m), orthonormal rows
    explained_variance: np.ndarray
    mean: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[0]


@dataclass(frozen=True, eq=False)
class LassoPath:
    lambdas: np.ndarray
    coefficients: np.ndarray  # (n_lambdas, m)
    intercepts: np.ndarray
    n_iter: np.ndarray


# ---------------------------------------------------------------------------
# univariate filters

def univariate_scores(dataset: Dataset) -> FeatureScores:
    """One-way ANOVA F statistic per feature between the two classes."""
    y = dataset.y
    groups = [dataset.X[y == c] for c in (0, 1)]
    if min(len(g) for g in groups) < 2:
        raise DataError("each class needs at least two members")
    n = dataset.n
    grand = dataset.X.mean(axis=0)
    ss_between = sum(len(g) * (g.mean(axis=0) - grand) ** 2 for g in groups)
    ss_within = sum(((g - g.mean(axis=0)) ** 2).sum(axis=0) for g in groups)
    df_b, df_w = 1, n - 2
    # guard against rounding noise on constant columns
    scale = np.maximum(np.abs(dataset.X).max(axis=0), 1.0) ** 2 * n * 1e-24
    ss_between = np.where(ss_between <= scale, 0.0, ss_between)
    ss_within = np.where(ss_within <= scale, 0.0, ss_within)
    with np.errstate(divide="ignore", invalid="ignore"):
        F = (ss_between / df_b) / (ss_within / df_w)
    F = np.where(ss_between == 0, 0.0, F)
    F = np.where((ss_within == 0) & (ss_between > 0), np.inf, F)
    p = np.where(np.isinf(F), 0.0, special.fdtrc(df_b, df_w, np.where(np.isinf(F), 0.0, F)))
    return FeatureScores(F, np.clip(p, 0.0, 1.0))


def select_fwe(scores: FeatureScores, alpha: float = 0.05) -> np.ndarray:
    """Bonferroni: keep p <= alpha / m."""
    p = scores.p_value
    return p <= alpha / p.size


def select_fdr(scores: FeatureScores, alpha: float = 0.05) -> np.ndarray:
    """Benjamini-Hochberg step-up procedure."""
    p = scores.p_value
    m = p.size
    ps = np.sort(p)
    ok = np.flatnonzero(ps <= np.arange(1, m + 1) * alpha / m)
    if ok.size == 0:
        return np.zeros(m, bool)
    return p <= ps[ok[-1]]


def select_percentile(scores: FeatureScores, percentile: float = 10.0) -> np.ndarray:
    if not 0 < percentile <= 100:
        raise ValueError("percentile must lie in (0, 100]")
    stat = np.nan_to_num(scores.statistic, nan=-np.inf)
    m = stat.size
    k = min(m, math.ceil(m * percentile / 100 - 1e-9))
    order = np.argsort(-stat, kind="stable")
    mask = np.zeros(m, bool)
    mask[order[:k]] = True
    return mask


# ---------------------------------------------------------------------------
# PCA

def pca_fit(dataset: Dataset, k: int) -> PcaModel:
    n, m = dataset.X.shape
    if not 1 <= k <= min(n - 1, m):
        raise ValueError(f"k={k} outside [1, {min(n - 1, m)}]")
    mean = dataset.X.mean(axis=0)
    Xc = dataset.X - mean
    C = Xc.T @ Xc / (n - 1)
    vals, vecs = np.linalg.eigh((C + C.T) / 2)
    order = np.argsort(vals)[::-1][:k]
    comps = vecs[:, order].T
    # deterministic sign: largest-magnitude loading positive
    flip = np.sign(comps[np.arange(k), np.abs(comps).argmax(axis=1)])
    comps *= flip[:, None]
    return PcaModel(comps, np.maximum(vals[order], 0.0), mean)


def pca_transform(model: PcaModel, dataset: Dataset) -> Dataset:
    Z = (dataset.X - model.mean) @ model.components.T
    names = tuple(f"pc{i + 1}" for i in range(model.k))
    return Dataset(Z, dataset.y, names, None, dataset.row_ids)


def pca_inverse_transform(model: PcaModel, Z) -> np.ndarray:
    return np.asarray(Z) @ model.components + model.mean


# ---------------------------------------------------------------------------
# sequential search

def sfs(dataset: Dataset, evaluator: Callable, max_features: int | None = None) -> np.ndarray:
    """Greedy forward selection; ``evaluator(mask) -> score`` (higher is better).

    Stops when no single addition strictly improves the score or when
    ``max_features`` are selected. Ties go to the lower feature index.
    """
    m = dataset.m
    limit = m if max_features is None else min(max_features, m)
    mask = np.zeros(m, bool)
    current = -math.inf
    while mask.sum() < limit:
        best_j, best_s = -1, -math.inf
        for j in np.flatnonzero(~mask):
            trial = mask.copy()
            trial[j] = True
            s = evaluator(trial)
            if s > best_s:
                best_j, best_s = j, s
        if best_j < 0 or best_s <= current:
            break
        mask[best_j] = True
        current = best_s
    return mask


def sbs(dataset: Dataset, evaluator: Callable, min_features: int = 1) -> np.ndarray:
    """Greedy backward elimination from the full set.

    A removal is taken when it does not lower the score; the search stops
    once every removal degrades it or ``min_features`` remain.
    """
    m = dataset.m
    mask = np.ones(m, bool)
    floor = max(1, min_features)
    if m <= floor:
        return mask
    current = evaluator(mask)
    while mask.sum() > floor:
        best_j, best_s = -1, -math.inf
        for j in np.flatnonzero(mask):
            trial = mask.copy()
            trial[j] = False
            s = evaluator(trial)
            if s > best_s:
                best_j, best_s = j, s
        if best_s < current:
            break
        mask[best_j] = False
        current = best_s
    return mask


def cv_accuracy(dataset: Dataset, classifier: str = "gaussian_svm", train_config=None,
                folds: int = 5, seed: int = 0) -> Callable:
    """Evaluator for sfs/sbs: mean k-fold accuracy of ``classifier`` on the
    masked features. Folds are stratified and fixed for every mask."""
    from .classifiers import TrainConfig, predict, train

    cfg = TrainConfig() if train_config is None else train_config
    fold_of = _stratified_folds(dataset.y, folds, seed)
    parts = [(dataset.take(fold_of != f), dataset.take(fold_of == f)) for f in range(folds)]

    def score(mask) -> float:
        mask = np.asarray(mask, bool)
        if not mask.any():
            return 0.0
        hits = 0
        for tr, va in parts:
            labels, _ = predict(train(classifier, project(tr, mask), cfg), project(va, mask))
            hits += int(np.sum(labels == va.y))
        return hits / dataset.n
    return score


# ---------------------------------------------------------------------------
# correlation-based selection

def _abs_corr(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    A = A - A.mean(axis=0)
    B = B - B.mean(axis=0)
    na = np.sqrt((A * A).sum(axis=0))
    nb = np.sqrt((B * B).sum(axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        r = (A.T @ B) / np.outer(na, nb)
    return np.abs(np.nan_to_num(r, nan=0.0, posinf=0.0, neginf=0.0)).clip(0, 1)


def cfs_merit(k: int, r_cf: float, r_ff: float) -> float:
    """``k * r_cf / sqrt(k + k (k - 1) r_ff)`` with mean absolute correlations."""
    return k * r_cf / math.sqrt(k + k * (k - 1) * r_ff)


def cfs(dataset: Dataset, tol: float = 1e-12) -> np.ndarray:
    """Greedy forward search on the CFS merit; stops once the merit no
    longer improves by more than ``tol``."""
    X = dataset.X
    rcf = _abs_corr(X, dataset.y.astype(float)[:, None])[:, 0]
    rff = _abs_corr(X, X)
    m = dataset.m
    mask = np.zeros(m, bool)
    sel: list[int] = []
    sum_cf, sum_ff = 0.0, 0.0
    merit = 0.0
    while len(sel) < m:
        k = len(sel) + 1
        cand = np.flatnonzero(~mask)
        cross = rff[np.ix_(cand, sel)].sum(axis=1) if sel else np.zeros(cand.size)
        tot_cf = sum_cf + rcf[cand]
        tot_ff = sum_ff + cross
        mean_ff = tot_ff / (k * (k - 1) / 2) if k > 1 else np.zeros(cand.size)
        merits = k * (tot_cf / k) / np.sqrt(k + k * (k - 1) * mean_ff)
        best = int(np.argmax(merits))
        if merits[best] <= merit + tol:
            break
        j = int(cand[best])
        mask[j] = True
        sel.append(j)
        sum_cf, sum_ff, merit = float(tot_cf[best]), float(tot_ff[best]), float(merits[best])
    return mask


# ---------------------------------------------------------------------------
# Lasso

def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _centered(dataset: Dataset):
    X = dataset.X
    y = dataset.y.astype(float)
    xm, ym = X.mean(axis=0), y.mean()
    return X - xm, y - ym, xm, ym


def lasso_lambda_max(dataset: Dataset) -> float:
    Xc, yc, _, _ = _centered(dataset)
    return float(np.max(np.abs(Xc.T @ yc)) / dataset.n)


def lasso_path(dataset: Dataset, lambdas=None, n_lambdas: int = 50, eps: float = 1e-3,
               tol: float = 1e-7, max_iter: int = 10000) -> LassoPath:
    """Cyclic coordinate descent on ``(1/2n)||y - Xb||^2 + lambda ||b||_1``.

    Features and labels are centred internally (the intercept absorbs the
    means). Each lambda is warm-started from the previous solution.
    """
    Xc, yc, xm, ym = _centered(dataset)
    n, m = Xc.shape
    lmax = lasso_lambda_max(dataset)
    if lambdas is None:
        lambdas = lmax * np.geomspace(1.0, eps, n_lambdas) if lmax > 0 else np.zeros(1)
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(np.diff(lambdas) > 0):
        raise ValueError("lambdas must be in descending order")
    if np.any(lambdas < 0):
        raise ValueError("lambdas must be non-negative")

    col_sq = (Xc * Xc).sum(axis=0) / n
    beta = np.zeros(m)
    r = yc.copy()
    coefs, iters = [], []
    for lam in lambdas:
        if lam >= lmax:
            # KKT already holds at zero; skip the sweep so the zeros are exact
            beta[:] = 0.0
            r = yc.copy()
            coefs.append(beta.copy())
            iters.append(0)
            continue
        for it in range(1, max_iter + 1):
            max_change = 0.0
            for j in range(m):
                if col_sq[j] == 0:
                    continue
                old = beta[j]
                rho = Xc[:, j] @ r / n + col_sq[j] * old
                new = soft_threshold(rho, lam) / col_sq[j]
                if new != old:
                    r -= Xc[:, j] * (new - old)
                    beta[j] = new
                    max_change = max(max_change, abs(new - old))
            if max_change < tol:
                break
        coefs.append(beta.copy())
        iters.append(it)
    coefs = np.array(coefs)
    return LassoPath(lambdas, coefs, ym - coefs @ xm, np.array(iters))


def lasso_select(path: LassoPath, lam: float) -> np.ndarray:
    """Non-zero coefficients at the path lambda closest to ``lam``."""
    i = int(np.argmin(np.abs(path.lambdas - lam)))
    return path.coefficients[i] != 0


def lasso_cv(dataset: Dataset, lambdas=None, folds: int = 5, seed: int = 0) -> float:
    """Lambda minimising k-fold validation MSE (folds stratified by label)."""
    if lambdas is None:
        lmax = lasso_lambda_max(dataset)
        lambdas = lmax * np.geomspace(1.0, 1e-3, 30)
    lambdas = np.asarray(lambdas, float)
    fold_of = _stratified_folds(dataset.y, folds, seed)
    err = np.zeros(lambdas.size)
    for f in range(folds):
        tr, va = dataset.take(fold_of != f), dataset.take(fold_of == f)
        path = lasso_path(tr, lambdas)
        pred = va.X @ path.coefficients.T + path.intercepts
        err += ((pred - va.y[:, None]) ** 2).sum(axis=0)
    return float(lambdas[int(np.argmin(err))])


def _stratified_folds(y, folds, seed):
    rng = np.random.default_rng(seed)
    fold_of = np.empty(y.size, dtype=int)
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        fold_of[idx] = np.arange(idx.size) % folds
    return fold_of
