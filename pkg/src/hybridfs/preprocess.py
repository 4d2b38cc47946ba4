"""Outlier elimination (Mahalanobis distance vs. a chi-square cutoff) and
density-based synthetic minority over-sampling."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from sklearn.cluster import DBSCAN
from sklearn.neighbors import NearestNeighbors

from .dataset import DataError, Dataset

__all__ = [
    "ScatterMatrix",
    "OutlierReport",
    "SmoteConfig",
    "OversamplingFallbackWarning",
    "scatter_matrix",
    "mahalanobis_distances",
    "chi_square_cdf",
    "chi_square_quantile",
    "remove_outliers",
    "dbsmote_oversample",
]

RIDGE_STEPS = (1e-8, 1e-6, 1e-4, 1e-2)
MAX_CONDITION = 1e12


@dataclass(frozen=True, eq=False)
class ScatterMatrix:
    S: np.ndarray
    mean: np.ndarray
    inverse_ok: bool
    ridge: float = 0.0
    _chol: np.ndarray | None = field(default=None, repr=False)

    def solve_factor(self):
        if not self.inverse_ok:
            raise DataError("scatter matrix is not invertible")
        return self._chol


@dataclass
class OutlierReport:
    distances: np.ndarray
    threshold: float
    flagged: list
    regularization: float = 0.0
    quantile: float = 0.975

    def to_dict(self) -> dict:
        return {
            "quantile": self.quantile,
            "threshold": self.threshold,
            "regularization": self.regularization,
            "flagged": [int(i) for i in self.flagged],
            "distances": [float(d) for d in self.distances],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "OutlierReport":
        return cls(np.asarray(d["distances"], float), float(d["threshold"]), list(d["flagged"]),
                   float(d.get("regularization", 0.0)), float(d.get("quantile", 0.975)))


@dataclass(frozen=True)
class SmoteConfig:
    """Settings for :func:`dbsmote_oversample`.

    ``dbscan_eps="auto"`` uses the median distance from each minority row to
    its ``dbscan_min_pts``-th nearest minority neighbour.
    """

    target_minority_ratio: float = 0.4
    k: int = 5
    dbscan_eps: float | str = "auto"
    dbscan_min_pts: int = 5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.target_minority_ratio <= 1.0:
            raise ValueError("target_minority_ratio must lie in (0, 1]")
        if self.k < 1 or self.dbscan_min_pts < 1:
            raise ValueError("k and dbscan_min_pts must be positive")
        if self.dbscan_eps != "auto" and not float(self.dbscan_eps) > 0:
            raise ValueError("dbscan_eps must be > 0 or 'auto'")


class OversamplingFallbackWarning(UserWarning):
    """Minority rows could not be clustered; plain SMOTE interpolation used."""


# ---------------------------------------------------------------------------
# Mahalanobis / chi-square

def scatter_matrix(dataset: Dataset) -> ScatterMatrix:
    """Sample covariance (n-1 denominator) with ridge escalation when singular."""
    if dataset.n < 2:
        raise DataError("scatter matrix needs at least two observations")
    if dataset.has_missing:
        raise DataError("scatter matrix requires an imputed dataset")
    X = dataset.X
    mean = X.mean(axis=0)
    Xc = X - mean
    S = Xc.T @ Xc / (dataset.n - 1)
    S = (S + S.T) / 2
    m = S.shape[0]

    ev = np.linalg.eigvalsh(S)
    cond = ev[-1] / ev[0] if ev[0] > 0 else math.inf
    ridges = (0.0,) if cond <= MAX_CONDITION else ()
    scale = np.trace(S) / m
    if scale <= 0:
        scale = 1.0
    ridges += tuple(r * scale for r in RIDGE_STEPS)
    for ridge in ridges:
        try:
            L = linalg.cholesky(S + ridge * np.eye(m), lower=True)
        except linalg.LinAlgError:
            continue
        return ScatterMatrix(S, mean, True, ridge, L)
    return ScatterMatrix(S, mean, False, ridges[-1])


def mahalanobis_distances(dataset: Dataset, scatter: ScatterMatrix) -> np.ndarray:
    """Squared Mahalanobis distance of every row from ``scatter.mean``."""
    if dataset.m != scatter.mean.shape[0]:
        raise DataError(f"dimension mismatch: {dataset.m} features vs scatter of {scatter.mean.shape[0]}")
    L = scatter.solve_factor()
    Z = linalg.solve_triangular(L, (dataset.X - scatter.mean).T, lower=True)
    return np.maximum(np.einsum("ij,ij->j", Z, Z), 0.0)


def _lower_gamma_regularized(a: float, x: float) -> float:
    """P(a, x) by power series (x < a + 1) or Lentz continued fraction."""
    if x <= 0:
        return 0.0
    log_pre = a * math.log(x) - x - math.lgamma(a)
    if x < a + 1:
        term = total = 1.0 / a
        ap = a
        for _ in range(10000):
            ap += 1
            term *= x / ap
            total += term
            if abs(term) < abs(total) * 1e-16:
                break
        return min(1.0, total * math.exp(log_pre))
    tiny = 1e-300
    b = x + 1 - a
    c = 1 / tiny
    d = 1 / b
    h = d
    for i in range(1, 10000):
        an = -i * (i - a)
        b += 2
        d = an * d + b
        d = tiny if abs(d) < tiny else d
        c = b + an / c
        c = tiny if abs(c) < tiny else c
        d = 1 / d
        delta = d * c
        h *= delta
        if abs(delta - 1) < 1e-16:
            break
    return max(0.0, 1.0 - math.exp(log_pre) * h)


def chi_square_cdf(x: float, df: float) -> float:
    return _lower_gamma_regularized(df / 2.0, x / 2.0)


def chi_square_quantile(df: float, p: float) -> float:
    """Inverse chi-square CDF by bisection."""
    if df < 1:
        raise ValueError("df must be >= 1")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    lo, hi = 0.0, max(1.0, float(df))
    while chi_square_cdf(hi, df) < p:
        lo, hi = hi, hi * 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if chi_square_cdf(mid, df) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def remove_outliers(dataset: Dataset, alpha_quantile: float = 0.975) -> tuple[Dataset, OutlierReport]:
    """Drop rows whose squared distance strictly exceeds the chi-square(m)
    quantile. Applied once; the covariance is not re-estimated."""
    if not 0.0 < alpha_quantile < 1.0:
        raise ValueError("alpha_quantile must lie in (0, 1)")
    sc = scatter_matrix(dataset)
    d = mahalanobis_distances(dataset, sc)
    threshold = chi_square_quantile(dataset.m, alpha_quantile)
    flagged = np.flatnonzero(d > threshold)
    if flagged.size == dataset.n:
        raise DataError("every row flagged as an outlier; check feature scaling")
    report = OutlierReport(d, threshold, flagged.tolist(), sc.ridge, alpha_quantile)
    if flagged.size == 0:
        return dataset, report
    keep = np.ones(dataset.n, bool)
    keep[flagged] = False
    return dataset.take(keep), report


# ---------------------------------------------------------------------------
# density-based SMOTE

def _n_synthetic(n_min: int, n_maj: int, ratio: float) -> int:
    n = n_min + n_maj
    s = max(0, math.ceil((ratio * n - n_min) / (1.0 - ratio) - 1e-9)) if ratio < 1 else n_maj - n_min
    while s > 0 and (n_min + s - 1) / (n + s - 1) >= ratio:
        s -= 1
    while (n_min + s) / (n + s) < ratio and n_min + s < n_maj:
        s += 1
    return min(s, max(0, n_maj - n_min))


def _auto_eps(P: np.ndarray, k: int) -> float:
    k = min(k, len(P) - 1)
    nn = NearestNeighbors(n_neighbors=k + 1).fit(P)
    dist, _ = nn.kneighbors(P)
    eps = float(np.median(dist[:, k]))
    return eps if eps > 0 else 1e-12


def _interpolate(P, groups, count, k, rng):
    """SMOTE-style interpolation; pairs are drawn inside each index group."""
    members = np.concatenate(groups)
    owner = np.concatenate([np.full(len(g), gi) for gi, g in enumerate(groups)])
    neigh = []
    for g in groups:
        kk = min(k, len(g) - 1)
        if kk < 1:
            neigh.append({int(i): np.array([i]) for i in g})
            continue
        nn = NearestNeighbors(n_neighbors=kk + 1).fit(P[g])
        _, ind = nn.kneighbors(P[g])
        neigh.append({int(g[r]): g[ind[r, 1:]] for r in range(len(g))})
    out = np.empty((count, P.shape[1]))
    for s in range(count):
        pick = int(rng.integers(len(members)))
        a = int(members[pick])
        cand = neigh[owner[pick]][a]
        b = int(cand[rng.integers(len(cand))])
        t = rng.random()
        out[s] = P[a] + t * (P[b] - P[a])
    return out


def dbsmote_oversample(dataset: Dataset, config: SmoteConfig = SmoteConfig()) -> Dataset:
    """Append synthetic minority rows until minority/total reaches the target.

    Minority rows are clustered with DBSCAN; each synthetic row lies on the
    segment between a clustered minority row and one of its nearest
    neighbours *from the same cluster*. Original rows are untouched and
    synthetic rows get ``row_id == -1``.
    """
    if dataset.has_missing:
        raise DataError("oversampling requires an imputed dataset")
    counts = np.bincount(dataset.y, minlength=2)
    minority = int(np.argmin(counts))
    n_min, n_maj = int(counts[minority]), int(counts[1 - minority])
    count = _n_synthetic(n_min, n_maj, config.target_minority_ratio)
    if count == 0:
        return dataset
    if n_min < 2:
        raise DataError("need at least two minority rows to interpolate")

    rng = np.random.default_rng(config.seed)
    min_idx = np.flatnonzero(dataset.y == minority)
    P = dataset.X[min_idx]

    groups = []
    if n_min >= config.dbscan_min_pts:
        eps = _auto_eps(P, config.dbscan_min_pts) if config.dbscan_eps == "auto" else float(config.dbscan_eps)
        labels = DBSCAN(eps=eps, min_samples=config.dbscan_min_pts).fit_predict(P)
        groups = [np.flatnonzero(labels == c) for c in np.unique(labels[labels >= 0])]
    if not groups:
        warnings.warn("minority class too small or too sparse to cluster; "
                      "falling back to nearest-neighbour SMOTE", OversamplingFallbackWarning,
                      stacklevel=2)
        groups = [np.arange(n_min)]

    synth = _interpolate(P, groups, count, config.k, rng)
    X = np.vstack([dataset.X, synth])
    y = np.concatenate([dataset.y, np.full(count, minority)])
    ids = np.concatenate([dataset.row_ids, np.full(count, -1)])
    return Dataset(X, y, dataset.feature_names, None, ids)
