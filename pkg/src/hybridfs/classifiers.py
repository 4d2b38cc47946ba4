"""Binary classifiers used to evaluate selected feature sets.

Every model returns a score in [0, 1] and the hard label ``score >= 0.5``.
Models are plain data (kind + parameter dict) so they serialize to JSON.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import linalg
from scipy.special import expit

from .dataset import DataError, Dataset

__all__ = [
    "KINDS",
    "PRESETS",
    "TrainConfig",
    "TrainedClassifier",
    "train",
    "predict",
    "resolve_kind",
    "median_heuristic_gamma",
    "smo_solve",
]

KINDS = ("lda", "logistic", "knn", "svm_rbf", "random_forest")

# named rows of the classifier comparison; both SVM rows share one kernel
PRESETS = {
    "linear_discriminant": ("lda", {}),
    "random_forest": ("random_forest", {}),
    "logistic_regression": ("logistic", {}),
    "gaussian_svm": ("svm_rbf", {"svm_gamma": "median"}),
    "adaptive_knn": ("knn", {"knn_weighted": True}),
    "svm_rbf": ("svm_rbf", {"svm_gamma": "inverse_dim"}),
}


@dataclass(frozen=True)
class TrainConfig:
    knn_k: int = 5
    knn_weighted: bool = True
    svm_c: float = 1.0
    svm_gamma: float | str = "median"
    svm_tol: float = 1e-3
    svm_max_iter: int = 100000
    logistic_l2: float = 1e-4
    forest_trees: int = 100
    forest_max_depth: int | None = None
    forest_bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.knn_k < 1 or self.knn_k % 2 == 0:
            raise ValueError("knn_k must be a positive odd integer")
        if self.svm_c <= 0:
            raise ValueError("svm_c must be > 0")
        if isinstance(self.svm_gamma, str):
            if self.svm_gamma not in ("median", "inverse_dim"):
                raise ValueError("svm_gamma must be > 0, 'median' or 'inverse_dim'")
        elif self.svm_gamma <= 0:
            raise ValueError("svm_gamma must be > 0")
        if self.logistic_l2 < 0:
            raise ValueError("logistic_l2 must be >= 0")
        if self.forest_trees < 1:
            raise ValueError("forest_trees must be >= 1")
        if self.forest_max_depth is not None and self.forest_max_depth < 1:
            raise ValueError("forest_max_depth must be >= 1")


def resolve_kind(name: str, config: TrainConfig = TrainConfig()) -> tuple[str, TrainConfig]:
    """Map a kind or preset name to ``(kind, config)``."""
    if name in PRESETS:
        kind, overrides = PRESETS[name]
        return kind, replace(config, **overrides)
    if name in KINDS:
        return name, config
    raise ValueError(f"unknown classifier {name!r}")


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, list):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    return v


@dataclass
class TrainedClassifier:
    kind: str
    dim: int
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dim": self.dim, "params": _jsonable(self.params)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedClassifier":
        params = dict(d["params"])
        if d["kind"] == "random_forest":
            params["trees"] = [{k: np.asarray(v) for k, v in t.items()} for t in params["trees"]]
        else:
            params = {k: np.asarray(v) if isinstance(v, list) else v for k, v in params.items()}
        return cls(d["kind"], int(d["dim"]), params)


# ---------------------------------------------------------------------------
# LDA / logistic

def _fit_lda(X, y, cfg):
    m = X.shape[1]
    mu0, mu1 = X[y == 0].mean(axis=0), X[y == 1].mean(axis=0)
    R = np.vstack([X[y == 0] - mu0, X[y == 1] - mu1])
    dof = max(len(X) - 2, 1)
    S = R.T @ R / dof
    ridge = 0.0
    ev = np.linalg.eigvalsh(S)
    if ev[0] <= 0 or ev[-1] / ev[0] > 1e12:
        ridge = 1e-6 * max(np.trace(S) / m, 1e-12)
    w = linalg.solve(S + ridge * np.eye(m), mu1 - mu0, assume_a="pos")
    pi1 = np.mean(y == 1)
    b = -0.5 * (mu0 + mu1) @ w + math.log(pi1 / (1 - pi1))
    return {"means": np.vstack([mu0, mu1]), "w": w, "b": float(b), "priors": [1 - pi1, pi1], "ridge": ridge}


def _fit_logistic(X, y, cfg):
    n, m = X.shape
    A = np.hstack([X, np.ones((n, 1))])
    theta = np.zeros(m + 1)
    reg = np.full(m + 1, cfg.logistic_l2)
    reg[-1] = 0.0

    def objective(t):
        z = A @ t
        return float(np.mean(np.logaddexp(0, z) - y * z) + 0.5 * np.sum(reg * t * t))

    f = objective(theta)
    for _ in range(200):
        p = expit(A @ theta)
        g = A.T @ (p - y) / n + reg * theta
        if np.linalg.norm(g) < 1e-8:
            break
        H = (A * (p * (1 - p))[:, None]).T @ A / n + np.diag(reg)
        H[np.diag_indices_from(H)] += 1e-12
        step = linalg.solve(H, g, assume_a="sym")
        t = 1.0
        while t > 1e-10:
            cand = theta - t * step
            fc = objective(cand)
            if fc <= f - 1e-4 * t * (g @ step):
                break
            t *= 0.5
        theta, f = cand, fc
    return {"w": theta[:-1], "b": float(theta[-1])}


# ---------------------------------------------------------------------------
# kNN

def _knn_scores(params, Q):
    X, y, k, weighted = params["X"], params["y"], int(params["k"]), bool(params["weighted"])
    k = min(k, len(X))
    d2 = (Q * Q).sum(1)[:, None] + (X * X).sum(1)[None, :] - 2 * Q @ X.T
    d = np.sqrt(np.maximum(d2, 0.0))
    scores = np.empty(len(Q))
    for i, row in enumerate(d):
        kth = np.partition(row, k - 1)[k - 1]
        # every point tied with the k-th distance votes: order independent
        nb = row <= kth + 1e-12 * max(1.0, kth)
        if weighted:
            exact = nb & (row <= 1e-12)
            if exact.any():
                w = exact.astype(float)
            else:
                w = np.where(nb, 1.0 / np.where(nb, row, 1.0), 0.0)
        else:
            w = nb.astype(float)
        # sum in sorted order so the result does not depend on row order
        pos = np.sort(w[y == 1]).sum()
        scores[i] = pos / (pos + np.sort(w[y != 1]).sum())
    return scores


# ---------------------------------------------------------------------------
# SVM (SMO with second-order working-set selection)

def _rbf(A, B, gamma):
    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2 * A @ B.T
    return np.exp(-gamma * np.maximum(d2, 0.0))


def median_heuristic_gamma(X, seed: int = 0, max_rows: int = 500) -> float:
    """``1 / (2 median^2)`` of pairwise distances on a row subsample."""
    rng = np.random.default_rng(seed)
    if len(X) > max_rows:
        X = X[np.sort(rng.choice(len(X), max_rows, replace=False))]
    d2 = (X * X).sum(1)[:, None] + (X * X).sum(1)[None, :] - 2 * X @ X.T
    iu = np.triu_indices(len(X), 1)
    d = np.sqrt(np.maximum(d2[iu], 0.0))
    d = d[d > 0]
    if d.size == 0:
        return 1.0
    return float(1.0 / (2.0 * np.median(d) ** 2))


def smo_solve(K, ys, C, tol=1e-3, max_iter=100000):
    """Dual soft-margin SVM: returns ``(alpha, rho, iterations)``.

    Working pairs follow the maximal-violation / second-order rule; the
    loop ends when the KKT gap ``m(alpha) - M(alpha)`` drops below ``tol``.
    """
    n = len(ys)
    Q = K * np.outer(ys, ys)
    alpha = np.zeros(n)
    G = -np.ones(n)
    diagQ = np.diag(Q).copy()
    it = 0
    for it in range(1, max_iter + 1):
        yG = -ys * G
        up = ((ys > 0) & (alpha < C)) | ((ys < 0) & (alpha > 0))
        low = ((ys > 0) & (alpha > 0)) | ((ys < 0) & (alpha < C))
        if not up.any() or not low.any():
            break
        i = int(np.flatnonzero(up)[np.argmax(yG[up])])
        m_val = yG[i]
        M_val = yG[low].min()
        if m_val - M_val < tol:
            break
        cand = low & (yG < m_val)
        b = m_val - yG[cand]
        a = diagQ[i] + diagQ[cand] - 2 * ys[i] * ys[cand] * Q[i, cand]
        a = np.where(a > 0, a, 1e-12)
        j = int(np.flatnonzero(cand)[np.argmin(-(b * b) / a)])

        yi, yj = ys[i], ys[j]
        Kii, Kjj, Kij = K[i, i], K[j, j], K[i, j]
        quad = max(Kii + Kjj - 2 * Kij, 1e-12)
        ai_old, aj_old = alpha[i], alpha[j]
        if yi != yj:
            delta = (-G[i] - G[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0 and aj < 0:
                aj, ai = 0.0, diff
            elif diff <= 0 and ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0 and ai > C:
                ai, aj = C, C - diff
            elif diff <= 0 and aj > C:
                aj, ai = C, C + diff
        else:
            delta = (G[i] - G[j]) / quad
            s = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if s > C and ai > C:
                ai, aj = C, s - C
            elif s <= C and aj < 0:
                aj, ai = 0.0, s
            if s > C and aj > C:
                aj, ai = C, s - C
            elif s <= C and ai < 0:
                ai, aj = 0.0, s
        alpha[i], alpha[j] = ai, aj
        G += Q[:, i] * (ai - ai_old) + Q[:, j] * (aj - aj_old)

    yG = -ys * G
    free = (alpha > 1e-12) & (alpha < C - 1e-12)
    if free.any():
        rho = -float(np.mean(yG[free]))
    else:
        up = ((ys > 0) & (alpha < C)) | ((ys < 0) & (alpha > 0))
        low = ((ys > 0) & (alpha > 0)) | ((ys < 0) & (alpha < C))
        hi = yG[up].max() if up.any() else 0.0
        lo = yG[low].min() if low.any() else 0.0
        rho = -float(hi + lo) / 2
    return alpha, rho, it


def _fit_svm(X, y, cfg):
    if cfg.svm_gamma == "median":
        gamma = median_heuristic_gamma(X, cfg.seed)
    elif cfg.svm_gamma == "inverse_dim":
        gamma = 1.0 / X.shape[1]
    else:
        gamma = float(cfg.svm_gamma)
    ys = np.where(y == 1, 1.0, -1.0)
    K = _rbf(X, X, gamma)
    alpha, rho, it = smo_solve(K, ys, cfg.svm_c, cfg.svm_tol, cfg.svm_max_iter)
    sv = alpha > 1e-12
    return {"support_vectors": X[sv], "dual_coef": (alpha * ys)[sv], "alpha": alpha,
            "rho": rho, "gamma": gamma, "C": cfg.svm_c, "iterations": it}


# ---------------------------------------------------------------------------
# random forest (CART, Gini)

def _best_split(X, y, feats):
    n = len(y)
    best = (0.0, -1, 0.0)
    total1 = y.sum()
    parent = 1.0 - (total1 / n) ** 2 - (1 - total1 / n) ** 2
    for f in feats:
        order = np.argsort(X[:, f], kind="stable")
        xs, ys_ = X[order, f], y[order]
        left_n = np.arange(1, n)
        left1 = np.cumsum(ys_)[:-1]
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            continue
        right_n = n - left_n
        right1 = total1 - left1
        pl, pr = left1 / left_n, right1 / right_n
        gini = (left_n * (2 * pl * (1 - pl)) + right_n * (2 * pr * (1 - pr))) / n
        gini = np.where(valid, gini, np.inf)
        k = int(np.argmin(gini))
        gain = parent - gini[k]
        if gain > best[0] + 1e-15:
            best = (gain, int(f), 0.5 * (xs[k] + xs[k + 1]))
    return best


def _grow_tree(X, y, max_depth, n_try, rng):
    feature, threshold, left, right, value = [], [], [], [], []

    def node(idx, depth):
        nid = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[idx].mean()))
        ys_ = y[idx]
        if ys_.min() == ys_.max() or (max_depth is not None and depth >= max_depth) or len(idx) < 2:
            return nid
        m = X.shape[1]
        perm = rng.permutation(m)
        gain, f, thr = _best_split(X[idx], ys_, perm[:n_try])
        if f < 0 and n_try < m:
            # no usable split among the sampled features: widen the search
            gain, f, thr = _best_split(X[idx], ys_, perm[n_try:])
        if f < 0:
            return nid
        go_left = X[idx, f] <= thr
        feature[nid], threshold[nid] = f, thr
        left[nid] = node(idx[go_left], depth + 1)
        right[nid] = node(idx[~go_left], depth + 1)
        return nid

    node(np.arange(len(y)), 0)
    return {"feature": np.array(feature), "threshold": np.array(threshold),
            "left": np.array(left), "right": np.array(right), "value": np.array(value)}


def _tree_predict(tree, Q):
    f, t, l, r, v = tree["feature"], tree["threshold"], tree["left"], tree["right"], tree["value"]
    cur = np.zeros(len(Q), dtype=int)
    active = f[cur] >= 0
    while active.any():
        ix = np.flatnonzero(active)
        nodes = cur[ix]
        go_left = Q[ix, f[nodes]] <= t[nodes]
        cur[ix] = np.where(go_left, l[nodes], r[nodes])
        active = f[cur] >= 0
    return v[cur]


def _fit_forest(X, y, cfg):
    rng = np.random.default_rng(cfg.seed)
    n, m = X.shape
    n_try = max(1, int(math.floor(math.sqrt(m))))
    trees = []
    for _ in range(cfg.forest_trees):
        idx = rng.integers(0, n, n) if cfg.forest_bootstrap else np.arange(n)
        trees.append(_grow_tree(X[idx], y[idx], cfg.forest_max_depth, n_try, rng))
    return {"trees": trees, "n_try": n_try}


_FIT = {"lda": _fit_lda, "logistic": _fit_logistic, "svm_rbf": _fit_svm, "random_forest": _fit_forest}


def train(kind: str, dataset: Dataset, config: TrainConfig = TrainConfig()) -> TrainedClassifier:
    """Fit a classifier; ``kind`` may also be a key of :data:`PRESETS`."""
    kind, config = resolve_kind(kind, config)
    if dataset.has_missing:
        raise DataError("classifiers require an imputed dataset")
    counts = np.bincount(dataset.y, minlength=2)
    if counts.min() < 1:
        raise DataError("training set contains a single class")
    X, y = dataset.X, dataset.y.astype(float)
    if kind == "knn":
        params = {"X": X.copy(), "y": y.copy(), "k": config.knn_k, "weighted": config.knn_weighted}
    else:
        params = _FIT[kind](X, y, config)
    return TrainedClassifier(kind, dataset.m, params)


def decision_scores(model: TrainedClassifier, Q: np.ndarray) -> np.ndarray:
    p = model.params
    if model.kind in ("lda", "logistic"):
        return expit(Q @ np.asarray(p["w"]) + p["b"])
    if model.kind == "knn":
        return _knn_scores(p, Q)
    if model.kind == "svm_rbf":
        sv = np.asarray(p["support_vectors"]).reshape(-1, model.dim)
        if sv.shape[0] == 0:
            f = np.full(len(Q), -p["rho"])
        else:
            f = _rbf(Q, sv, p["gamma"]) @ np.asarray(p["dual_coef"]) - p["rho"]
        return expit(f)
    if model.kind == "random_forest":
        votes = np.mean([_tree_predict(t, Q) >= 0.5 for t in p["trees"]], axis=0)
        return votes.astype(float)
    raise ValueError(f"unknown classifier kind {model.kind!r}")


def predict(model: TrainedClassifier, rows) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(labels, scores)`` with ``labels = scores >= 0.5``."""
    Q = np.atleast_2d(np.asarray(rows.X if isinstance(rows, Dataset) else rows, dtype=float))
    if Q.shape[1] != model.dim:
        raise ValueError(f"expected {model.dim} features, got {Q.shape[1]}")
    scores = np.clip(decision_scores(model, Q), 0.0, 1.0)
    return (scores >= 0.5).astype(np.int64), scores


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
