"""Synthetic datasets with known structure, for tests and tutorials."""

from __future__ import annotations

import numpy as np

from .dataset import FAILURE, SUCCESS, Dataset

__all__ = ["planted_features", "secom_like", "separable_blobs"]


def planted_features(n: int = 600, m: int = 50, n_informative: int = 5, noise: float = 1.0,
                     seed: int = 0) -> Dataset:
    """Standard-normal features; the label thresholds the sum of the first
    ``n_informative`` columns plus Gaussian noise. Remaining columns are
    independent of the label."""
    if not 0 < n_informative <= m:
        raise ValueError("need 0 < n_informative <= m")
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, m))
    signal = X[:, :n_informative].sum(axis=1) + rng.normal(scale=noise, size=n)
    y = (signal > 0).astype(np.int64)
    return Dataset(X, y)


def secom_like(n: int = 1567, m: int = 590, n_failures: int = 104, n_informative: int = 20,
               missing_rate: float = 0.045, seed: int = 0) -> Dataset:
    """Imbalanced, partly missing process data shaped like the SECOM log.

    A handful of columns shift with the failure label; some columns are
    constant and a few are mostly missing, so the whole preprocessing chain
    has something to do.
    """
    rng = np.random.default_rng(seed)
    y = np.full(n, SUCCESS, dtype=np.int64)
    y[rng.choice(n, n_failures, replace=False)] = FAILURE
    scale = rng.lognormal(0.0, 1.0, size=m)
    offset = rng.normal(0.0, 10.0, size=m)
    latent = rng.normal(size=(n, 8))
    mixing = rng.normal(scale=0.5, size=(8, m))
    X = rng.normal(size=(n, m)) + latent @ mixing
    informative = rng.choice(m, n_informative, replace=False)
    X[np.ix_(y == FAILURE, informative)] += rng.choice([-1.0, 1.0], n_informative) * 0.9
    X = X * scale + offset
    X[:, rng.choice(m, 10, replace=False)] = 1.0
    miss = rng.random((n, m)) < missing_rate
    miss[:, rng.choice(m, 20, replace=False)] = rng.random((n, 20)) < 0.7
    X[miss] = np.nan
    return Dataset(X, y)


def separable_blobs(n: int = 200, margin: float = 2.0, seed: int = 0) -> Dataset:
    """Two 2-D classes separated by a gap of width ``margin`` along a random direction."""
    rng = np.random.default_rng(seed)
    angle = rng.uniform(0, 2 * np.pi)
    u = np.array([np.cos(angle), np.sin(angle)])
    v = np.array([-u[1], u[0]])
    y = np.r_[np.zeros(n // 2, dtype=np.int64), np.ones(n - n // 2, dtype=np.int64)]
    along = rng.uniform(0.0, 3.0, size=n) + margin / 2
    side = np.where(y == 1, 1.0, -1.0)
    X = (side * along)[:, None] * u + rng.uniform(-3, 3, size=n)[:, None] * v
    return Dataset(X, y)
