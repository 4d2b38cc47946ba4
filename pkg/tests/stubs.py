"""Deterministic, picklable cost functions for GA tests."""

import itertools

import numpy as np


class PairwiseCost:
    """eps(v) = base + g.v + v'Qv, penalised like the real cost.

    Small enough (m = 10) to enumerate every non-empty mask.
    """

    def __init__(self, m=10, seed=1234, omega=0.01):
        rng = np.random.default_rng(seed)
        self.m = m
        self.omega = omega
        self.g = rng.uniform(-0.02, 0.01, m)
        Q = rng.uniform(-0.002, 0.002, (m, m))
        self.Q = np.triu(Q, 1) + np.triu(Q, 1).T
        self.base = 0.3

    def __call__(self, mask):
        v = np.asarray(mask, dtype=float)
        eps = self.base + self.g @ v + v @ self.Q @ v
        return float(eps * (1 + self.omega * v.sum()))

    def brute_force(self):
        best = (np.inf, None)
        for bits in itertools.product((0, 1), repeat=self.m):
            if any(bits):
                c = self(bits)
                if c < best[0]:
                    best = (c, np.array(bits, bool))
        return best


class CountingCost:
    """Number of selected genes outside ``target`` plus missing target genes."""

    def __init__(self, target):
        self.target = np.asarray(target, bool)

    def __call__(self, mask):
        mask = np.asarray(mask, bool)
        return float(np.sum(mask != self.target))


class SeedEcho:
    """Cost that depends on the per-evaluation seed, to check seed plumbing."""

    def __call__(self, mask, seed):
        return float(np.asarray(mask).sum()) + (seed % 1000) / 1e6
