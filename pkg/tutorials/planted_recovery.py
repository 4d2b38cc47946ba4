"""Run the GA selector on data where only the first five columns matter.

    python3 tutorials/planted_recovery.py [seed]

Small population and budget so it finishes in about a minute.
"""

import sys

import numpy as np

from hybridfs import CostConfig, CostFunction, GaConfig, evolve
from hybridfs.synthetic import planted_features

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
data = planted_features(n=600, m=50, n_informative=5, seed=0)
cost = CostFunction(data, CostConfig())


def progress(it, result):
    if it % 5 == 0:
        print(f"iter {it:3d}  best cost {result.best_cost:.4f}  features {result.n_selected:2d}  nfe {result.nfe_used}")


result = evolve(cost, data.m, GaConfig(population_size=30, max_iterations=30, seed=seed), callback=progress)
picked = np.flatnonzero(result.best_mask)
print("selected:", picked.tolist())
print(f"informative recovered: {int(np.sum(picked < 5))}/5")
