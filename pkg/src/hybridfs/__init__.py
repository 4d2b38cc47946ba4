"""Wrapper feature selection with a genetic algorithm scored by a small
neural network, plus the baselines and classifiers it is compared with."""

__version__ = "0.1.0"

from .dataset import Dataset, DataError, SplitSpec  # noqa: E402
from .ga import GaConfig, GaResult, evolve, run_ga  # noqa: E402
from .neuro import CostConfig, CostFunction, LmConfig  # noqa: E402

__all__ = [
    "__version__",
    "Dataset",
    "DataError",
    "SplitSpec",
    "GaConfig",
    "GaResult",
    "evolve",
    "run_ga",
    "CostConfig",
    "CostFunction",
    "LmConfig",
]
