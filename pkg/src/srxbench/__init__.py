"""Benchmarking feature-importance explainers on symbolic and classical regressors.

Ground-truth equations generate noiseless data, regressors are tuned and fitted
on it, and explainers applied to both the fitted models and the generating
expressions are compared for robustness and quality.
"""

__version__ = "0.1.0"

from . import dataset, explainers, expr, metrics, regressors, stats  # noqa: E402
from .dataset import Dataset, GroundTruth, generate  # noqa: E402
from .explainers import ExplainerConfig, Explanation, explain_global, explain_local  # noqa: E402
from .regressors import REGRESSORS, FittedModel, SymbolicModel, get_regressor  # noqa: E402

__all__ = [
    "__version__", "dataset", "explainers", "expr", "metrics", "regressors", "stats",
    "Dataset", "GroundTruth", "generate", "ExplainerConfig", "Explanation",
    "explain_global", "explain_local", "REGRESSORS", "FittedModel", "SymbolicModel",
    "get_regressor",
]
