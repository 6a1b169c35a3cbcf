"""Regression trainers sharing one fit/predict contract.

Every trainer is called as ``trainer(train, seed=..., **hyper)`` and returns a
:class:`FittedModel`.
"""

from dataclasses import dataclass
from typing import Callable

from .base import SENTINEL, FittedModel, SymbolicModel, clamp, register_model_class
from .cart import ForestModel, TreeModel, fit_forest, fit_tree
from .gpnls import GPConfig, fit_gpnls, ptc2
from .itea import fit_itea
from .knn import KNNModel, fit_knn
from .linear import fit_lasso, fit_linear
from .lm import LMResult, levenberg_marquardt
from .tuning import DEFAULT_GRIDS, GridSearchResult, HyperGrid, grid_search, r2_score


@dataclass(frozen=True)
class RegressorSpec:
    name: str
    trainer: Callable
    symbolic: bool
    stochastic: bool


REGRESSORS: dict[str, RegressorSpec] = {
    s.name: s for s in (
        RegressorSpec("linear", fit_linear, True, False),
        RegressorSpec("lasso", fit_lasso, True, False),
        RegressorSpec("knn", fit_knn, False, False),
        RegressorSpec("tree", fit_tree, False, False),
        RegressorSpec("forest", fit_forest, False, True),
        RegressorSpec("itea", fit_itea, True, True),
        RegressorSpec("gpnls", fit_gpnls, True, True),
    )
}


def get_regressor(name: str) -> RegressorSpec:
    try:
        return REGRESSORS[name]
    except KeyError:
        raise KeyError(f"unknown regressor {name!r}; known: {sorted(REGRESSORS)}") from None


__all__ = [
    "SENTINEL", "FittedModel", "SymbolicModel", "TreeModel", "ForestModel", "KNNModel",
    "clamp", "register_model_class",
    "fit_linear", "fit_lasso", "fit_knn", "fit_tree", "fit_forest", "fit_itea", "fit_gpnls",
    "GPConfig", "ptc2", "LMResult", "levenberg_marquardt",
    "HyperGrid", "DEFAULT_GRIDS", "GridSearchResult", "grid_search", "r2_score",
    "RegressorSpec", "REGRESSORS", "get_regressor",
]
