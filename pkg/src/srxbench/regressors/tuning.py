"""Hyper-parameter grids and 3-fold cross-validated grid search."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class HyperGrid:
    """Named value lists; iteration yields every combination in declaration order."""

    values: Mapping[str, Sequence] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "values", {k: list(v) for k, v in self.values.items()})
        for k, v in self.values.items():
            if not v:
                raise ValueError(f"hyper-parameter {k!r} has no values")

    def __iter__(self) -> Iterator[dict]:
        names = list(self.values)
        for combo in itertools.product(*(self.values[n] for n in names)):
            yield dict(zip(names, combo))

    def __len__(self) -> int:
        n = 1
        for v in self.values.values():
            n *= len(v)
        return n

    def reduced(self, **overrides) -> "HyperGrid":
        vals = dict(self.values)
        for k, v in overrides.items():
            if k not in vals:
                raise KeyError(k)
            vals[k] = list(v) if isinstance(v, (list, tuple)) else [v]
        return HyperGrid(vals)


DEFAULT_GRIDS: dict[str, HyperGrid] = {
    "linear": HyperGrid({}),
    "lasso": HyperGrid({"alpha": [0.001, 0.01, 0.1, 1, 10]}),
    "knn": HyperGrid({"k": [3, 5, 7, 9, 11, 17, 19, 23, 29, 31]}),
    "tree": HyperGrid({"max_depth": [5, 10, 15], "max_leaf_nodes": [5, 10, 15]}),
    "forest": HyperGrid({"n_estimators": [100, 200, 300], "min_samples_split": [0.01, 0.05, 0.1]}),
    "itea": HyperGrid({"popsize": [100, 250, 500], "gens": [100, 250, 500]}),
    "gpnls": HyperGrid({"population_size": [100, 250, 500], "generations": [100, 250, 500]}),
}


def r2_score(y, yhat) -> float:
    y = np.asarray(y, dtype=float)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - yhat) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else 0.0
    return 1.0 - ss_res / ss_tot


def kfold_indices(n: int, k: int, seed) -> list[np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


@dataclass
class GridSearchResult:
    best: dict
    best_index: int
    table: list[dict]  # one row per configuration: params, fold scores, mean

    def to_frame(self):
        import pandas as pd

        rows = [{**r["params"], "mean_r2": r["mean_r2"],
                 **{f"fold{i}": s for i, s in enumerate(r["fold_r2"])}} for r in self.table]
        return pd.DataFrame(rows)


def grid_search(trainer: Callable, grid: HyperGrid, train, seed, folds: int = 3,
                fit_seed=None) -> GridSearchResult:
    """Pick the configuration with the highest mean validation R^2.

    Folds come from one seeded shuffle and are shared by every configuration;
    ties keep the configuration listed first. ``trainer(data, seed=..., **params)``
    is called with ``fit_seed`` (defaults to ``seed``).
    """
    if train.n < folds:
        raise ValueError(f"need at least {folds} rows for {folds}-fold CV")
    fold_idx = kfold_indices(train.n, folds, seed)
    fit_seed = seed if fit_seed is None else fit_seed
    table = []
    for params in grid:
        scores = []
        for f, val in enumerate(fold_idx):
            tr = np.concatenate([fold_idx[g] for g in range(folds) if g != f])
            model = trainer(train.subset(tr), seed=fit_seed, **params)
            scores.append(r2_score(train.y[val], model.predict(train.X[val])))
        table.append({"params": params, "fold_r2": scores, "mean_r2": float(np.mean(scores))})
    means = [r["mean_r2"] if np.isfinite(r["mean_r2"]) else -np.inf for r in table]
    best = int(np.argmax(means))  # first maximum
    return GridSearchResult(best=dict(table[best]["params"]), best_index=best, table=table)
