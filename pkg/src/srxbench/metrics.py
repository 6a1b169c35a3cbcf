"""Accuracy metrics, perturbation neighbourhoods, robustness and quality measures.

Robustness measures take ``explain``, a callable mapping a row matrix to the
matrix of local explanations (one row per input row). The first row passed is
always the evaluation point, so explainers with per-call randomness draw
independent values for the point and for every neighbour.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .explainers import Explanation, ExplainerConfig, explain_global, explain_local
from .regressors.base import SymbolicModel

DEFAULT_LAMBDA = 1e-3
DEFAULT_NEIGHBORS = 30


@dataclass(frozen=True)
class Score:
    """A scalar measure with a flag for degenerate inputs (e.g. zero variance)."""

    measure: str
    value: float
    degenerate: bool = False

    def __float__(self) -> float:
        return float(self.value)

    def to_dict(self) -> dict:
        return {"measure": self.measure, "value": self.value, "degenerate": self.degenerate}


QualityScore = Score


# -- accuracy ----------------------------------------------------------------


def _pair(yhat, y):
    yhat = np.asarray(yhat, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if yhat.shape != y.shape:
        raise ValueError("predictions and targets differ in length")
    return yhat, y


def mae(yhat, y) -> float:
    yhat, y = _pair(yhat, y)
    return float(np.mean(np.abs(yhat - y)))


def r2(yhat, y) -> Score:
    yhat, y = _pair(yhat, y)
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return Score("r2", 1.0 if ss_res == 0.0 else 0.0, True)
    return Score("r2", 1.0 - ss_res / ss_tot)


def nmse_pred(yhat, y) -> Score:
    """``MSE / var(y)``; plain MSE with the degenerate flag when ``var(y) == 0``."""
    yhat, y = _pair(yhat, y)
    mse = float(np.mean((yhat - y) ** 2))
    var = float(np.var(y))
    if var == 0.0:
        return Score("nmse", mse, True)
    return Score("nmse", mse / var)


# -- neighbourhoods ------------------------------------------------------------


@dataclass(frozen=True)
class Neighborhood:
    center: np.ndarray
    points: np.ndarray
    lam: float
    covariance: np.ndarray

    @property
    def m(self) -> int:
        return self.points.shape[0]


def covariance_factor(cov: np.ndarray) -> np.ndarray:
    """``L`` with ``L @ L.T == cov`` after clipping negative eigenvalues at zero."""
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    cov = 0.5 * (cov + cov.T)
    w, V = np.linalg.eigh(cov)
    if w.size and w.min() < -1e-8:
        warnings.warn(f"covariance has eigenvalue {w.min():.3g}; clipped to 0", RuntimeWarning)
    return V * np.sqrt(np.clip(w, 0.0, None))


def neighborhood(x, train_X, lam: float = DEFAULT_LAMBDA, m: int = DEFAULT_NEIGHBORS,
                 seed=0) -> Neighborhood:
    """``m`` draws from ``N(x, lam * cov(train_X))``."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if m < 1:
        raise ValueError("m must be >= 1")
    x = np.asarray(x, dtype=float).reshape(-1)
    train_X = np.asarray(train_X, dtype=float)
    cov = np.atleast_2d(np.cov(train_X, rowvar=False))
    L = covariance_factor(lam * cov)
    Z = np.random.default_rng(seed).standard_normal((m, x.size))
    return Neighborhood(x, x + Z @ L.T, float(lam), cov)


# -- robustness ----------------------------------------------------------------


def _explain_all(explain: Callable, x, nbhd: Neighborhood) -> tuple[np.ndarray, np.ndarray]:
    E = np.asarray(explain(np.vstack([x, nbhd.points])), dtype=float)
    return E[0], E[1:]


def stability(model, explain: Callable, x, nbhd: Neighborhood, explanations=None) -> float:
    """Mean squared Euclidean distance between the explanation at ``x`` and at each neighbour."""
    psi, psi_n = explanations if explanations is not None else _explain_all(explain, x, nbhd)
    with np.errstate(over="ignore"):
        return float(np.mean(np.sum((psi_n - psi) ** 2, axis=1)))


def infidelity(model, explain: Callable, x, nbhd: Neighborhood, explanations=None) -> float:
    """Mean of ``(p . psi(x) - (f(x) - f(x - p)))^2`` with ``p = x - x'``."""
    x = np.asarray(x, dtype=float)
    psi = explanations[0] if explanations is not None else _explain_all(explain, x, nbhd)[0]
    P = x - nbhd.points
    f = model.predict(np.vstack([x, nbhd.points]))
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.mean((P @ psi - (f[0] - f[1:])) ** 2))


def top_k(values, k: int) -> frozenset:
    """Indices of the ``k`` largest magnitudes, lower index first on ties."""
    v = np.abs(np.asarray(values, dtype=float))
    if not 1 <= k <= v.size:
        raise ValueError("k must lie in [1, d]")
    return frozenset(np.argsort(-v, kind="stable")[:k].tolist())


def jaccard(a: frozenset, b: frozenset) -> float:
    union = a | b
    return 1.0 if not union else len(a & b) / len(union)


def jaccard_stability(model, explain: Callable, x, nbhd: Neighborhood, k: int = 1,
                      explanations=None) -> float:
    psi, psi_n = explanations if explanations is not None else _explain_all(explain, x, nbhd)
    ref = top_k(psi, k)
    return float(np.mean([jaccard(ref, top_k(p, k)) for p in psi_n]))


def robustness(model, explain: Callable, x, nbhd: Neighborhood, k: int = 1) -> dict:
    """All three measures from a single batch of explanations."""
    ex = _explain_all(explain, x, nbhd)
    return {"stability": stability(model, explain, x, nbhd, ex),
            "infidelity": infidelity(model, explain, x, nbhd, ex),
            "jaccard": jaccard_stability(model, explain, x, nbhd, k, ex)}


# -- quality against ground-truth explanations ---------------------------------


def cosine_quality(truth, expl) -> Score:
    e = np.asarray(truth, dtype=float).reshape(-1)
    p = np.asarray(expl, dtype=float).reshape(-1)
    if e.shape != p.shape:
        raise ValueError("explanations differ in length")
    ne, npsi = np.linalg.norm(e), np.linalg.norm(p)
    if ne == 0.0 or npsi == 0.0:
        return Score("cosine", 0.0, True)
    return Score("cosine", float(np.clip(e @ p / (ne * npsi), -1.0, 1.0)))


def nmse_quality(truth, expl) -> Score:
    """``sum (e - phi)^2 / sum (e - mean e)^2``; plain MSE, flagged, for constant ``e``."""
    e = np.asarray(truth, dtype=float).reshape(-1)
    p = np.asarray(expl, dtype=float).reshape(-1)
    if e.shape != p.shape or e.size == 0:
        raise ValueError("explanations must be non-empty and equal in length")
    sse = float(np.sum((e - p) ** 2))
    ss = float(np.sum((e - e.mean()) ** 2))
    if ss == 0.0:
        return Score("nmse", sse / e.size, True)
    return Score("nmse", sse / ss)


def truth_model(gt) -> SymbolicModel:
    """The generating expression of ``gt`` wrapped as a fitted model."""
    return SymbolicModel(kind="truth", form=gt.tree, n_features=gt.space.d,
                         meta={"dataset": gt.name})


def truth_explanation(gt, explainer: str, scope: str, data, X=None,
                      config: ExplainerConfig | None = None, seed=0, seeds=None,
                      point_indices=None):
    """Run ``explainer`` on the ground-truth model with the usual config and seeds.

    Returns one :class:`Explanation` for ``scope="global"`` and a list (one per
    row of ``X``) for ``scope="local"``.
    """
    model = truth_model(gt)
    if scope == "global":
        return explain_global(explainer, model, data, config, seed=seed)
    if scope == "local":
        if X is None:
            raise ValueError("local truth explanations need points")
        return explain_local(explainer, model, data, X, config,
                             seeds=seed if seeds is None else seeds,
                             point_indices=point_indices)
    raise ValueError(f"bad scope {scope!r}")


def mean_quality(truths: list[Explanation], expls: list[Explanation]) -> dict:
    """Average cosine and NMSE over matched local explanations."""
    if len(truths) != len(expls) or not truths:
        raise ValueError("need matched, non-empty explanation lists")
    cos = [cosine_quality(t.values, e.values) for t, e in zip(truths, expls)]
    nm = [nmse_quality(t.values, e.values) for t, e in zip(truths, expls)]
    return {"cosine": float(np.mean([c.value for c in cos])),
            "cosine_degenerate": int(sum(c.degenerate for c in cos)),
            "nmse": float(np.mean([q.value for q in nm])),
            "nmse_degenerate": int(sum(q.degenerate for q in nm))}
