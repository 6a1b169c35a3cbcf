"""Interaction-transformation (IT) expressions.

An IT expression is ``b0 + sum_j b_j * g_j(prod_i x_i ** k_ij)`` with unary
transformations ``g_j`` and integer strength vectors ``k_j``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._accel import USE_NUMBA, njit
from .functions import FUNCTIONS, canonical_name
from .tree import Binary, Constant, Node, Unary, Variable, integer_power


@dataclass(frozen=True)
class ITTerm:
    transform: str
    strengths: tuple[int, ...]
    coef: float = 1.0

    def __post_init__(self):
        name = canonical_name(self.transform)
        if name not in FUNCTIONS or FUNCTIONS[name].arity != 1:
            raise ValueError(f"{self.transform!r} is not a unary transformation")
        object.__setattr__(self, "transform", name)
        object.__setattr__(self, "strengths", tuple(int(k) for k in self.strengths))
        object.__setattr__(self, "coef", float(self.coef))
        if not any(self.strengths):
            raise ValueError("an IT term needs at least one nonzero strength")

    @property
    def key(self) -> tuple[str, tuple[int, ...]]:
        return (self.transform, self.strengths)


@dataclass(frozen=True)
class ITExpression:
    intercept: float
    terms: tuple[ITTerm, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "intercept", float(self.intercept))
        object.__setattr__(self, "terms", tuple(self.terms))
        if self.terms:
            d = len(self.terms[0].strengths)
            if any(len(t.strengths) != d for t in self.terms):
                raise ValueError("all strength vectors must have the same length")
        keys = [t.key for t in self.terms]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (transform, strengths) pair")

    @property
    def dim(self) -> int | None:
        return len(self.terms[0].strengths) if self.terms else None


def monomial_tree(strengths) -> Node:
    num: Node | None = None
    den: Node | None = None
    for i, k in enumerate(strengths):
        if k == 0:
            continue
        factor = integer_power(Variable(i), abs(k))
        if k > 0:
            num = factor if num is None else Binary("mul", num, factor)
        else:
            den = factor if den is None else Binary("mul", den, factor)
    if den is None:
        return num
    return Binary("div", num if num is not None else Constant(1.0), den)


def it_to_tree(it: ITExpression) -> Node:
    """Expression tree of ``it``; negative strengths become divisions."""
    out: Node = Constant(it.intercept)
    for term in it.terms:
        inner = monomial_tree(term.strengths)
        g = inner if term.transform == "id" else Unary(term.transform, inner)
        out = Binary("add", out, Binary("mul", Constant(term.coef), g))
    return out


# -- monomial kernel ---------------------------------------------------------


@njit
def monomials_nb(X, K):
    n, d = X.shape
    t = K.shape[0]
    out = np.empty((n, t))
    for r in range(n):
        for j in range(t):
            num = 1.0
            den = 1.0
            for i in range(d):
                k = K[j, i]
                if k > 0:
                    for _ in range(k):
                        num *= X[r, i]
                elif k < 0:
                    for _ in range(-k):
                        den *= X[r, i]
            out[r, j] = num / den
    return out


def monomials_np(X, K):
    X = np.asarray(X, dtype=np.float64)
    K = np.asarray(K, dtype=np.int64)
    n = X.shape[0]
    out = np.empty((n, K.shape[0]))
    with np.errstate(all="ignore"):
        for j, k in enumerate(K):
            num = np.ones(n)
            den = np.ones(n)
            for i, ki in enumerate(k):
                if ki > 0:
                    for _ in range(ki):
                        num = num * X[:, i]
                elif ki < 0:
                    for _ in range(-ki):
                        den = den * X[:, i]
            out[:, j] = num / den
    return out


def monomials(X, K, backend: str | None = None) -> np.ndarray:
    """``out[r, j] = prod_i X[r, i] ** K[j, i]`` with repeated multiplication."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    K = np.ascontiguousarray(np.atleast_2d(K), dtype=np.int64)
    use_nb = USE_NUMBA if backend is None else backend == "numba"
    if use_nb:
        return monomials_nb(X, K)
    return monomials_np(X, K)


def transform_columns(Z: np.ndarray, transforms) -> np.ndarray:
    out = np.empty_like(Z)
    with np.errstate(all="ignore"):
        for j, g in enumerate(transforms):
            out[:, j] = FUNCTIONS[g].numpy_fn(Z[:, j])
    return out
