"""Conservative algebraic simplification and the symbolic-hit test."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .evaluation import evaluate_batch
from .functions import COMMUTATIVE, FUNCTIONS
from .tree import (Binary, Constant, Node, Unary, children, structural_key,
                   with_children)


def _c(n: Node, v: float | None = None) -> bool:
    return isinstance(n, Constant) and (v is None or n.value == v)


def _fold(node: Node) -> Node | None:
    kids = children(node)
    if not kids or not all(isinstance(k, Constant) for k in kids):
        return None
    with np.errstate(all="ignore"):
        out = float(FUNCTIONS[node.fn].numpy_fn(*[np.float64(k.value) for k in kids]))
    # non-finite results stay symbolic so nothing invalid gets baked in
    return Constant(out) if math.isfinite(out) else None


def _order(node: Binary) -> Binary:
    if node.fn not in COMMUTATIVE:
        return node
    ka = (0 if isinstance(node.left, Constant) else 1, structural_key(node.left))
    kb = (0 if isinstance(node.right, Constant) else 1, structural_key(node.right))
    if kb < ka:
        return Binary(node.fn, node.right, node.left)
    return node


def _rewrite(node: Node) -> Node:
    folded = _fold(node)
    if folded is not None:
        return folded
    if isinstance(node, Unary):
        a = node.child
        if node.fn == "id":
            return a
        if node.fn == "neg" and isinstance(a, Unary) and a.fn == "neg":
            return a.child
        return node
    if not isinstance(node, Binary):
        return node
    node = _order(node)
    fn, a, b = node.fn, node.left, node.right
    if fn == "add":
        if _c(a, 0.0):
            return b
        if _c(b, 0.0):
            return a
        if isinstance(b, Unary) and b.fn == "neg":
            return _rewrite(Binary("sub", a, b.child))
        if a == b:
            return _rewrite(Binary("mul", Constant(2.0), a))
    elif fn == "sub":
        if _c(b, 0.0):
            return a
        if a == b:
            return Constant(0.0)
        if _c(a, 0.0):
            return _rewrite(Unary("neg", b))
        if isinstance(b, Unary) and b.fn == "neg":
            return _rewrite(Binary("add", a, b.child))
    elif fn == "mul":
        if _c(a, 0.0) or _c(b, 0.0):
            return Constant(0.0)
        if _c(a, 1.0):
            return b
        if _c(b, 1.0):
            return a
        # c1 * (c2 * t) -> (c1 c2) * t
        if _c(a) and isinstance(b, Binary) and b.fn == "mul" and _c(b.left):
            return _rewrite(Binary("mul", Constant(a.value * b.left.value), b.right))
    elif fn == "div":
        if _c(b, 1.0):
            return a
        if _c(a, 0.0):
            return Constant(0.0)
        if a == b:
            return Constant(1.0)
    elif fn == "pow":
        if _c(b, 0.0):
            return Constant(1.0)
        if _c(b, 1.0):
            return a
    return node


def simplify(tree: Node, max_passes: int = 16) -> Node:
    """Bottom-up rewriting to a fixed point.

    Applies constant folding, the additive/multiplicative identities,
    ``f - f -> 0`` and ``f / f -> 1`` after ordering commutative operands by a
    structural digest. The result agrees with ``tree`` wherever ``tree`` is
    finite.
    """

    def once(node: Node) -> Node:
        kids = children(node)
        if kids:
            node = with_children(node, tuple(once(k) for k in kids))
        return _rewrite(node)

    for _ in range(max_passes):
        new = once(tree)
        if new == tree:
            break
        tree = new
    return tree


def is_zero(tree: Node) -> bool:
    return isinstance(tree, Constant) and tree.value == 0.0


@dataclass(frozen=True)
class HitVerdict:
    symbolic: bool
    numeric: bool

    @property
    def hit(self) -> bool:
        return self.symbolic or self.numeric

    def __bool__(self) -> bool:
        return self.hit


def is_hit(candidate: Node, truth: Node, space, n_points: int = 10_000,
           atol: float = 1e-10, seed: int = 0) -> HitVerdict:
    """Whether ``candidate`` is the generating expression ``truth``.

    The symbolic verdict is ``simplify(candidate - truth) == 0``; the numeric
    one requires ``|candidate - truth| < atol`` on ``n_points`` scrambled
    Halton points of ``space`` (a :class:`~srxbench.dataset.FeatureSpace`).
    Points where the truth itself is non-finite are ignored.
    """
    symbolic = is_zero(simplify(Binary("sub", candidate, truth)))
    lower = np.asarray(space.lower, dtype=float)
    upper = np.asarray(space.upper, dtype=float)
    sampler = qmc.Halton(d=len(lower), scramble=True, seed=seed)
    X = qmc.scale(sampler.random(n_points), lower, upper)
    yt = evaluate_batch(truth, X)
    yc = evaluate_batch(candidate, X)
    ok = np.isfinite(yt)
    numeric = bool(ok.any()) and bool(np.all(np.abs(yc[ok] - yt[ok]) < atol))
    return HitVerdict(symbolic=symbolic, numeric=numeric)
