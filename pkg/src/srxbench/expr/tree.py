"""Immutable expression-tree nodes and structural helpers.

A tree is simply its root node. Nodes are frozen dataclasses, so structural
equality and hashing come for free and trees can be shared between threads.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Iterator, Union

import numpy as np

from .functions import FUNCTIONS, canonical_name


@dataclass(frozen=True)
class Constant:
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True)
class Variable:
    index: int

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("variable index must be non-negative")


@dataclass(frozen=True)
class Parameter:
    index: int

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("parameter index must be non-negative")


@dataclass(frozen=True)
class Unary:
    fn: str
    child: "Node"

    def __post_init__(self):
        name = canonical_name(self.fn)
        if name not in FUNCTIONS or FUNCTIONS[name].arity != 1:
            raise ValueError(f"{self.fn!r} is not a unary primitive")
        object.__setattr__(self, "fn", name)


@dataclass(frozen=True)
class Binary:
    fn: str
    left: "Node"
    right: "Node"

    def __post_init__(self):
        name = canonical_name(self.fn)
        if name not in FUNCTIONS or FUNCTIONS[name].arity != 2:
            raise ValueError(f"{self.fn!r} is not a binary primitive")
        object.__setattr__(self, "fn", name)


Node = Union[Constant, Variable, Parameter, Unary, Binary]
ExprTree = Node
LEAVES = (Constant, Variable, Parameter)


def children(node: Node) -> tuple[Node, ...]:
    if isinstance(node, Unary):
        return (node.child,)
    if isinstance(node, Binary):
        return (node.left, node.right)
    return ()


def with_children(node: Node, kids: tuple[Node, ...]) -> Node:
    if isinstance(node, Unary):
        return Unary(node.fn, kids[0])
    if isinstance(node, Binary):
        return Binary(node.fn, kids[0], kids[1])
    return node


def preorder(node: Node) -> Iterator[Node]:
    stack = [node]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(reversed(children(n)))


def size(tree: Node) -> int:
    """Total number of nodes."""
    return sum(1 for _ in preorder(tree))


def depth(tree: Node) -> int:
    """Number of levels; a single leaf has depth 1."""
    kids = children(tree)
    if not kids:
        return 1
    return 1 + max(depth(k) for k in kids)


def variables(tree: Node) -> set[int]:
    return {n.index for n in preorder(tree) if isinstance(n, Variable)}


def parameters(tree: Node) -> set[int]:
    return {n.index for n in preorder(tree) if isinstance(n, Parameter)}


def n_params(tree: Node) -> int:
    ps = parameters(tree)
    return max(ps) + 1 if ps else 0


def subtree_at(tree: Node, pos: int) -> Node:
    """Subtree rooted at preorder position ``pos``."""
    for i, n in enumerate(preorder(tree)):
        if i == pos:
            return n
    raise IndexError(pos)


def replace_at(tree: Node, pos: int, new: Node) -> Node:
    """Copy of ``tree`` with the subtree at preorder position ``pos`` replaced."""
    if pos == 0:
        return new
    offset = 1
    kids = list(children(tree))
    for i, k in enumerate(kids):
        s = size(k)
        if pos < offset + s:
            kids[i] = replace_at(k, pos - offset, new)
            return with_children(tree, tuple(kids))
        offset += s
    raise IndexError(pos)


def depth_at(tree: Node, pos: int) -> int:
    """Depth (root = 1) of the node at preorder position ``pos``."""
    stack = [(tree, 1)]
    i = 0
    while stack:
        n, d = stack.pop()
        if i == pos:
            return d
        i += 1
        stack.extend((k, d + 1) for k in reversed(children(n)))
    raise IndexError(pos)


def substitute_params(tree: Node, params) -> Node:
    """Replace every :class:`Parameter` with a :class:`Constant` of its value."""
    if isinstance(tree, Parameter):
        return Constant(float(params[tree.index]))
    kids = children(tree)
    if not kids:
        return tree
    return with_children(tree, tuple(substitute_params(k, params) for k in kids))


def structural_key(tree: Node) -> str:
    """Process-independent digest used for canonical operand ordering."""
    from .parse import to_prefix

    return hashlib.blake2b(to_prefix(tree).encode(), digest_size=8).hexdigest()


# -- smart constructors ------------------------------------------------------
# They fold the trivial identities so that derivative trees stay small.


def const(v: float) -> Constant:
    return Constant(v)


def _is_const(n: Node, v: float | None = None) -> bool:
    return isinstance(n, Constant) and (v is None or n.value == v)


def _fold(fn: str, *vals: float) -> Constant | None:
    with np.errstate(all="ignore"):
        out = float(FUNCTIONS[fn].numpy_fn(*[np.float64(v) for v in vals]))
    return Constant(out) if math.isfinite(out) else None


def add(a: Node, b: Node) -> Node:
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if _is_const(a) and _is_const(b):
        folded = _fold("add", a.value, b.value)
        if folded is not None:
            return folded
    return Binary("add", a, b)


def sub(a: Node, b: Node) -> Node:
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    if _is_const(a) and _is_const(b):
        folded = _fold("sub", a.value, b.value)
        if folded is not None:
            return folded
    return Binary("sub", a, b)


def mul(a: Node, b: Node) -> Node:
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return Constant(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b):
        folded = _fold("mul", a.value, b.value)
        if folded is not None:
            return folded
    return Binary("mul", a, b)


def div(a: Node, b: Node) -> Node:
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b):
        folded = _fold("div", a.value, b.value)
        if folded is not None:
            return folded
    return Binary("div", a, b)


def neg(a: Node) -> Node:
    if isinstance(a, Constant):
        return Constant(-a.value)
    if isinstance(a, Unary) and a.fn == "neg":
        return a.child
    return Unary("neg", a)


def unary(fn: str, a: Node) -> Node:
    if isinstance(a, Constant):
        folded = _fold(fn, a.value)
        if folded is not None:
            return folded
    return Unary(fn, a)


def integer_power(base: Node, k: int) -> Node:
    """``base**k`` for integer ``k``; |k| <= 12 expands to repeated products."""
    if k == 0:
        return Constant(1.0)
    if abs(k) > 12:
        return Binary("pow", base, Constant(float(k)))
    out = base
    for _ in range(abs(k) - 1):
        out = Binary("mul", out, base)
    if k < 0:
        out = Binary("div", Constant(1.0), out)
    return out
