"""Symbolic differentiation."""

from __future__ import annotations

from .tree import (Binary, Constant, Node, Parameter, Unary, Variable, add,
                   const, div, mul, neg, sub, unary)


class UnknownDerivativeError(KeyError):
    pass


def _d_unary(fn: str, a: Node, da: Node, node: Node) -> Node:
    if fn == "id":
        return da
    if fn == "neg":
        return neg(da)
    if fn == "log":
        return div(da, a)
    if fn == "sqrt":
        return div(da, mul(const(2.0), node))
    if fn == "sin":
        return mul(unary("cos", a), da)
    if fn == "cos":
        return neg(mul(unary("sin", a), da))
    if fn == "tanh":
        return mul(sub(const(1.0), unary("square", node)), da)
    if fn == "exp":
        return mul(node, da)
    if fn == "expn":
        return neg(mul(node, da))
    if fn == "asin":
        return div(da, unary("sqrt", sub(const(1.0), unary("square", a))))
    if fn == "square":
        return mul(mul(const(2.0), a), da)
    raise UnknownDerivativeError(fn)


def _d_binary(fn: str, a: Node, b: Node, da: Node, db: Node, node: Node) -> Node:
    if fn == "add":
        return add(da, db)
    if fn == "sub":
        return sub(da, db)
    if fn == "mul":
        return add(mul(da, b), mul(a, db))
    if fn == "div":
        # (a/b)' = a'/b - a b' / b^2
        return sub(div(da, b), div(mul(a, db), unary("square", b)))
    if fn == "pow":
        # d(a^b) = b a^(b-1) a' + a^b log(a) b'
        left = mul(mul(b, Binary("pow", a, sub(b, const(1.0)))), da)
        if isinstance(db, Constant) and db.value == 0.0:
            return left
        return add(left, mul(mul(node, unary("log", a)), db))
    raise UnknownDerivativeError(fn)


def differentiate(tree: Node, wrt) -> Node:
    """Tree for d tree / d ``wrt``.

    ``wrt`` is a :class:`Variable`, a :class:`Parameter` or a plain ``int``
    (taken as a variable index). The result is passed through
    :func:`~srxbench.expr.simplify.simplify`, so ``d/dx x**2`` comes back as
    ``2*x``.
    """
    if isinstance(wrt, int):
        wrt = Variable(wrt)
    if not isinstance(wrt, (Variable, Parameter)):
        raise TypeError("wrt must be a Variable, Parameter or int")
    memo: dict[int, Node] = {}

    def d(node: Node) -> Node:
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, (Variable, Parameter)):
            out: Node = const(1.0 if node == wrt else 0.0)
        elif isinstance(node, Constant):
            out = const(0.0)
        elif isinstance(node, Unary):
            out = _d_unary(node.fn, node.child, d(node.child), node)
        else:
            out = _d_binary(node.fn, node.left, node.right,
                            d(node.left), d(node.right), node)
        memo[key] = out
        return out

    from .simplify import simplify

    return simplify(d(tree))


def gradient_trees(tree: Node, d: int) -> list[Node]:
    return [differentiate(tree, Variable(j)) for j in range(d)]
