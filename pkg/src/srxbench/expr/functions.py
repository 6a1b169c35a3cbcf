"""Primitive functions available to expression trees.

Each primitive carries its arity, the opcode used by the compiled kernels, a
numpy evaluation rule and a symbolic differentiation rule. Differentiation
rules receive the (already differentiated) child trees and return a new tree;
they are wired up in :mod:`srxbench.expr.calculus` to avoid an import cycle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

# opcodes shared with the kernels; keep in sync with kernels.py
OP_CONST = 0
OP_VAR = 1
OP_PARAM = 2

OP_ID = 10
OP_NEG = 11
OP_LOG = 12
OP_SQRT = 13
OP_SIN = 14
OP_COS = 15
OP_TANH = 16
OP_EXP = 17
OP_EXPN = 18
OP_ASIN = 19
OP_SQUARE = 20

OP_ADD = 30
OP_SUB = 31
OP_MUL = 32
OP_DIV = 33
OP_POW = 34


def _expn(a):
    return np.exp(-a)


@dataclass(frozen=True)
class Primitive:
    name: str
    arity: int
    opcode: int
    numpy_fn: Callable = field(compare=False, repr=False)


_PRIMITIVES = [
    Primitive("id", 1, OP_ID, lambda a: a),
    Primitive("neg", 1, OP_NEG, np.negative),
    Primitive("log", 1, OP_LOG, np.log),
    Primitive("sqrt", 1, OP_SQRT, np.sqrt),
    Primitive("sin", 1, OP_SIN, np.sin),
    Primitive("cos", 1, OP_COS, np.cos),
    Primitive("tanh", 1, OP_TANH, np.tanh),
    Primitive("exp", 1, OP_EXP, np.exp),
    Primitive("expn", 1, OP_EXPN, _expn),
    Primitive("asin", 1, OP_ASIN, np.arcsin),
    Primitive("square", 1, OP_SQUARE, np.square),
    Primitive("add", 2, OP_ADD, np.add),
    Primitive("sub", 2, OP_SUB, np.subtract),
    Primitive("mul", 2, OP_MUL, np.multiply),
    Primitive("div", 2, OP_DIV, np.divide),
    Primitive("pow", 2, OP_POW, np.power),
]

# spellings accepted by the parser and the manifest
ALIASES = {"arcsin": "asin", "ln": "log"}


class FunctionSet(Mapping[str, Primitive]):
    """Immutable name -> :class:`Primitive` registry."""

    def __init__(self, primitives: Iterable[Primitive]):
        self._by_name = {}
        for p in primitives:
            if p.name in self._by_name:
                raise ValueError(f"duplicate primitive {p.name!r}")
            self._by_name[p.name] = p

    def __getitem__(self, name: str) -> Primitive:
        return self._by_name[ALIASES.get(name, name)]

    def __contains__(self, name) -> bool:
        return ALIASES.get(name, name) in self._by_name

    def __iter__(self):
        return iter(self._by_name)

    def __len__(self) -> int:
        return len(self._by_name)

    @property
    def unary(self) -> tuple[str, ...]:
        return tuple(n for n, p in self._by_name.items() if p.arity == 1)

    @property
    def binary(self) -> tuple[str, ...]:
        return tuple(n for n, p in self._by_name.items() if p.arity == 2)

    def subset(self, names: Iterable[str]) -> "FunctionSet":
        return FunctionSet(self[n] for n in names)


FUNCTIONS = FunctionSet(_PRIMITIVES)

ITEA_TRANSFORMS = ("log", "sqrt", "id", "sin", "cos", "tanh", "exp", "expn", "asin")
GP_FUNCTIONS = ("add", "sub", "mul", "div", "exp", "log", "sqrt", "square",
                "sin", "cos", "tanh", "asin")
COMMUTATIVE = frozenset({"add", "mul"})


def canonical_name(name: str) -> str:
    return ALIASES.get(name, name)
