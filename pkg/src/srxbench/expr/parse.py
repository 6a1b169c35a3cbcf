"""Infix parser, infix renderer and the canonical prefix (s-expression) format.

Grammar (usual precedence, ``^`` binds tightest and is right associative)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Names resolve to declared variables first (bound by declaration order), then
to the constants ``pi``/``e``, then to unary primitives.
"""

from __future__ import annotations

import math
import re
from typing import Sequence

from .functions import FUNCTIONS, canonical_name
from .tree import (Binary, Constant, Node, Parameter, Unary, Variable,
                   integer_power)


class ParseError(ValueError):
    """Syntax or name error, annotated with the 0-based character position."""

    def __init__(self, message: str, pos: int, text: str = ""):
        self.pos = pos
        self.text = text
        super().__init__(f"{message} at position {pos}")


class UnknownIdentifierError(ParseError):
    pass


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),]))")

_NAMED_CONSTANTS = {"pi": math.pi, "e": math.e}


def _tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ParseError(f"unexpected character {text[start]!r}", start, text)
        kind = m.lastgroup
        value = m.group(kind)
        start = m.start(kind)
        if value == "**":
            value = "^"
        out.append((kind, value, start))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str, variables: Sequence[str], parameters: Sequence[str]):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.vars = {name: k for k, name in enumerate(variables)}
        self.params = {name: k for k, name in enumerate(parameters)}

    @property
    def tok(self):
        return self.toks[self.i]

    def take(self, value=None):
        kind, val, pos = self.tok
        if value is not None and val != value:
            found = "end of input" if kind == "end" else repr(val)
            raise ParseError(f"expected {value!r}, found {found}", pos, self.text)
        self.i += 1
        return self.toks[self.i - 1]

    def parse(self) -> Node:
        node = self.expr()
        kind, val, pos = self.tok
        if kind != "end":
            raise ParseError(f"unexpected token {val!r}", pos, self.text)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.tok[1] in ("+", "-") and self.tok[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            node = Binary("add" if op == "+" else "sub", node, rhs)
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.tok[1] in ("*", "/") and self.tok[0] == "op":
            op = self.take()[1]
            rhs = self.unary()
            node = Binary("mul" if op == "*" else "div", node, rhs)
        return node

    def unary(self) -> Node:
        if self.tok[0] == "op" and self.tok[1] in ("+", "-"):
            op = self.take()[1]
            operand = self.unary()
            if op == "+":
                return operand
            if isinstance(operand, Constant):
                return Constant(-operand.value)
            return Unary("neg", operand)
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.tok[0] == "op" and self.tok[1] == "^":
            pos = self.take()[2]
            exponent = self.unary()
            if not isinstance(exponent, Constant):
                raise ParseError("exponent must be a numeric constant", pos, self.text)
            k = exponent.value
            if float(k).is_integer():
                return integer_power(base, int(k))
            return Binary("pow", base, exponent)
        return base

    def atom(self) -> Node:
        kind, val, pos = self.tok
        if kind == "num":
            self.take()
            return Constant(float(val))
        if kind == "name":
            self.take()
            if self.tok[1] == "(" and val not in self.vars:
                name = canonical_name(val)
                if name not in FUNCTIONS or FUNCTIONS[name].arity != 1:
                    raise UnknownIdentifierError(f"unknown function {val!r}", pos, self.text)
                self.take("(")
                arg = self.expr()
                self.take(")")
                return Unary(name, arg)
            if val in self.vars:
                return Variable(self.vars[val])
            if val in self.params:
                return Parameter(self.params[val])
            if val in _NAMED_CONSTANTS:
                return Constant(_NAMED_CONSTANTS[val])
            raise UnknownIdentifierError(f"unknown identifier {val!r}", pos, self.text)
        if kind == "op" and val == "(":
            self.take()
            node = self.expr()
            self.take(")")
            return node
        found = "end of input" if kind == "end" else repr(val)
        raise ParseError(f"unexpected {found}", pos, self.text)


def parse(text: str, variables: Sequence[str] = ("x",),
          parameters: Sequence[str] = ()) -> Node:
    """Parse infix ``text``; ``variables[i]`` becomes ``Variable(i)``."""
    return _Parser(text, variables, parameters).parse()


_INFIX = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}


def _fmt_const(v: float) -> str:
    s = repr(float(v))
    return f"({s})" if v < 0 or s.startswith("-") else s


def render(tree: Node, variables: Sequence[str] | None = None) -> str:
    """Fully parenthesised infix text that :func:`parse` reads back."""

    def name(i: int) -> str:
        return variables[i] if variables is not None else f"x{i}"

    def go(n: Node) -> str:
        if isinstance(n, Constant):
            return _fmt_const(n.value)
        if isinstance(n, Variable):
            return name(n.index)
        if isinstance(n, Parameter):
            return f"p{n.index}"
        if isinstance(n, Unary):
            if n.fn == "neg":
                return f"(-{go(n.child)})"
            return f"{n.fn}({go(n.child)})"
        return f"({go(n.left)} {_INFIX[n.fn]} {go(n.right)})"

    return go(tree)


def default_names(d: int) -> list[str]:
    return [f"x{i}" for i in range(d)]


# -- prefix format -----------------------------------------------------------


def to_prefix(tree: Node) -> str:
    """One-line s-expression, e.g. ``(add (mul 2.0 x0) p1)``."""
    if isinstance(tree, Constant):
        return repr(tree.value)
    if isinstance(tree, Variable):
        return f"x{tree.index}"
    if isinstance(tree, Parameter):
        return f"p{tree.index}"
    if isinstance(tree, Unary):
        return f"({tree.fn} {to_prefix(tree.child)})"
    return f"({tree.fn} {to_prefix(tree.left)} {to_prefix(tree.right)})"


_PREFIX_TOKEN = re.compile(r"\s*(\(|\)|[^\s()]+)")


def from_prefix(text: str) -> Node:
    toks = []
    pos = 0
    while pos < len(text):
        m = _PREFIX_TOKEN.match(text, pos)
        if not m:
            if text[pos:].strip():
                raise ParseError("bad prefix token", pos, text)
            break
        toks.append((m.group(1), m.start(1)))
        pos = m.end()
    it = iter(toks + [("", len(text))])
    cur = [next(it)]

    def advance():
        cur[0] = next(it)

    def node() -> Node:
        tok, p = cur[0]
        if tok == "(":
            advance()
            fn, fpos = cur[0]
            name = canonical_name(fn)
            if name not in FUNCTIONS:
                raise UnknownIdentifierError(f"unknown function {fn!r}", fpos, text)
            advance()
            args = []
            while cur[0][0] not in (")", ""):
                args.append(node())
            if cur[0][0] != ")":
                raise ParseError("missing ')'", cur[0][1], text)
            advance()
            if len(args) != FUNCTIONS[name].arity:
                raise ParseError(f"{name} expects {FUNCTIONS[name].arity} arguments", p, text)
            return Unary(name, args[0]) if len(args) == 1 else Binary(name, *args)
        if tok == "" or tok == ")":
            raise ParseError("unexpected end of expression", p, text)
        advance()
        if re.fullmatch(r"x\d+", tok):
            return Variable(int(tok[1:]))
        if re.fullmatch(r"p\d+", tok):
            return Parameter(int(tok[1:]))
        try:
            return Constant(float(tok))
        except ValueError:
            raise UnknownIdentifierError(f"unknown token {tok!r}", p, text) from None

    out = node()
    if cur[0][0] != "":
        raise ParseError("trailing input", cur[0][1], text)
    return out
