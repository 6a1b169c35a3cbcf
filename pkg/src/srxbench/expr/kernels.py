"""Postfix compilation of expression trees and the evaluation kernels.

A tree is flattened into a postfix program: ``code[k]`` is the opcode of the
k-th instruction, ``arg[k]`` the variable/parameter/constant slot for leaves and
``c1[k]``/``c2[k]`` the instruction indices of its children. The value of the
tree is the value of the last instruction.

Two backends evaluate a program over a row matrix: ``*_nb`` kernels loop row by
row under numba, ``*_np`` kernels vectorise each instruction across rows. Both
follow IEEE semantics (nan/inf propagate, nothing raises).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .._accel import USE_NUMBA, njit
from .functions import (FUNCTIONS, OP_ADD, OP_ASIN, OP_CONST, OP_COS, OP_DIV,
                        OP_EXP, OP_EXPN, OP_ID, OP_LOG, OP_MUL, OP_NEG,
                        OP_PARAM, OP_POW, OP_SIN, OP_SQRT, OP_SQUARE, OP_SUB,
                        OP_TANH, OP_VAR)
from .tree import Binary, Constant, Node, Parameter, Unary, Variable, children


class ExprIndexError(IndexError):
    """A variable or parameter index is outside the supplied input."""


@dataclass(frozen=True, eq=False)
class Program:
    code: np.ndarray
    arg: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    consts: np.ndarray
    max_var: int  # -1 when the tree has no variables
    max_param: int

    def __len__(self) -> int:
        return len(self.code)


@lru_cache(maxsize=4096)
def compile_tree(tree: Node) -> Program:
    code, arg, c1, c2, consts = [], [], [], [], []
    max_var = max_param = -1
    # iterative postorder so deep trees do not hit the recursion limit
    stack: list[tuple[Node, bool]] = [(tree, False)]
    slots: list[int] = []
    while stack:
        node, expanded = stack.pop()
        kids = children(node)
        if kids and not expanded:
            stack.append((node, True))
            for k in reversed(kids):
                stack.append((k, False))
            continue
        a = b = -1
        if isinstance(node, Constant):
            op, ar = OP_CONST, len(consts)
            consts.append(node.value)
        elif isinstance(node, Variable):
            op, ar = OP_VAR, node.index
            max_var = max(max_var, node.index)
        elif isinstance(node, Parameter):
            op, ar = OP_PARAM, node.index
            max_param = max(max_param, node.index)
        elif isinstance(node, Unary):
            op, ar = FUNCTIONS[node.fn].opcode, -1
            a = slots.pop()
        else:
            op, ar = FUNCTIONS[node.fn].opcode, -1
            b = slots.pop()
            a = slots.pop()
        slots.append(len(code))
        code.append(op)
        arg.append(ar)
        c1.append(a)
        c2.append(b)
    return Program(
        code=np.asarray(code, dtype=np.int64),
        arg=np.asarray(arg, dtype=np.int64),
        c1=np.asarray(c1, dtype=np.int64),
        c2=np.asarray(c2, dtype=np.int64),
        consts=np.asarray(consts, dtype=np.float64),
        max_var=max_var,
        max_param=max_param,
    )


# -- numba backend -----------------------------------------------------------


@njit
def _apply_nb(op, a, b):
    if op == OP_ID:
        return a
    if op == OP_NEG:
        return -a
    if op == OP_LOG:
        return np.log(a)
    if op == OP_SQRT:
        return np.sqrt(a)
    if op == OP_SIN:
        return np.sin(a)
    if op == OP_COS:
        return np.cos(a)
    if op == OP_TANH:
        return np.tanh(a)
    if op == OP_EXP:
        return np.exp(a)
    if op == OP_EXPN:
        return np.exp(-a)
    if op == OP_ASIN:
        return np.arcsin(a)
    if op == OP_SQUARE:
        return a * a
    if op == OP_ADD:
        return a + b
    if op == OP_SUB:
        return a - b
    if op == OP_MUL:
        return a * b
    if op == OP_DIV:
        return a / b
    if op == OP_POW:
        return np.power(a, b)
    return np.nan


@njit
def _forward_row_nb(code, arg, c1, c2, consts, X, r, params, buf):
    for k in range(code.shape[0]):
        op = code[k]
        if op == OP_CONST:
            buf[k] = consts[arg[k]]
        elif op == OP_VAR:
            buf[k] = X[r, arg[k]]
        elif op == OP_PARAM:
            buf[k] = params[arg[k]]
        else:
            a = buf[c1[k]]
            b = buf[c2[k]] if c2[k] >= 0 else 0.0
            buf[k] = _apply_nb(op, a, b)


@njit
def eval_nb(code, arg, c1, c2, consts, X, params):
    n = X.shape[0]
    m = code.shape[0]
    out = np.empty(n)
    buf = np.empty(m)
    for r in range(n):
        _forward_row_nb(code, arg, c1, c2, consts, X, r, params, buf)
        out[r] = buf[m - 1]
    return out


@njit
def jac_nb(code, arg, c1, c2, consts, X, params):
    """Values and d(value)/d(params) by reverse accumulation, row by row."""
    n = X.shape[0]
    m = code.shape[0]
    p = params.shape[0]
    out = np.empty(n)
    J = np.zeros((n, p))
    buf = np.empty(m)
    adj = np.empty(m)
    for r in range(n):
        _forward_row_nb(code, arg, c1, c2, consts, X, r, params, buf)
        out[r] = buf[m - 1]
        adj[:] = 0.0
        adj[m - 1] = 1.0
        for k in range(m - 1, -1, -1):
            op = code[k]
            g = adj[k]
            if op == OP_PARAM:
                J[r, arg[k]] += g
                continue
            if op == OP_CONST or op == OP_VAR:
                continue
            i = c1[k]
            a = buf[i]
            v = buf[k]
            if op == OP_ID:
                adj[i] += g
            elif op == OP_NEG:
                adj[i] -= g
            elif op == OP_LOG:
                adj[i] += g / a
            elif op == OP_SQRT:
                adj[i] += g * 0.5 / v
            elif op == OP_SIN:
                adj[i] += g * np.cos(a)
            elif op == OP_COS:
                adj[i] -= g * np.sin(a)
            elif op == OP_TANH:
                adj[i] += g * (1.0 - v * v)
            elif op == OP_EXP:
                adj[i] += g * v
            elif op == OP_EXPN:
                adj[i] -= g * v
            elif op == OP_ASIN:
                adj[i] += g / np.sqrt(1.0 - a * a)
            elif op == OP_SQUARE:
                adj[i] += 2.0 * a * g
            else:
                j = c2[k]
                b = buf[j]
                if op == OP_ADD:
                    adj[i] += g
                    adj[j] += g
                elif op == OP_SUB:
                    adj[i] += g
                    adj[j] -= g
                elif op == OP_MUL:
                    adj[i] += g * b
                    adj[j] += g * a
                elif op == OP_DIV:
                    adj[i] += g / b
                    adj[j] -= g * a / (b * b)
                elif op == OP_POW:
                    adj[i] += g * b * np.power(a, b - 1.0)
                    adj[j] += g * v * np.log(a)
    return out, J


# -- numpy backend -----------------------------------------------------------

_NP_UNARY = {
    OP_ID: lambda a: a,
    OP_NEG: np.negative,
    OP_LOG: np.log,
    OP_SQRT: np.sqrt,
    OP_SIN: np.sin,
    OP_COS: np.cos,
    OP_TANH: np.tanh,
    OP_EXP: np.exp,
    OP_EXPN: lambda a: np.exp(-a),
    OP_ASIN: np.arcsin,
    OP_SQUARE: lambda a: a * a,
}
_NP_BINARY = {
    OP_ADD: np.add,
    OP_SUB: np.subtract,
    OP_MUL: np.multiply,
    OP_DIV: np.divide,
    OP_POW: np.power,
}


def _forward_np(prog: Program, X: np.ndarray, params: np.ndarray) -> list:
    n = X.shape[0]
    buf: list = [None] * len(prog)
    for k in range(len(prog)):
        op = prog.code[k]
        if op == OP_CONST:
            buf[k] = np.full(n, prog.consts[prog.arg[k]])
        elif op == OP_VAR:
            buf[k] = X[:, prog.arg[k]]
        elif op == OP_PARAM:
            buf[k] = np.full(n, params[prog.arg[k]])
        elif op in _NP_UNARY:
            buf[k] = _NP_UNARY[op](buf[prog.c1[k]])
        else:
            buf[k] = _NP_BINARY[op](buf[prog.c1[k]], buf[prog.c2[k]])
    return buf


def eval_np(prog: Program, X: np.ndarray, params: np.ndarray) -> np.ndarray:
    with np.errstate(all="ignore"):
        out = _forward_np(prog, X, params)[-1]
    return np.array(out, dtype=np.float64, copy=True)


def jac_np(prog: Program, X: np.ndarray, params: np.ndarray):
    n = X.shape[0]
    p = params.shape[0]
    J = np.zeros((n, p))
    with np.errstate(all="ignore"):
        buf = _forward_np(prog, X, params)
        adj = [np.zeros(n) for _ in range(len(prog))]
        adj[-1] = np.ones(n)
        for k in range(len(prog) - 1, -1, -1):
            op = prog.code[k]
            g = adj[k]
            if op == OP_PARAM:
                J[:, prog.arg[k]] += g
                continue
            if op in (OP_CONST, OP_VAR):
                continue
            i = prog.c1[k]
            a = buf[i]
            v = buf[k]
            if op == OP_ID:
                adj[i] = adj[i] + g
            elif op == OP_NEG:
                adj[i] = adj[i] - g
            elif op == OP_LOG:
                adj[i] = adj[i] + g / a
            elif op == OP_SQRT:
                adj[i] = adj[i] + g * 0.5 / v
            elif op == OP_SIN:
                adj[i] = adj[i] + g * np.cos(a)
            elif op == OP_COS:
                adj[i] = adj[i] - g * np.sin(a)
            elif op == OP_TANH:
                adj[i] = adj[i] + g * (1.0 - v * v)
            elif op == OP_EXP:
                adj[i] = adj[i] + g * v
            elif op == OP_EXPN:
                adj[i] = adj[i] - g * v
            elif op == OP_ASIN:
                adj[i] = adj[i] + g / np.sqrt(1.0 - a * a)
            elif op == OP_SQUARE:
                adj[i] = adj[i] + 2.0 * a * g
            else:
                j = prog.c2[k]
                b = buf[j]
                if op == OP_ADD:
                    adj[i] = adj[i] + g
                    adj[j] = adj[j] + g
                elif op == OP_SUB:
                    adj[i] = adj[i] + g
                    adj[j] = adj[j] - g
                elif op == OP_MUL:
                    adj[i] = adj[i] + g * b
                    adj[j] = adj[j] + g * a
                elif op == OP_DIV:
                    adj[i] = adj[i] + g / b
                    adj[j] = adj[j] - g * a / (b * b)
                elif op == OP_POW:
                    adj[i] = adj[i] + g * b * np.power(a, b - 1.0)
                    adj[j] = adj[j] + g * v * np.log(a)
    return np.array(buf[-1], dtype=np.float64, copy=True), J


# -- dispatch ----------------------------------------------------------------


def _check(prog: Program, X: np.ndarray, params: np.ndarray) -> None:
    if prog.max_var >= X.shape[1]:
        raise ExprIndexError(
            f"variable index {prog.max_var} out of range for {X.shape[1]} features")
    if prog.max_param >= params.shape[0]:
        raise ExprIndexError(
            f"parameter index {prog.max_param} out of range for {params.shape[0]} parameters")


def _prepare(X, params):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be a 2-D matrix")
    params = np.ascontiguousarray(
        np.zeros(0) if params is None else params, dtype=np.float64).reshape(-1)
    return X, params


def run_program(prog: Program, X, params=None, backend: str | None = None) -> np.ndarray:
    X, params = _prepare(X, params)
    _check(prog, X, params)
    if X.shape[0] == 0:
        return np.zeros(0)
    use_nb = USE_NUMBA if backend is None else backend == "numba"
    if use_nb:
        return eval_nb(prog.code, prog.arg, prog.c1, prog.c2, prog.consts, X, params)
    return eval_np(prog, X, params)


def run_jacobian(prog: Program, X, params, backend: str | None = None):
    """Return ``(values, J)`` with ``J[i, j] = d value_i / d params_j``."""
    X, params = _prepare(X, params)
    _check(prog, X, params)
    use_nb = USE_NUMBA if backend is None else backend == "numba"
    if use_nb:
        return jac_nb(prog.code, prog.arg, prog.c1, prog.c2, prog.consts, X, params)
    return jac_np(prog, X, params)
