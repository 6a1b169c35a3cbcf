from __future__ import annotations

import numpy as np

from .kernels import compile_tree, run_jacobian, run_program
from .tree import Node


def evaluate(tree: Node, x, params=None) -> float:
    """Value of ``tree`` at a single point ``x``.

    Out-of-domain primitives give nan/inf; indices outside ``x`` or ``params``
    raise :class:`~srxbench.expr.kernels.ExprIndexError`.
    """
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return float(run_program(compile_tree(tree), x, params)[0])


def evaluate_batch(tree: Node, X, params=None, backend: str | None = None) -> np.ndarray:
    """Row-wise values of ``tree`` over the ``n x d`` matrix ``X``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1 and X.size == 0:
        X = X.reshape(0, 0)
    return run_program(compile_tree(tree), X, params, backend=backend)


def param_jacobian(tree: Node, X, params, backend: str | None = None):
    """``(values, J)`` where ``J`` holds d tree / d params for every row."""
    return run_jacobian(compile_tree(tree), X, params, backend=backend)
