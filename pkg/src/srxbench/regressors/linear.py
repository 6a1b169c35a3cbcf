"""Ordinary least squares and the lasso (coordinate descent)."""

from __future__ import annotations

import time

import numpy as np
import scipy.linalg

from .._accel import USE_NUMBA, njit
from ..expr import Binary, Constant, Node, Variable
from .base import SymbolicModel


def linear_form(intercept: float, coef, keep_zeros: bool = True) -> Node:
    out: Node = Constant(intercept)
    for j, b in enumerate(coef):
        if b == 0.0 and not keep_zeros:
            continue
        out = Binary("add", out, Binary("mul", Constant(float(b)), Variable(j)))
    return out


def ols(X: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray, int]:
    """Intercept, coefficients and numerical rank (pivoted QR, min-norm on deficiency)."""
    n, d = X.shape
    A = np.column_stack([np.ones(n), X])
    sol, _, rank, _ = scipy.linalg.lstsq(A, y, lapack_driver="gelsy")
    return float(sol[0]), np.asarray(sol[1:], dtype=float), int(rank)


def fit_linear(train, seed=None) -> SymbolicModel:
    t0 = time.perf_counter()
    b0, beta, rank = ols(train.X, train.y)
    model = SymbolicModel(
        kind="linear", hyper={}, seed=seed,
        form=linear_form(b0, beta),
        n_features=train.d,
        feature_mask=np.ones(train.d, dtype=bool),
        meta={"intercept": b0, "coef": beta.tolist(),
              "rank_deficient": rank < train.d + 1,
              "fit_seconds": time.perf_counter() - t0},
    )
    return model


# -- lasso -------------------------------------------------------------------


@njit
def _cd_nb(X, y, alpha, max_iter, tol):
    n, d = X.shape
    w = np.zeros(d)
    r = y.copy()
    col_sq = np.zeros(d)
    for j in range(d):
        s = 0.0
        for i in range(n):
            s += X[i, j] * X[i, j]
        col_sq[j] = s / n
    yy = 0.0
    for i in range(n):
        yy += y[i] * y[i]
    gap = np.inf
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        max_dw = 0.0
        max_w = 0.0
        for j in range(d):
            if col_sq[j] == 0.0:
                continue
            wj = w[j]
            rho = 0.0
            for i in range(n):
                rho += X[i, j] * r[i]
            rho = rho / n + col_sq[j] * wj
            a = abs(rho) - alpha
            new = 0.0
            if a > 0.0:
                new = np.sign(rho) * a / col_sq[j]
            if new != wj:
                dw = new - wj
                for i in range(n):
                    r[i] -= X[i, j] * dw
                w[j] = new
                if abs(dw) > max_dw:
                    max_dw = abs(dw)
            if abs(new) > max_w:
                max_w = abs(new)
        gap = _gap(X, y, r, w, alpha, n, yy)
        if alpha == 0.0:
            if max_dw <= tol * max(max_w, 1e-300) or max_dw == 0.0:
                converged = True
                break
        elif gap <= tol * yy:
            converged = True
            break
    return w, it, gap, converged


@njit
def _gap(X, y, r, w, alpha, n, yy):
    d = X.shape[1]
    alpha_n = alpha * n
    dual = 0.0
    for j in range(d):
        s = 0.0
        for i in range(n):
            s += X[i, j] * r[i]
        if abs(s) > dual:
            dual = abs(s)
    rr = 0.0
    ry = 0.0
    for i in range(n):
        rr += r[i] * r[i]
        ry += r[i] * y[i]
    wn = 0.0
    for j in range(d):
        wn += abs(w[j])
    if dual > alpha_n:
        const = alpha_n / dual
        g = 0.5 * (rr + rr * const * const)
    else:
        const = 1.0
        g = rr
    return g + alpha_n * wn - const * ry


def _gap_np(X, y, r, w, alpha):
    n = X.shape[0]
    alpha_n = alpha * n
    dual = np.max(np.abs(X.T @ r)) if X.shape[1] else 0.0
    rr = r @ r
    if dual > alpha_n:
        const = alpha_n / dual
        g = 0.5 * (rr + rr * const * const)
    else:
        const = 1.0
        g = rr
    return g + alpha_n * np.abs(w).sum() - const * (r @ y)


def _cd_np(X, y, alpha, max_iter, tol):
    n, d = X.shape
    w = np.zeros(d)
    r = y.copy()
    col_sq = (X * X).sum(axis=0) / n
    yy = y @ y
    gap = np.inf
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        max_dw = 0.0
        max_w = 0.0
        for j in range(d):
            if col_sq[j] == 0.0:
                continue
            wj = w[j]
            rho = X[:, j] @ r / n + col_sq[j] * wj
            a = abs(rho) - alpha
            new = np.sign(rho) * a / col_sq[j] if a > 0.0 else 0.0
            if new != wj:
                dw = new - wj
                r -= X[:, j] * dw
                w[j] = new
                max_dw = max(max_dw, abs(dw))
            max_w = max(max_w, abs(new))
        gap = _gap_np(X, y, r, w, alpha)
        if alpha == 0.0:
            if max_dw <= tol * max(max_w, 1e-300) or max_dw == 0.0:
                converged = True
                break
        elif gap <= tol * yy:
            converged = True
            break
    return w, it, gap, converged


def lasso_cd(X, y, alpha: float, max_iter: int = 10_000, tol: float = 1e-6,
             backend: str | None = None):
    """Minimise ``(1/2n)||y - Xw||^2 + alpha ||w||_1`` (no intercept).

    Stops when the duality gap falls below ``tol * ||y||^2`` (for ``alpha=0``,
    when the largest coefficient update is below ``tol`` relative). Returns
    ``(w, sweeps, gap, converged)``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    use_nb = USE_NUMBA if backend is None else backend == "numba"
    fn = _cd_nb if use_nb else _cd_np
    w, it, gap, conv = fn(X, y, float(alpha), int(max_iter), float(tol))
    return np.asarray(w), int(it), float(gap), bool(conv)


def fit_lasso(train, alpha: float = 1.0, seed=None, max_iter: int = 10_000,
              tol: float = 1e-6) -> SymbolicModel:
    """Lasso on internally standardised features; coefficients on the raw scale."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    t0 = time.perf_counter()
    X, y = train.X, train.y
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    safe = np.where(sd > 0, sd, 1.0)
    Xs = np.where(sd > 0, (X - mu) / safe, 0.0)
    ybar = y.mean()
    ws, sweeps, gap, conv = lasso_cd(Xs, y - ybar, alpha, max_iter, tol)
    beta = np.where(sd > 0, ws / safe, 0.0)
    b0 = float(ybar - mu @ beta)
    mask = beta != 0.0
    return SymbolicModel(
        kind="lasso", hyper={"alpha": alpha}, seed=seed,
        form=linear_form(b0, beta, keep_zeros=False),
        n_features=train.d,
        feature_mask=mask,
        meta={"intercept": b0, "coef": beta.tolist(), "sweeps": sweeps,
              "duality_gap": gap, "converged": conv,
              "fit_seconds": time.perf_counter() - t0},
    )
