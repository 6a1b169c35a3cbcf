"""Levenberg-Marquardt for small nonlinear least-squares problems."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

ResidualJac = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


@dataclass
class LMResult:
    theta: np.ndarray
    cost: float  # ||r||^2 at theta
    initial_cost: float
    n_iter: int
    success: bool
    history: list[float] = field(default_factory=list)  # accepted costs, strictly decreasing
    message: str = ""


def forward_difference_jacobian(fun: Callable[[np.ndarray], np.ndarray], theta: np.ndarray,
                                r0: np.ndarray | None = None) -> np.ndarray:
    """Forward differences with ``h = 1e-8 * max(1, |theta_j|)``."""
    theta = np.asarray(theta, dtype=float)
    r0 = fun(theta) if r0 is None else r0
    J = np.empty((r0.size, theta.size))
    for j in range(theta.size):
        h = 1e-8 * max(1.0, abs(theta[j]))
        t = theta.copy()
        t[j] += h
        J[:, j] = (fun(t) - r0) / h
    return J


def levenberg_marquardt(fun: ResidualJac, theta0, max_iter: int = 25, mu0: float = 1e-3,
                        up: float = 2.0, down: float = 3.0, ftol: float = 1e-15,
                        xtol: float = 1e-15) -> LMResult:
    """Minimise ``||r(theta)||^2`` where ``fun(theta) -> (r, J)``.

    Damping is Marquardt-scaled (``mu * diag(J^T J)``); a step is accepted only
    if it lowers the cost, after which ``mu`` is divided by ``down``; rejected
    steps multiply ``mu`` by ``up``. Every trial step counts as one iteration.
    ``success`` is false only when the start point itself is not finite.
    """
    theta = np.array(theta0, dtype=float)
    with np.errstate(all="ignore"):
        r, J = fun(theta)
        cost = float(r @ r)
    if not (np.isfinite(cost) and np.all(np.isfinite(J))):
        return LMResult(theta, cost, cost, 0, False, [], "non-finite start")
    initial = cost
    history = [cost]
    mu = mu0
    p = theta.size
    it = 0
    msg = "max_iter"
    while it < max_iter:
        it += 1
        with np.errstate(all="ignore"):
            D = np.maximum(np.einsum("ij,ij->j", J, J), 1e-12)
            A = np.vstack([J, np.diag(np.sqrt(mu * D))])
        b = np.concatenate([-r, np.zeros(p)])
        if not np.all(np.isfinite(A)):
            # LAPACK may not return on inf/nan input
            msg = "overflow"
            break
        try:
            step = np.linalg.lstsq(A, b, rcond=None)[0]
        except np.linalg.LinAlgError:
            mu *= up
            continue
        trial = theta + step
        with np.errstate(all="ignore"):
            r_new, J_new = fun(trial)
            c_new = float(r_new @ r_new)
        if np.isfinite(c_new) and c_new < cost and np.all(np.isfinite(J_new)):
            improvement = cost - c_new
            theta, r, J, cost = trial, r_new, J_new, c_new
            history.append(cost)
            mu /= down
            if cost == 0.0 or improvement <= ftol * cost:
                msg = "ftol"
                break
        else:
            mu *= up
            if np.linalg.norm(step) <= xtol * (np.linalg.norm(theta) + xtol):
                msg = "xtol"
                break
    return LMResult(theta, cost, initial, it, True, history, msg)
