"""Feature-importance explainers with a shared local/global contract.

Local explainers are written for a batch of points (``X`` with one row per
point and one seed per row); single-point calls go through the same code.
Global explainers return one vector for the model.

Feature removal for SHAP and SAGE is interventional: excluded features are
replaced by their training means.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .regressors.tuning import r2_score


class UnsupportedExplainerError(TypeError):
    """The explainer needs something the model does not provide."""


@dataclass
class Explanation:
    values: np.ndarray
    scope: str  # "local" or "global"
    explainer: str
    model: str | None = None
    point_index: int | None = None
    point: np.ndarray | None = None
    seconds: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.scope not in ("local", "global"):
            raise ValueError(f"bad scope {self.scope!r}")

    @property
    def d(self) -> int:
        return self.values.size

    def to_record(self) -> dict:
        return {"explainer": self.explainer, "model": self.model, "scope": self.scope,
                "point": "global" if self.scope == "global" else self.point_index,
                "values": self.values.tolist(), "seconds": self.seconds}


@dataclass
class ExplainerConfig:
    """Knobs for every explainer; see the individual functions for meaning."""

    permutation_repeats: int = 10
    shap_exact_cutoff: int = 10
    shap_samples: int = 256
    lime_samples: int = 500
    lime_width: float | None = None  # None -> 0.75 * sqrt(d)
    ela_k: int | None = None  # None -> max(2 (d + 1), 10)
    morris_trajectories: int = 50
    morris_levels: int = 8
    ig_steps: int = 50
    ig_baseline: str | Sequence[float] = "mean"  # "mean", "zero" or explicit vector
    global_rows: int | None = None  # subsample training rows for global SHAP/PE/SAGE

    def __post_init__(self):
        counts = ("permutation_repeats", "shap_samples", "lime_samples",
                  "morris_trajectories")
        for name in counts:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 1 <= self.shap_exact_cutoff <= 20:
            raise ValueError("shap_exact_cutoff must lie in [1, 20]")
        if self.ig_steps < 2:
            raise ValueError("ig_steps must be >= 2")
        if self.morris_levels < 2:
            raise ValueError("morris_levels must be >= 2")

    def to_dict(self) -> dict:
        return asdict(self)


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def _model_id(model) -> str | None:
    return getattr(model, "kind", None)


def _as_rows(X, d: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != d:
        raise ValueError(f"expected {d} features, got {X.shape[1]}")
    return X


def _seeds(seeds, m: int) -> list:
    if seeds is None or np.isscalar(seeds):
        base = 0 if seeds is None else int(seeds)
        return [np.random.SeedSequence([base, i]) for i in range(m)]
    seeds = list(seeds)
    if len(seeds) != m:
        raise ValueError("one seed per point is required")
    return seeds


def _wrap_local(name, model, X, values, seconds, point_indices=None, metas=None):
    m = X.shape[0]
    per = seconds / max(m, 1)
    out = []
    for i in range(m):
        out.append(Explanation(values[i], "local", name, _model_id(model),
                               None if point_indices is None else int(point_indices[i]),
                               X[i].copy(), per, {} if metas is None else metas[i]))
    return out


# -- Shapley machinery ---------------------------------------------------------


def shapley_weights(d: int) -> np.ndarray:
    """``w[s] = s! (d - s - 1)! / d!`` for coalition sizes ``s = 0..d-1``."""
    return np.array([math.factorial(s) * math.factorial(d - s - 1) / math.factorial(d)
                     for s in range(d)])


def coalition_masks(d: int) -> np.ndarray:
    """All ``2^d`` membership masks; row ``b`` has feature ``j`` iff bit ``j`` of ``b``."""
    b = np.arange(2 ** d)[:, None]
    return ((b >> np.arange(d)[None, :]) & 1).astype(bool)


def exact_shapley(values: np.ndarray, d: int) -> np.ndarray:
    """Shapley values from a coalition value table.

    ``values[..., b]`` is the worth of the coalition encoded by bitmask ``b``.
    """
    w = shapley_weights(d)
    sizes = coalition_masks(d).sum(axis=1)
    out = np.zeros(values.shape[:-1] + (d,))
    for j in range(d):
        bit = 1 << j
        without = np.array([b for b in range(2 ** d) if not b & bit])
        gain = values[..., without | bit] - values[..., without]
        out[..., j] = gain @ w[sizes[without]]
    return out


def _permutation_shapley(value_of_rows: Callable, x_batch: np.ndarray, base: np.ndarray,
                         samples: int, rngs) -> np.ndarray:
    """Monte Carlo Shapley over random feature orders, one generator per point."""
    m, d = x_batch.shape
    rows = np.empty((m, samples, d + 1, d))
    orders = np.empty((m, samples, d), dtype=np.int64)
    for i in range(m):
        for s in range(samples):
            orders[i, s] = rngs[i].permutation(d)
            cur = base.copy()
            rows[i, s, 0] = cur
            for t, j in enumerate(orders[i, s]):
                cur[j] = x_batch[i, j]
                rows[i, s, t + 1] = cur
    f = value_of_rows(rows.reshape(-1, d)).reshape(m, samples, d + 1)
    out = np.zeros((m, d))
    for i in range(m):
        for s in range(samples):
            diffs = np.diff(f[i, s])
            out[i, orders[i, s]] += diffs
    return out / samples


def shap_values(model, train, X, config: ExplainerConfig | None = None, seeds=None,
                base: np.ndarray | None = None) -> tuple[np.ndarray, str]:
    """Raw SHAP matrix for the rows of ``X`` and the mode used (exact/sampled)."""
    cfg = config or ExplainerConfig()
    d = train.d
    X = _as_rows(X, d)
    base = train.X.mean(axis=0) if base is None else np.asarray(base, dtype=float)
    if d <= cfg.shap_exact_cutoff:
        masks = coalition_masks(d)
        rows = np.where(masks[None, :, :], X[:, None, :], base[None, None, :])
        f = model.predict(rows.reshape(-1, d)).reshape(X.shape[0], 2 ** d)
        return exact_shapley(f, d), "exact"
    rngs = [_rng(s) for s in _seeds(seeds, X.shape[0])]
    return _permutation_shapley(model.predict, X, base, cfg.shap_samples, rngs), "sampled"


def shap_local(model, train, X, config: ExplainerConfig | None = None, seeds=None,
               point_indices=None) -> list[Explanation]:
    t0 = time.perf_counter()
    X = _as_rows(X, train.d)
    vals, mode = shap_values(model, train, X, config, seeds)
    out = _wrap_local("shap", model, X, vals, time.perf_counter() - t0, point_indices)
    for e in out:
        e.meta["mode"] = mode
    return out


def _global_idx(train, cfg: ExplainerConfig, seed) -> np.ndarray:
    if cfg.global_rows is None or cfg.global_rows >= train.n:
        return np.arange(train.n)
    return np.sort(_rng(seed).choice(train.n, cfg.global_rows, replace=False))


def _global_rows(train, cfg: ExplainerConfig, seed) -> np.ndarray:
    return train.X[_global_idx(train, cfg, seed)]


def shap_global(model, train, config: ExplainerConfig | None = None, seed=0) -> Explanation:
    cfg = config or ExplainerConfig()
    t0 = time.perf_counter()
    rows = _global_rows(train, cfg, seed)
    vals, mode = shap_values(model, train, rows, cfg, seed)
    return Explanation(np.abs(vals).mean(axis=0), "global", "shap", _model_id(model),
                       seconds=time.perf_counter() - t0, meta={"mode": mode, "rows": len(rows)})


# -- SAGE ----------------------------------------------------------------------


def histogram_mi(a: np.ndarray, b: np.ndarray, bins: int = 16) -> float:
    """Mutual information (nats) from an equal-width ``bins x bins`` histogram."""
    joint, _, _ = np.histogram2d(a, b, bins=bins)
    p = joint / joint.sum()
    pa = p.sum(axis=1, keepdims=True)
    pb = p.sum(axis=0, keepdims=True)
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / (pa @ pb)[nz])))


def sage_global(model, train, config: ExplainerConfig | None = None, seed=0) -> Explanation:
    """Shapley decomposition of the predictive power ``MI(f_S(X), y)``.

    ``values`` use ``v(S) = MI(f_S, y) - MI(f_empty, y)`` so that informative
    features score positive; the negated (no-feature minus S) convention is
    kept in ``meta["printed_sign_values"]``.
    """
    cfg = config or ExplainerConfig()
    t0 = time.perf_counter()
    d = train.d
    idx = _global_idx(train, cfg, seed)
    rows, y = train.X[idx], train.y[idx]
    base = train.X.mean(axis=0)
    n = rows.shape[0]

    def worth(mask) -> float:
        Z = np.where(mask[None, :], rows, base[None, :])
        return histogram_mi(model.predict(Z), y)

    v_empty = worth(np.zeros(d, dtype=bool))
    if d <= cfg.shap_exact_cutoff:
        masks = coalition_masks(d)
        Z = np.where(masks[:, None, :], rows[None, :, :], base[None, None, :])
        preds = model.predict(Z.reshape(-1, d)).reshape(2 ** d, n)
        v = np.array([histogram_mi(preds[b], y) for b in range(2 ** d)]) - v_empty
        phi = exact_shapley(v, d)
        mode = "exact"
        v_full = float(v[-1])
    else:
        rng = _rng(seed)
        phi = np.zeros(d)
        memo: dict[bytes, float] = {}
        for _ in range(cfg.shap_samples):
            mask = np.zeros(d, dtype=bool)
            prev = 0.0
            for j in rng.permutation(d):
                mask[j] = True
                key = mask.tobytes()
                if key not in memo:
                    memo[key] = worth(mask) - v_empty
                phi[j] += memo[key] - prev
                prev = memo[key]
        phi /= cfg.shap_samples
        mode = "sampled"
        v_full = worth(np.ones(d, dtype=bool)) - v_empty
    return Explanation(phi, "global", "sage", _model_id(model), seconds=time.perf_counter() - t0,
                       meta={"mode": mode, "printed_sign_values": (-phi).tolist(),
                             "v_full": v_full})


# -- permutation importance ----------------------------------------------------


def permutation_global(model, train, config: ExplainerConfig | None = None,
                       seed=0) -> Explanation:
    """Drop in training R^2 when one column is shuffled, averaged over repeats."""
    cfg = config or ExplainerConfig()
    t0 = time.perf_counter()
    rng = _rng(seed)
    X, y = train.X, train.y
    s = r2_score(y, model.predict(X))
    phi = np.zeros(train.d)
    for j in range(train.d):
        acc = 0.0
        for _ in range(cfg.permutation_repeats):
            Xp = X.copy()
            Xp[:, j] = X[rng.permutation(train.n), j]
            acc += r2_score(y, model.predict(Xp))
        phi[j] = s - acc / cfg.permutation_repeats
    return Explanation(phi, "global", "permutation", _model_id(model),
                       seconds=time.perf_counter() - t0, meta={"baseline_r2": s})


# -- LIME ----------------------------------------------------------------------


def lime_local(model, train, X, config: ExplainerConfig | None = None, seeds=None,
               point_indices=None) -> list[Explanation]:
    """Kernel-weighted linear surrogate fitted on Gaussian samples around each point."""
    cfg = config or ExplainerConfig()
    t0 = time.perf_counter()
    d = train.d
    X = _as_rows(X, d)
    r = cfg.lime_samples
    if r < d + 1:
        raise ValueError("lime_samples must be at least d + 1")
    sd = train.X.std(axis=0)
    scale = np.where(sd > 0, sd, 1.0)
    width = cfg.lime_width if cfg.lime_width is not None else 0.75 * math.sqrt(d)
    rngs = [_rng(s) for s in _seeds(seeds, X.shape[0])]
    Z = np.stack([X[i] + rngs[i].standard_normal((r, d)) * sd for i in range(X.shape[0])])
    f = model.predict(Z.reshape(-1, d)).reshape(X.shape[0], r)
    values, metas = [], []
    for i in range(X.shape[0]):
        dist = np.sqrt((((Z[i] - X[i]) / scale) ** 2).sum(axis=1))
        w = np.sqrt(np.exp(-(dist ** 2) / width ** 2))
        sw = np.sqrt(w)
        A = np.column_stack([np.ones(r), Z[i]]) * sw[:, None]
        with np.errstate(over="ignore"):  # sentinel-clamped predictions overflow the residual
            beta, _, rank, _ = scipy.linalg.lstsq(A, f[i] * sw, lapack_driver="gelsd")
        values.append(beta[1:])
        metas.append({"rank_deficient": bool(rank < d + 1), "intercept": float(beta[0])})
    return _wrap_local("lime", model, X, np.array(values), time.perf_counter() - t0,
                       point_indices, metas)


# -- ELA -----------------------------------------------------------------------


def ela_neighbors(train_X, x, k: int, mask=None) -> np.ndarray:
    """Indices of the ``k`` nearest rows (distance over ``mask`` features, ties by index)."""
    cols = slice(None) if mask is None or not np.any(mask) else np.asarray(mask, dtype=bool)
    diff = train_X[:, cols] - np.asarray(x)[cols]
    dist = np.einsum("ij,ij->i", diff, diff)
    return np.argsort(dist, kind="stable")[:k]


def ela_local(model, train, X, config: ExplainerConfig | None = None, seeds=None,
              point_indices=None, k: int | None = None) -> list[Explanation]:
    """Least-squares slopes of the model's predictions over each point's neighbourhood."""
    cfg = config or ExplainerConfig()
    t0 = time.perf_counter()
    d = train.d
    X = _as_rows(X, d)
    if k is None:
        k = cfg.ela_k if cfg.ela_k is not None else max(2 * (d + 1), 10)
    k = int(min(k, train.n))
    if k < 1:
        raise ValueError("k must be >= 1")
    fy = model.predict(train.X)
    mask = getattr(model, "feature_mask", None)
    values, metas = [], []
    for i in range(X.shape[0]):
        idx = ela_neighbors(train.X, X[i], k, mask)
        A = np.column_stack([np.ones(k), train.X[idx]])
        beta, _, rank, _ = scipy.linalg.lstsq(A, fy[idx], lapack_driver="gelsd")
        values.append(beta[1:])
        metas.append({"k": k, "degenerate": bool(k < d + 1 or rank < d + 1)})
    return _wrap_local("ela", model, X, np.array(values), time.perf_counter() - t0,
                       point_indices, metas)


# -- Morris --------------------------------------------------------------------


def morris_delta(lower, upper, levels: int = 8) -> np.ndarray:
    """Standard step ``p / (2 (p - 1))`` of the range, i.e. ``p/2`` grid levels."""
    rng_ = np.asarray(upper, dtype=float) - np.asarray(lower, dtype=float)
    return rng_ * levels / (2.0 * (levels - 1))


def morris_global(model, train, config: ExplainerConfig | None = None, seed=0) -> Explanation:
    """Mean elementary effects over one-at-a-time trajectories on a ``p``-level grid."""
    cfg = config or ExplainerConfig()
    t0 = time.perf_counter()
    d, p = train.d, cfg.morris_levels
    lo = train.X.min(axis=0)
    hi = train.X.max(axis=0)
    span = hi - lo
    delta = morris_delta(lo, hi, p)
    rng = _rng(seed)
    T = cfg.morris_trajectories
    starts = train.X[rng.integers(train.n, size=T)]
    step = np.where(span > 0, span / (p - 1), 1.0)
    level = np.clip(np.round((starts - lo) / step), 0, p - 1)
    starts = np.where(span > 0, lo + level * step, lo)
    points = np.empty((T, d + 1, d))
    orders = np.empty((T, d), dtype=np.int64)
    signs = np.empty((T, d))
    for t in range(T):
        cur = starts[t].copy()
        points[t, 0] = cur
        orders[t] = rng.permutation(d)
        for s, j in enumerate(orders[t]):
            up = cur[j] + delta[j] <= hi[j] + 1e-12 * max(1.0, abs(hi[j]))
            signs[t, s] = 1.0 if up else -1.0
            cur = cur.copy()
            cur[j] = cur[j] + signs[t, s] * delta[j]
            points[t, s + 1] = cur
    f = model.predict(points.reshape(-1, d)).reshape(T, d + 1)
    ee = np.zeros((T, d))
    for t in range(T):
        for s, j in enumerate(orders[t]):
            if delta[j] > 0:
                ee[t, j] = (f[t, s + 1] - f[t, s]) / (signs[t, s] * delta[j])
    mu = ee.mean(axis=0)
    return Explanation(mu, "global", "morris", _model_id(model), seconds=time.perf_counter() - t0,
                       meta={"mu_star": np.abs(ee).mean(axis=0).tolist(),
                             "sigma": ee.std(axis=0).tolist(), "delta": delta.tolist(),
                             "levels": p, "trajectories": T})


# -- gradients, IG and partial effects -------------------------------------------


def central_difference_gradient(model, X) -> np.ndarray:
    """Central differences with ``h_j = 1e-6 * max(1, |x_j|)``, one batch per call."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    m, d = X.shape
    h = 1e-6 * np.maximum(1.0, np.abs(X))
    eye = np.eye(d)
    plus = X[:, None, :] + eye[None] * h[:, :, None]
    minus = X[:, None, :] - eye[None] * h[:, :, None]
    f = model.predict(np.concatenate([plus, minus]).reshape(-1, d)).reshape(2, m, d)
    return (f[0] - f[1]) / (2 * h)


def model_gradient(model, X) -> tuple[np.ndarray, str]:
    grad = getattr(model, "gradient", None)
    if grad is not None:
        return grad(X), "symbolic"
    return central_difference_gradient(model, X), "central-difference"


def _baseline(train, cfg: ExplainerConfig, baseline=None) -> np.ndarray:
    b = cfg.ig_baseline if baseline is None else baseline
    if isinstance(b, str):
        if b == "mean":
            return train.X.mean(axis=0)
        if b == "zero":
            return np.zeros(train.d)
        raise ValueError(f"unknown baseline policy {b!r}")
    b = np.asarray(b, dtype=float)
    if b.shape != (train.d,):
        raise ValueError("baseline must have one entry per feature")
    return b


def trapezoid_weights(m: int) -> np.ndarray:
    w = np.full(m, 1.0 / (m - 1))
    w[0] = w[-1] = 0.5 / (m - 1)
    return w


def ig_local(model, train, X, config: ExplainerConfig | None = None, seeds=None,
             point_indices=None, steps: int | None = None, baseline=None) -> list[Explanation]:
    """Integrated gradients on the straight path from the baseline (trapezoid rule)."""
    cfg = config or ExplainerConfig()
    t0 = time.perf_counter()
    d = train.d
    X = _as_rows(X, d)
    m = cfg.ig_steps if steps is None else int(steps)
    if m < 2:
        raise ValueError("IG needs at least 2 points")
    x0 = _baseline(train, cfg, baseline)
    alphas = np.linspace(0.0, 1.0, m)
    path = x0[None, None, :] + alphas[None, :, None] * (X - x0)[:, None, :]
    G, how = model_gradient(model, path.reshape(-1, d))
    G = G.reshape(X.shape[0], m, d)
    vals = (X - x0) * np.einsum("k,ikj->ij", trapezoid_weights(m), G)
    out = _wrap_local("ig", model, X, vals, time.perf_counter() - t0, point_indices)
    for e in out:
        e.meta.update(steps=m, gradient=how)
    return out


def _require_symbolic(model):
    if getattr(model, "form", None) is None or not hasattr(model, "gradient"):
        raise UnsupportedExplainerError(
            f"partial effects need a symbolic model, got {_model_id(model)!r}")


def pe_local(model, train, X, config: ExplainerConfig | None = None, seeds=None,
             point_indices=None) -> list[Explanation]:
    _require_symbolic(model)
    t0 = time.perf_counter()
    X = _as_rows(X, train.d)
    return _wrap_local("pe", model, X, model.gradient(X), time.perf_counter() - t0,
                       point_indices)


def pe_global(model, train, config: ExplainerConfig | None = None, seed=0) -> Explanation:
    _require_symbolic(model)
    cfg = config or ExplainerConfig()
    t0 = time.perf_counter()
    rows = _global_rows(train, cfg, seed)
    return Explanation(np.abs(model.gradient(rows)).mean(axis=0), "global", "pe",
                       _model_id(model), seconds=time.perf_counter() - t0)


# -- random baseline -----------------------------------------------------------


def random_ranks(d: int, seed) -> np.ndarray:
    return _rng(seed).permutation(np.arange(1, d + 1)).astype(float)


def random_local(model, train, X, config: ExplainerConfig | None = None, seeds=None,
                 point_indices=None) -> list[Explanation]:
    t0 = time.perf_counter()
    X = _as_rows(X, train.d)
    vals = np.array([random_ranks(train.d, s) for s in _seeds(seeds, X.shape[0])])
    return _wrap_local("random", model, X, vals, time.perf_counter() - t0, point_indices)


def random_global(model, train, config: ExplainerConfig | None = None, seed=0) -> Explanation:
    return Explanation(random_ranks(train.d, seed), "global", "random", _model_id(model))


# -- registry ------------------------------------------------------------------

LOCAL_EXPLAINERS: dict[str, Callable] = {
    "lime": lime_local, "ela": ela_local, "shap": shap_local, "ig": ig_local,
    "pe": pe_local, "random": random_local,
}
GLOBAL_EXPLAINERS: dict[str, Callable] = {
    "permutation": permutation_global, "shap": shap_global, "sage": sage_global,
    "morris": morris_global, "pe": pe_global, "random": random_global,
}
MODEL_SPECIFIC = {"pe", "ela"}


def supports(explainer: str, model) -> bool:
    """Whether ``explainer`` can run on ``model``.

    PE differentiates the symbolic form. ELA restricts its neighbour search to
    the features the expression uses, so it is offered only for symbolic
    models as well; :func:`ela_local` itself still runs on any model.
    """
    if explainer in MODEL_SPECIFIC:
        return getattr(model, "form", None) is not None
    return True


def explain_local(name: str, model, train, X, config: ExplainerConfig | None = None,
                  seeds=None, point_indices=None) -> list[Explanation]:
    try:
        fn = LOCAL_EXPLAINERS[name]
    except KeyError:
        raise KeyError(f"unknown local explainer {name!r}") from None
    return fn(model, train, X, config, seeds=seeds, point_indices=point_indices)


def explain_global(name: str, model, train, config: ExplainerConfig | None = None,
                   seed=0) -> Explanation:
    try:
        fn = GLOBAL_EXPLAINERS[name]
    except KeyError:
        raise KeyError(f"unknown global explainer {name!r}") from None
    return fn(model, train, config, seed=seed)


def local_function(name: str, model, train, config: ExplainerConfig | None = None) -> Callable:
    """``g(X, seeds) -> (m, d)`` value matrix; the form the robustness metrics consume."""
    fn = LOCAL_EXPLAINERS[name]

    def g(X, seeds=None):
        return np.array([e.values for e in fn(model, train, X, config, seeds=seeds)])

    return g


__all__ = [
    "Explanation", "ExplainerConfig", "UnsupportedExplainerError",
    "permutation_global", "lime_local", "ela_local", "ela_neighbors", "shap_local",
    "shap_global", "shap_values", "sage_global", "morris_global", "morris_delta", "ig_local",
    "pe_local", "pe_global", "random_local", "random_global", "histogram_mi",
    "exact_shapley", "shapley_weights", "coalition_masks", "central_difference_gradient",
    "LOCAL_EXPLAINERS", "GLOBAL_EXPLAINERS", "supports", "explain_local", "explain_global",
    "local_function",
]
