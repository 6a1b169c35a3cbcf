"""CART regression trees (best-first growth) and bagged forests.

Trees are stored as flat arrays: ``feature[i] == -1`` marks a leaf, otherwise
rows with ``x[feature] <= threshold`` go to ``left[i]``.
"""

from __future__ import annotations

import math
import time
import types
from dataclasses import dataclass, field

import numpy as np

from .._accel import USE_NUMBA, njit
from .base import FittedModel, register_model_class

# split gains below this fraction of the node's SSE are treated as zero
_REL_GAIN_TOL = 1e-12


@njit
def _split_nb(X, y, rows, lo, hi, feats):
    n = hi - lo
    total = 0.0
    for t in range(lo, hi):
        total += y[rows[t]]
    base = total * total / n
    best_gain = 0.0
    best_f = -1
    best_thr = 0.0
    xs = np.empty(n)
    ys = np.empty(n)
    for f in feats:
        for t in range(n):
            xs[t] = X[rows[lo + t], f]
        order = np.argsort(xs, kind="mergesort")
        xsorted = xs[order]
        for t in range(n):
            ys[t] = y[rows[lo + order[t]]]
        cs = 0.0
        for t in range(n - 1):
            cs += ys[t]
            if xsorted[t + 1] <= xsorted[t]:
                continue
            nl = t + 1.0
            score = cs * cs / nl + (total - cs) * (total - cs) / (n - nl)
            gain = score - base
            if gain > best_gain:
                best_gain = gain
                best_f = f
                thr = 0.5 * (xsorted[t] + xsorted[t + 1])
                if thr >= xsorted[t + 1]:
                    thr = xsorted[t]
                best_thr = thr
    return best_f, best_thr, best_gain


def _split_np(X, y, rows, lo, hi, feats):
    idx = rows[lo:hi]
    n = hi - lo
    yy = y[idx]
    total = _seqsum(yy)
    base = total * total / n
    best_gain, best_f, best_thr = 0.0, -1, 0.0
    nl = np.arange(1, n, dtype=np.float64)
    for f in feats:
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xsorted = xs[order]
        cs = np.cumsum(yy[order])[:-1]
        score = cs * cs / nl + (total - cs) * (total - cs) / (n - nl)
        gain = score - base
        gain[xsorted[1:] <= xsorted[:-1]] = -np.inf
        if gain.size == 0:
            continue
        t = int(np.argmax(gain))
        if gain[t] > best_gain:
            best_gain, best_f = float(gain[t]), int(f)
            thr = 0.5 * (xsorted[t] + xsorted[t + 1])
            best_thr = float(thr if thr < xsorted[t + 1] else xsorted[t])
    return best_f, best_thr, best_gain


def _seqsum(v):
    # left-to-right summation, matching the loop kernel
    return float(np.cumsum(v)[-1])


# The growth loop is written once. The numba build resolves ``_split`` and
# ``_evaluate_node`` to the jitted kernels; the numpy twin is the same code
# object re-bound to the vectorised split search.

def _evaluate_node(X, y, rows, node, lo_arr, hi_arr, depth, value, cand_f, cand_thr,
                   cand_gain, max_depth, min_split, mtry, R, all_feats):
    lo = lo_arr[node]
    hi = hi_arr[node]
    n = hi - lo
    s = 0.0
    for t in range(lo, hi):
        s += y[rows[t]]
    mean = s / n
    value[node] = mean
    sse = 0.0
    for t in range(lo, hi):
        r = y[rows[t]] - mean
        sse += r * r
    cand_f[node] = -1
    if depth[node] >= max_depth or n < min_split or sse <= 0.0:
        return
    if mtry >= all_feats.shape[0]:
        feats = all_feats
    else:
        feats = np.argsort(R[node], kind="mergesort")[:mtry]
    f, thr, gain = _split(X, y, rows, lo, hi, feats)
    if f >= 0 and gain > _REL_GAIN_TOL * sse:
        cand_f[node] = f
        cand_thr[node] = thr
        cand_gain[node] = gain


def _grow(X, y, rows, max_depth, max_leaves, min_split, mtry, R):
    n_rows = rows.shape[0]
    d = X.shape[1]
    cap = 2 * n_rows + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    depth = np.zeros(cap, dtype=np.int64)
    lo_arr = np.zeros(cap, dtype=np.int64)
    hi_arr = np.zeros(cap, dtype=np.int64)
    cand_f = np.full(cap, -1, dtype=np.int64)
    cand_thr = np.zeros(cap)
    cand_gain = np.zeros(cap)
    rows = rows.copy()
    all_feats = np.arange(d)

    lo_arr[0] = 0
    hi_arr[0] = n_rows
    n_nodes = 1
    _evaluate_node(X, y, rows, 0, lo_arr, hi_arr, depth, value, cand_f, cand_thr,
                   cand_gain, max_depth, min_split, mtry, R, all_feats)
    n_leaves = 1
    unlimited = max_leaves >= n_rows
    cursor = 0
    while n_leaves < max_leaves:
        pick = -1
        if unlimited:
            while cursor < n_nodes:
                if cand_f[cursor] >= 0:
                    pick = cursor
                    cursor += 1
                    break
                cursor += 1
        else:
            best = 0.0
            for i in range(n_nodes):
                if cand_f[i] >= 0 and cand_gain[i] > best:
                    best = cand_gain[i]
                    pick = i
        if pick < 0:
            break
        f = cand_f[pick]
        thr = cand_thr[pick]
        lo = lo_arr[pick]
        hi = hi_arr[pick]
        # stable partition of rows[lo:hi]
        buf = rows[lo:hi].copy()
        k = lo
        for t in range(hi - lo):
            if X[buf[t], f] <= thr:
                rows[k] = buf[t]
                k += 1
        mid = k
        for t in range(hi - lo):
            if X[buf[t], f] > thr:
                rows[k] = buf[t]
                k += 1
        feature[pick] = f
        threshold[pick] = thr
        cand_f[pick] = -1
        for side in range(2):
            c = n_nodes
            n_nodes += 1
            lo_arr[c] = lo if side == 0 else mid
            hi_arr[c] = mid if side == 0 else hi
            depth[c] = depth[pick] + 1
            if side == 0:
                left[pick] = c
            else:
                right[pick] = c
            _evaluate_node(X, y, rows, c, lo_arr, hi_arr, depth, value, cand_f, cand_thr,
                           cand_gain, max_depth, min_split, mtry, R, all_feats)
        n_leaves += 1
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), depth[:n_nodes].copy())


def _rebind(fn, **names):
    env = dict(fn.__globals__)
    env.update(names)
    return types.FunctionType(fn.__code__, env, fn.__name__)


_evaluate_np = _rebind(_evaluate_node, _split=_split_np)
_grow_np = _rebind(_grow, _evaluate_node=_evaluate_np)
_split = _split_nb
_evaluate_node = njit(_evaluate_node)
_grow_nb = njit(_grow)


@njit
def tree_predict_nb(feature, threshold, left, right, value, X):
    m = X.shape[0]
    out = np.empty(m)
    for i in range(m):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


def tree_predict_np(feature, threshold, left, right, value, X):
    node = np.zeros(X.shape[0], dtype=np.int64)
    active = feature[node] >= 0
    while active.any():
        idx = np.nonzero(active)[0]
        nd = node[idx]
        go_left = X[idx, feature[nd]] <= threshold[nd]
        node[idx] = np.where(go_left, left[nd], right[nd])
        active = feature[node] >= 0
    return value[node]


@dataclass
class TreeArrays:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    depth: np.ndarray

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def predict(self, X, backend: str | None = None) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        use_nb = USE_NUMBA if backend is None else backend == "numba"
        fn = tree_predict_nb if use_nb else tree_predict_np
        return fn(self.feature, self.threshold, self.left, self.right, self.value, X)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in
                ("feature", "threshold", "left", "right", "value", "depth")}

    @classmethod
    def from_dict(cls, doc) -> "TreeArrays":
        ints = {"feature", "left", "right", "depth"}
        return cls(**{k: np.asarray(v, dtype=np.int64 if k in ints else np.float64)
                      for k, v in doc.items()})


def grow_tree(X, y, rows=None, max_depth=None, max_leaf_nodes=None, min_split: int = 2,
              mtry: int | None = None, R=None, backend: str | None = None) -> TreeArrays:
    """Grow one tree over ``X[rows]``.

    ``mtry`` features are tried per split (all when ``None``); node ``i`` picks
    the ``mtry`` smallest entries of ``R[i]``, so feature subsetting is fixed
    by ``R`` and identical across backends.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, d = X.shape
    rows = np.arange(n, dtype=np.int64) if rows is None else np.asarray(rows, dtype=np.int64)
    max_depth = np.iinfo(np.int64).max if max_depth is None else int(max_depth)
    max_leaves = rows.size if max_leaf_nodes is None else int(max_leaf_nodes)
    if max_leaves < 1:
        raise ValueError("max_leaf_nodes must be >= 1")
    mtry = d if mtry is None else int(mtry)
    if R is None:
        R = np.zeros((1, d))
    use_nb = USE_NUMBA if backend is None else backend == "numba"
    grow = _grow_nb if use_nb else _grow_np
    out = grow(X, y, rows, max_depth, max_leaves, int(max(min_split, 2)), mtry,
               np.ascontiguousarray(R, dtype=np.float64))
    return TreeArrays(*out)


@register_model_class
@dataclass(eq=False)
class TreeModel(FittedModel):
    tree: TreeArrays = field(default=None, repr=False)

    def _predict(self, X):
        return self.tree.predict(X)

    def _payload(self):
        return {"tree": self.tree.to_dict()}

    @classmethod
    def _from_dict(cls, doc):
        return cls(tree=TreeArrays.from_dict(doc["tree"]), **cls._common(doc))


@register_model_class
@dataclass(eq=False)
class ForestModel(FittedModel):
    trees: list = field(default_factory=list, repr=False)

    def member_predictions(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return np.stack([t.predict(X) for t in self.trees])

    def _predict(self, X):
        acc = np.zeros(X.shape[0])
        for t in self.trees:
            acc += t.predict(X)
        return acc / len(self.trees)

    def _payload(self):
        return {"trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def _from_dict(cls, doc):
        return cls(trees=[TreeArrays.from_dict(t) for t in doc["trees"]], **cls._common(doc))


def fit_tree(train, max_depth: int | None = None, max_leaf_nodes: int | None = None,
             seed=None) -> TreeModel:
    t0 = time.perf_counter()
    tree = grow_tree(train.X, train.y, max_depth=max_depth, max_leaf_nodes=max_leaf_nodes)
    return TreeModel(kind="tree", hyper={"max_depth": max_depth, "max_leaf_nodes": max_leaf_nodes},
                     seed=seed, tree=tree,
                     meta={"n_leaves": tree.n_leaves, "depth": tree.max_depth,
                           "fit_seconds": time.perf_counter() - t0})


def min_split_count(min_samples_split, n: int) -> int:
    """Integer threshold; floats in (0, 1] are fractions of ``n``."""
    if isinstance(min_samples_split, float) and min_samples_split <= 1.0:
        return max(2, math.ceil(min_samples_split * n))
    return max(2, int(min_samples_split))


def fit_forest(train, n_estimators: int = 100, min_samples_split=2, seed=0,
               bootstrap: bool = True, max_features: int | str = "third") -> ForestModel:
    """Bagged CART ensemble; ``max_features="third"`` tries ceil(d/3) features per split."""
    if n_estimators < 1:
        raise ValueError("n_estimators must be >= 1")
    t0 = time.perf_counter()
    n, d = train.X.shape
    mtry = math.ceil(d / 3) if max_features == "third" else int(max_features)
    mtry = min(max(mtry, 1), d)
    min_split = min_split_count(min_samples_split, n)
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_estimators):
        rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        R = rng.random((2 * n + 1, d)) if mtry < d else None
        trees.append(grow_tree(train.X, train.y, rows=rows, min_split=min_split, mtry=mtry, R=R))
    return ForestModel(kind="forest",
                       hyper={"n_estimators": n_estimators, "min_samples_split": min_samples_split,
                              "bootstrap": bootstrap, "max_features": max_features},
                       seed=seed, trees=trees,
                       meta={"mtry": mtry, "min_split_count": min_split,
                             "fit_seconds": time.perf_counter() - t0})
