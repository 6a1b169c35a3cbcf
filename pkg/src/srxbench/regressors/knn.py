"""k-nearest-neighbour regression (Euclidean, ties broken by row index)."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .._accel import USE_NUMBA, njit
from .base import FittedModel, register_model_class


@njit
def knn_predict_nb(Xtr, ytr, Xq, k):
    n, d = Xtr.shape
    m = Xq.shape[0]
    out = np.empty(m)
    dist = np.empty(n)
    for q in range(m):
        for i in range(n):
            s = 0.0
            for j in range(d):
                t = Xtr[i, j] - Xq[q, j]
                s += t * t
            dist[i] = s
        order = np.argsort(dist, kind="mergesort")
        acc = 0.0
        for t in range(k):
            acc += ytr[order[t]]
        out[q] = acc / k
    return out


def knn_predict_np(Xtr, ytr, Xq, k, chunk: int = 256):
    n, d = Xtr.shape
    out = np.empty(Xq.shape[0])
    for s in range(0, Xq.shape[0], chunk):
        Q = Xq[s:s + chunk]
        D = np.zeros((Q.shape[0], n))
        for j in range(d):  # same accumulation order as the loop kernel
            D += (Xtr[None, :, j] - Q[:, j, None]) ** 2
        idx = np.argsort(D, axis=1, kind="stable")[:, :k]
        acc = np.zeros(Q.shape[0])
        for t in range(k):
            acc += ytr[idx[:, t]]
        out[s:s + chunk] = acc / k
    return out


def knn_predict(Xtr, ytr, Xq, k: int, backend: str | None = None) -> np.ndarray:
    Xtr = np.ascontiguousarray(Xtr, dtype=np.float64)
    ytr = np.ascontiguousarray(ytr, dtype=np.float64)
    Xq = np.ascontiguousarray(Xq, dtype=np.float64)
    if Xq.shape[0] == 0:
        return np.empty(0)
    use_nb = USE_NUMBA if backend is None else backend == "numba"
    if use_nb:
        return knn_predict_nb(Xtr, ytr, Xq, int(k))
    return knn_predict_np(Xtr, ytr, Xq, int(k))


@register_model_class
@dataclass(eq=False)
class KNNModel(FittedModel):
    X: np.ndarray = field(default=None, repr=False)
    y: np.ndarray = field(default=None, repr=False)
    k: int = 5

    def _predict(self, X):
        return knn_predict(self.X, self.y, X, self.k)

    def _payload(self):
        return {"k": self.k, "X": self.X.tolist(), "y": self.y.tolist()}

    @classmethod
    def _from_dict(cls, doc):
        return cls(X=np.asarray(doc["X"], dtype=float), y=np.asarray(doc["y"], dtype=float),
                   k=int(doc["k"]), **cls._common(doc))


def fit_knn(train, k: int = 5, seed=None) -> KNNModel:
    if not 1 <= k <= train.n:
        raise ValueError(f"k must lie in [1, {train.n}], got {k}")
    t0 = time.perf_counter()
    return KNNModel(kind="knn", hyper={"k": int(k)}, seed=seed,
                    X=train.X.copy(), y=train.y.copy(), k=int(k),
                    meta={"fit_seconds": time.perf_counter() - t0})
