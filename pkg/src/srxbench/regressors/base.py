"""Fitted-model containers shared by every trainer."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..expr import (Node, compile_tree, differentiate, from_prefix, size,
                    to_prefix, variables)
from ..expr.kernels import run_program

SENTINEL = 1e12


def clamp(yhat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Replace non-finite predictions by +/-SENTINEL; return ``(values, flags)``."""
    bad = ~np.isfinite(yhat)
    if bad.any():
        yhat = np.where(np.isnan(yhat), SENTINEL, yhat)
        yhat = np.clip(yhat, -SENTINEL, SENTINEL)
    return yhat, bad


@dataclass(eq=False)
class FittedModel:
    """Base class; subclasses implement :meth:`_predict` and serialisation."""

    kind: str
    hyper: dict = field(default_factory=dict)
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    form: Node | None = None
    feature_mask: np.ndarray | None = None

    def _predict(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict_flagged(self, X) -> tuple[np.ndarray, np.ndarray]:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        return clamp(self._predict(X))

    def predict(self, X) -> np.ndarray:
        return self.predict_flagged(X)[0]

    __call__ = predict

    @property
    def is_symbolic(self) -> bool:
        return self.form is not None

    def size(self) -> int | None:
        return size(self.form) if self.form is not None else None

    # -- serialisation -------------------------------------------------------

    def _payload(self) -> dict:
        return {}

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "kind": self.kind,
            "class": type(self).__name__,
            "hyper": _jsonable(self.hyper),
            "seed": self.seed,
            "meta": _jsonable(self.meta),
            "form": to_prefix(self.form) if self.form is not None else None,
            "feature_mask": None if self.feature_mask is None
            else [bool(v) for v in self.feature_mask],
        }
        out.update(self._payload())
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @staticmethod
    def from_dict(doc: dict) -> "FittedModel":
        cls = _CLASSES[doc["class"]]
        return cls._from_dict(doc)

    @staticmethod
    def from_json(text: str) -> "FittedModel":
        return FittedModel.from_dict(json.loads(text))

    @classmethod
    def _common(cls, doc: dict) -> dict:
        mask = doc.get("feature_mask")
        return dict(kind=doc["kind"], hyper=doc.get("hyper", {}), seed=doc.get("seed"),
                    meta=doc.get("meta", {}),
                    form=from_prefix(doc["form"]) if doc.get("form") else None,
                    feature_mask=None if mask is None else np.asarray(mask, dtype=bool))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


@dataclass(eq=False)
class SymbolicModel(FittedModel):
    """Model whose predictions are the evaluation of ``form``."""

    n_features: int = 0
    _grad_progs: list | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.form is None:
            raise ValueError("a symbolic model needs a form")
        if self.feature_mask is None:
            mask = np.zeros(self.n_features, dtype=bool)
            mask[list(variables(self.form))] = True
            self.feature_mask = mask

    def _predict(self, X):
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return run_program(compile_tree(self.form), X)

    def gradient_trees(self) -> list[Node]:
        return [differentiate(self.form, j) for j in range(self.n_features)]

    def gradient(self, X) -> np.ndarray:
        """Symbolic partial derivatives at each row of ``X`` (``n x d``)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self._grad_progs is None:
            self._grad_progs = [compile_tree(t) for t in self.gradient_trees()]
        return np.column_stack([run_program(p, X) for p in self._grad_progs])

    def _payload(self):
        return {"n_features": self.n_features}

    @classmethod
    def _from_dict(cls, doc):
        return cls(n_features=doc["n_features"], **cls._common(doc))


_CLASSES: dict[str, type] = {"SymbolicModel": SymbolicModel}


def register_model_class(cls):
    _CLASSES[cls.__name__] = cls
    return cls
