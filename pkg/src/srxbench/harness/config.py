"""Experiment configuration: defaults, YAML loading and validation."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .. import dataset as ds
from ..explainers import GLOBAL_EXPLAINERS, LOCAL_EXPLAINERS, ExplainerConfig
from ..metrics import DEFAULT_LAMBDA, DEFAULT_NEIGHBORS
from ..regressors import DEFAULT_GRIDS, REGRESSORS

TRUTH = "truth"  # pseudo-regressor: the generating expression itself
STOCHASTIC_REPETITIONS = 30

ALL_EXPLAINERS = tuple(dict.fromkeys([*LOCAL_EXPLAINERS, *GLOBAL_EXPLAINERS]))


class ConfigError(ValueError):
    pass


def derive_seed(*parts) -> int:
    """63-bit seed from a stable hash of ``parts`` (ints and strings)."""
    blob = json.dumps([p if isinstance(p, (int, str)) else str(p) for p in parts])
    return int.from_bytes(hashlib.sha256(blob.encode()).digest()[:8], "big") >> 1


@dataclass
class ExperimentConfig:
    """Everything a pipeline run depends on.

    ``repetitions`` applies to stochastic regressors; deterministic ones run
    once. ``None`` means the full-scale default of 30.
    """

    datasets: list[str] = field(default_factory=lambda: [g.name for g in ds.registry()])
    regressors: list[str] = field(default_factory=lambda: [*REGRESSORS, TRUTH])
    grids: dict[str, dict[str, list]] = field(default_factory=dict)
    explainers: list[str] = field(default_factory=lambda: list(ALL_EXPLAINERS))
    explainer_config: dict[str, Any] = field(default_factory=dict)
    repetitions: int | None = None
    lam: float = DEFAULT_LAMBDA
    jaccard_k: int = 1
    neighbors: int = DEFAULT_NEIGHBORS
    local_points: int = 30
    master_seed: int = 0
    output_dir: str = "results"
    workers: int = 1
    tune_folds: int = 3
    manifests: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    # -- validation ---------------------------------------------------------

    def validate(self) -> None:
        known = {g.name for g in ds.registry(self.manifests)}
        for name in self.datasets:
            if name not in known:
                raise ConfigError(f"unknown dataset {name!r}")
        for name in self.regressors:
            if name not in REGRESSORS and name != TRUTH:
                raise ConfigError(f"unknown regressor {name!r}")
        for name in self.explainers:
            if name not in ALL_EXPLAINERS:
                raise ConfigError(f"unknown explainer {name!r}")
        for reg, grid in self.grids.items():
            if reg not in REGRESSORS:
                raise ConfigError(f"grid given for unknown regressor {reg!r}")
            if not isinstance(grid, dict) or any(not isinstance(v, list) or not v
                                                 for v in grid.values()):
                raise ConfigError(f"grid for {reg!r} must map names to non-empty lists")
        if self.repetitions is not None and self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.lam <= 0:
            raise ConfigError("lambda must be positive")
        if self.jaccard_k < 1 or self.neighbors < 1 or self.local_points < 1:
            raise ConfigError("jaccard_k, neighbors and local_points must be >= 1")
        if self.workers < 1 or self.tune_folds < 2:
            raise ConfigError("workers must be >= 1 and tune_folds >= 2")
        try:
            self.explainer_settings()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad explainer_config: {exc}") from None

    # -- derived ------------------------------------------------------------

    def explainer_settings(self) -> ExplainerConfig:
        return ExplainerConfig(**self.explainer_config)

    def grid_for(self, regressor: str) -> dict[str, list]:
        if regressor == TRUTH:
            return {}
        return dict(self.grids.get(regressor, DEFAULT_GRIDS[regressor].values))

    def repetitions_for(self, regressor: str) -> int:
        if regressor == TRUTH or not REGRESSORS[regressor].stochastic:
            return 1
        return STOCHASTIC_REPETITIONS if self.repetitions is None else self.repetitions

    def ground_truths(self) -> dict:
        return {name: ds.get(name, self.manifests) for name in self.datasets}

    @property
    def out(self) -> Path:
        return Path(self.output_dir)

    # -- persistence --------------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc or {})
        if "lambda" in doc:
            doc["lam"] = doc.pop("lambda")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return cls(**doc)

    @classmethod
    def from_yaml(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            doc = yaml.safe_load(fh)
        if doc is not None and not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls.from_dict(doc or {})

    def to_yaml(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))

    def with_overrides(self, **kw) -> "ExperimentConfig":
        """Copy with the non-``None`` keyword values replaced."""
        doc = self.to_dict()
        doc.update({k: v for k, v in kw.items() if v is not None})
        return type(self)(**doc)
