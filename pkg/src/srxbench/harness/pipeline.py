"""The five pipeline stages: generate, tune, run, aggregate and report."""

from __future__ import annotations

import json
import logging
import time
import traceback
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import dataset as ds
from ..explainers import (GLOBAL_EXPLAINERS, LOCAL_EXPLAINERS, explain_global, explain_local,
                          local_function, supports)
from ..expr import is_hit, to_prefix
from ..metrics import (cosine_quality, mae, mean_quality, neighborhood, nmse_pred, nmse_quality,
                       r2, robustness, truth_model)
from ..regressors import REGRESSORS, HyperGrid, grid_search
from .config import TRUTH, ExperimentConfig, derive_seed
from .records import ExplainerResult, FailureRecord, RecordWriter, RunRecord

log = logging.getLogger(__name__)


# -- generate --------------------------------------------------------------------


def data_paths(cfg: ExperimentConfig, name: str) -> tuple[Path, Path]:
    base = cfg.out / "data"
    return base / f"{name}.train.csv", base / f"{name}.test.csv"


def dataset_seed(cfg: ExperimentConfig, name: str) -> int:
    return derive_seed(cfg.master_seed, name, "data")


def cmd_generate(cfg: ExperimentConfig) -> dict[str, tuple[Path, Path]]:
    """Write train/test CSVs for every configured dataset."""
    written = {}
    for name, gt in cfg.ground_truths().items():
        train, test = ds.generate(gt, dataset_seed(cfg, name))
        p_train, p_test = data_paths(cfg, name)
        p_train.parent.mkdir(parents=True, exist_ok=True)
        train.to_csv(p_train)
        test.to_csv(p_test)
        log.info("generated %s: %d train / %d test rows", name, train.n, test.n)
        written[name] = (p_train, p_test)
    return written


def load_data(cfg: ExperimentConfig, gt) -> tuple[ds.Dataset, ds.Dataset]:
    p_train, p_test = data_paths(cfg, gt.name)
    if not (p_train.exists() and p_test.exists()):
        raise FileNotFoundError(f"no data for {gt.name!r} under {p_train.parent}; "
                                "run the generate stage first")
    return (ds.Dataset.from_csv(p_train, gt.space, gt.name),
            ds.Dataset.from_csv(p_test, gt.space, gt.name))


# -- tune --------------------------------------------------------------------------


def _tuning_path(cfg: ExperimentConfig) -> Path:
    return cfg.out / "tuning" / "best.json"


def tune_one(cfg: ExperimentConfig, name: str, regressor: str, train) -> dict:
    """Best hyper-parameters for one (dataset, regressor) pair plus its CV table.

    A grid with a single configuration is returned without cross-validation.
    """
    grid = HyperGrid(cfg.grid_for(regressor))
    if len(grid) == 1:
        return {"best": next(iter(grid)), "cv_r2": None, "table": []}
    seed = derive_seed(cfg.master_seed, name, regressor, "tune")
    res = grid_search(REGRESSORS[regressor].trainer, grid, train, seed, folds=cfg.tune_folds)
    return {"best": res.best, "cv_r2": res.table[res.best_index]["mean_r2"],
            "table": res.table}


def cmd_tune(cfg: ExperimentConfig) -> dict:
    """Grid-search every (dataset, regressor) pair once and persist the results."""
    import pandas as pd

    path = _tuning_path(cfg)
    path.parent.mkdir(parents=True, exist_ok=True)
    best = load_tuning(cfg) if path.exists() else {}
    for name, gt in cfg.ground_truths().items():
        train, _ = load_data(cfg, gt)
        for reg in cfg.regressors:
            if reg == TRUTH:
                continue
            out = tune_one(cfg, name, reg, train)
            best.setdefault(name, {})[reg] = {"hyper": out["best"], "cv_r2": out["cv_r2"],
                                              "grid": cfg.grid_for(reg)}
            rows = [{**r["params"], "mean_r2": r["mean_r2"],
                     **{f"fold{i}": s for i, s in enumerate(r["fold_r2"])}}
                    for r in out["table"]]
            pd.DataFrame(rows).to_csv(path.parent / f"{name}__{reg}.csv", index=False)
            log.info("tuned %s on %s: %s", reg, name, out["best"])
    path.write_text(json.dumps(best, indent=2, sort_keys=True))
    return best


def load_tuning(cfg: ExperimentConfig) -> dict:
    return json.loads(_tuning_path(cfg).read_text())


def _hyper_for(cfg: ExperimentConfig, tuning: dict, name: str, reg: str) -> dict | None:
    """Tuned parameters, or ``None`` when the stored grid no longer matches."""
    if reg == TRUTH:
        return {}
    entry = tuning.get(name, {}).get(reg)
    if entry is None or entry.get("grid") != json.loads(json.dumps(cfg.grid_for(reg))):
        return None
    return entry["hyper"]


# -- run ------------------------------------------------------------------------------


@dataclass(frozen=True)
class Cell:
    dataset: str
    regressor: str
    repetition: int
    hyper: dict

    @property
    def key(self) -> str:
        return f"{self.dataset}/{self.regressor}/{self.repetition}"


def cells(cfg: ExperimentConfig, tuning: dict) -> list[Cell]:
    out = []
    for name in cfg.datasets:
        for reg in cfg.regressors:
            hyper = _hyper_for(cfg, tuning, name, reg)
            for rep in range(cfg.repetitions_for(reg)):
                out.append(Cell(name, reg, rep, hyper))
    return out


def cell_seed(cfg: ExperimentConfig, dataset: str, regressor: str, repetition: int) -> int:
    return derive_seed(cfg.master_seed, dataset, regressor, repetition)


def fit_model(regressor: str, train, seed: int, hyper: dict, gt):
    if regressor == TRUTH:
        return truth_model(gt)
    return REGRESSORS[regressor].trainer(train, seed=seed, **hyper)


def local_points(cfg: ExperimentConfig, name: str, test) -> np.ndarray:
    """Test rows explained locally; shared by every regressor on the dataset."""
    m = min(cfg.local_points, test.n)
    rng = np.random.default_rng(derive_seed(cfg.master_seed, name, "points"))
    return np.sort(rng.choice(test.n, size=m, replace=False))


def _accuracy(model, test) -> dict:
    yhat = model.predict(test.X)
    n, r = nmse_pred(yhat, test.y), r2(yhat, test.y)
    return {"mae": mae(yhat, test.y), "nmse": n.value, "nmse_degenerate": n.degenerate,
            "r2": r.value, "r2_degenerate": r.degenerate}


def _skip(name: str, scope: str, regressor: str) -> ExplainerResult:
    return ExplainerResult(name, scope, status="skipped",
                           reason=f"{name} needs a symbolic model and {regressor} has none")


def truth_seed(cfg: ExperimentConfig, name: str, explainer: str, scope: str) -> int:
    """Seed of the reference explanation; one per dataset, shared by all cells."""
    return derive_seed(cfg.master_seed, name, TRUTH, explainer, scope)


def _global(cfg, name, model, gt, train, seed, tseed) -> ExplainerResult:
    ecfg = cfg.explainer_settings()
    e = explain_global(name, model, train, ecfg, seed=seed)
    t = explain_global(name, truth_model(gt), train, ecfg, seed=tseed)
    cos, nm = cosine_quality(t.values, e.values), nmse_quality(t.values, e.values)
    return ExplainerResult(name, "global", values=e.values.tolist(), truth=t.values.tolist(),
                           quality={"cosine": cos.value, "cosine_degenerate": int(cos.degenerate),
                                    "nmse": nm.value, "nmse_degenerate": int(nm.degenerate)},
                           seconds=e.seconds)


def _local(cfg, name, model, gt, train, test, points, seed, tseed) -> ExplainerResult:
    ecfg = cfg.explainer_settings()
    X = test.X[points]
    t0 = time.perf_counter()
    expl = explain_local(name, model, train, X, ecfg, seeds=seed, point_indices=points)
    seconds = time.perf_counter() - t0
    truth = explain_local(name, truth_model(gt), train, X, ecfg, seeds=tseed,
                          point_indices=points)
    g = local_function(name, model, train, ecfg)
    rob = {"stability": [], "infidelity": [], "jaccard": []}
    for x, idx in zip(X, points):
        nb = neighborhood(x, train.X, lam=cfg.lam, m=cfg.neighbors,
                          seed=derive_seed(cfg.master_seed, gt.name, "neighborhood", int(idx)))
        rs = derive_seed(seed, "robustness", int(idx))
        scores = robustness(model, lambda Z, rs=rs: g(Z, seeds=rs), x, nb, k=cfg.jaccard_k)
        for k, v in scores.items():
            rob[k].append(v)
    summary = {k: float(np.mean(v)) for k, v in rob.items()}
    summary.update({f"{k}_points": v for k, v in rob.items()})
    return ExplainerResult(name, "local", values=[e.values.tolist() for e in expl],
                           truth=[e.values.tolist() for e in truth],
                           quality=mean_quality(truth, expl), robustness=summary,
                           seconds=seconds)


def run_cell(cfg: ExperimentConfig, cell: Cell, gt=None, train=None, test=None) -> RunRecord:
    """Fit, score and explain one (dataset, regressor, repetition) cell."""
    gt = gt if gt is not None else ds.get(cell.dataset, cfg.manifests)
    if train is None or test is None:
        train, test = load_data(cfg, gt)
    if cell.hyper is None:
        raise RuntimeError(f"{cell.dataset}/{cell.regressor} has not been tuned")
    seed = cell_seed(cfg, cell.dataset, cell.regressor, cell.repetition)
    t0 = time.perf_counter()
    model = fit_model(cell.regressor, train, derive_seed(seed, "fit"), cell.hyper, gt)
    fit_seconds = time.perf_counter() - t0

    rec = RunRecord(cell.dataset, cell.regressor, cell.repetition, seed, dict(cell.hyper),
                    _accuracy(model, test), fit_seconds=fit_seconds)
    if model.is_symbolic:
        rec.size = int(model.size())
        rec.expression = to_prefix(model.form)
        rec.hit = bool(is_hit(model.form, gt.tree, gt.space))
    points = local_points(cfg, cell.dataset, test)
    rec.points = points.tolist()

    for name in cfg.explainers:
        for scope, registry in (("local", LOCAL_EXPLAINERS), ("global", GLOBAL_EXPLAINERS)):
            if name not in registry:
                continue
            if not supports(name, model):
                rec.explanations.append(_skip(name, scope, cell.regressor))
                continue
            tseed = truth_seed(cfg, cell.dataset, name, scope)
            eseed = tseed if cell.regressor == TRUTH else derive_seed(seed, name, scope)
            if scope == "global":
                rec.explanations.append(_global(cfg, name, model, gt, train, eseed, tseed))
            else:
                rec.explanations.append(
                    _local(cfg, name, model, gt, train, test, points, eseed, tseed))
    return rec


def _failure(cfg, cell: Cell, exc: BaseException) -> FailureRecord:
    return FailureRecord(cell.dataset, cell.regressor, cell.repetition,
                         cell_seed(cfg, cell.dataset, cell.regressor, cell.repetition),
                         type(exc).__name__, str(exc), traceback.format_exc())


def _guarded(cfg, cell: Cell, cache: dict | None = None):
    try:
        if cache is not None and cell.dataset not in cache:
            gt = ds.get(cell.dataset, cfg.manifests)
            cache[cell.dataset] = (gt, *load_data(cfg, gt))
        gt, train, test = cache[cell.dataset] if cache is not None else (None, None, None)
        return run_cell(cfg, cell, gt, train, test)
    except Exception as exc:  # noqa: BLE001 - isolation is the point
        log.warning("cell %s failed: %s: %s", cell.key, type(exc).__name__, exc)
        return _failure(cfg, cell, exc)


def _worker(cfg_doc: dict, cell: Cell):
    return _guarded(ExperimentConfig.from_dict(cfg_doc), cell)


@dataclass
class RunSummary:
    records: int
    failures: int
    directory: Path

    @property
    def ok(self) -> bool:
        return self.failures == 0


def _prepare(cfg: ExperimentConfig) -> dict:
    missing = [n for n in cfg.datasets if not all(p.exists() for p in data_paths(cfg, n))]
    if missing:
        log.info("generating missing datasets: %s", missing)
        cmd_generate(cfg.with_overrides(datasets=missing))
    tuning = load_tuning(cfg) if _tuning_path(cfg).exists() else {}
    stale = [n for n in cfg.datasets
             if any(_hyper_for(cfg, tuning, n, r) is None for r in cfg.regressors)]
    if stale:
        log.info("tuning datasets without matching results: %s", stale)
        regs = [r for r in cfg.regressors if r != TRUTH] or None
        if regs:
            cmd_tune(cfg.with_overrides(datasets=stale, regressors=regs))
        tuning = load_tuning(cfg)
    return tuning


def cmd_run(cfg: ExperimentConfig) -> RunSummary:
    """Run every cell, appending records as they complete.

    Data and tuning results that are missing (or tuned on a different grid)
    are produced first. Failing cells become failure records.
    """
    tuning = _prepare(cfg)
    todo = cells(cfg, tuning)
    writer = RecordWriter(cfg.out)
    n_ok = n_fail = 0
    if cfg.workers == 1:
        cache: dict = {}
        for cell in todo:
            item = _guarded(cfg, cell, cache)
            writer.write(item)
            n_fail += isinstance(item, FailureRecord)
            n_ok += not isinstance(item, FailureRecord)
    else:
        doc = cfg.to_dict()
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = {pool.submit(_worker, doc, c): c for c in todo}
            for fut in as_completed(futures):
                try:
                    item = fut.result()
                except Exception as exc:  # a worker process died
                    item = _failure(cfg, futures[fut], exc)
                writer.write(item)
                n_fail += isinstance(item, FailureRecord)
                n_ok += not isinstance(item, FailureRecord)
        writer.sort({c.key: i for i, c in enumerate(todo)})
    return RunSummary(n_ok, n_fail, cfg.out)
