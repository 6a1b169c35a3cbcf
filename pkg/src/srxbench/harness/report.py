"""Aggregation of run records into heatmap, accuracy, rank and timing tables."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from ..explainers import GLOBAL_EXPLAINERS, LOCAL_EXPLAINERS
from ..stats import average_ranks, median_iqr
from .config import TRUTH
from .records import RunRecord, read_records

LOCAL_MEASURES = {"stability": "lower", "infidelity": "lower", "jaccard": "higher",
                  "cosine": "higher", "nmse": "lower"}
GLOBAL_MEASURES = {"cosine": "higher", "nmse": "lower"}
ACCURACY_MEASURES = {"mae": "lower", "nmse": "lower", "r2": "higher"}
MISSING = "n/a"
SUMMARY_DIR = "summary"


class EmptyRecordsError(ValueError):
    """Raised when there is nothing to aggregate or report."""


def measures_for(scope: str) -> dict[str, str]:
    return LOCAL_MEASURES if scope == "local" else GLOBAL_MEASURES


def record_measure(rec: RunRecord, explainer: str, scope: str, measure: str) -> float | None:
    res = rec.result(explainer, scope)
    if res is None or res.status != "ok":
        return None
    for source in (res.quality, res.robustness):
        if measure in source:
            return float(source[measure])
    return None


def _cell(summary) -> dict:
    return {"median": summary.median, "iqr": summary.iqr, "n": summary.n, "text": str(summary)}


def _best(values: dict[str, float], direction: str) -> set[str]:
    if not values:
        return set()
    target = (min if direction == "lower" else max)(values.values())
    return {k for k, v in values.items() if v == target}


@dataclass
class Summary:
    regressors: list[str]
    explainers: dict[str, list[str]]  # scope -> explainer names
    cells: list[dict] = field(default_factory=list)  # heatmap cells, long form
    accuracy: list[dict] = field(default_factory=list)
    hits: list[dict] = field(default_factory=list)
    ranks: dict = field(default_factory=dict)
    timing: list[dict] = field(default_factory=list)

    def heatmap(self, scope: str, measure: str, with_best: bool = True) -> pd.DataFrame:
        """Regressor-by-explainer text table; missing pairs hold the dash."""
        names = self.explainers[scope]
        table = pd.DataFrame(MISSING, index=self.regressors, columns=names)
        best = pd.DataFrame(False, index=self.regressors, columns=[f"{e}_best" for e in names])
        for c in self.cells:
            if c["scope"] == scope and c["measure"] == measure:
                table.loc[c["regressor"], c["explainer"]] = c["text"]
                best.loc[c["regressor"], f"{c['explainer']}_best"] = c["best"]
        table.index.name = "regressor"
        return pd.concat([table, best], axis=1) if with_best else table

    def timing_table(self, scope: str) -> pd.DataFrame:
        names = self.explainers[scope]
        table = pd.DataFrame(MISSING, index=self.regressors, columns=names)
        for t in self.timing:
            if t["scope"] == scope:
                table.loc[t["regressor"], t["explainer"]] = t["text"]
        table.index.name = "regressor"
        return table

    def accuracy_table(self) -> pd.DataFrame:
        table = pd.DataFrame(MISSING, index=self.regressors, columns=list(ACCURACY_MEASURES))
        for a in self.accuracy:
            table.loc[a["regressor"], a["measure"]] = a["text"]
        table.index.name = "regressor"
        return table

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Summary":
        return cls(**json.loads(text))


def summarize(records: list[RunRecord], regressors=None, explainers=None) -> Summary:
    """Median and IQR of every measure over records, grouped as the tables need."""
    if not records:
        raise EmptyRecordsError("no run records to aggregate")
    regressors = list(regressors or dict.fromkeys(r.regressor for r in records))
    seen = list(dict.fromkeys(e.explainer for r in records for e in r.explanations))
    chosen = list(explainers or seen)
    scoped = {"local": [e for e in chosen if e in LOCAL_EXPLAINERS],
              "global": [e for e in chosen if e in GLOBAL_EXPLAINERS]}
    out = Summary(regressors, scoped)

    for scope, names in scoped.items():
        for measure, direction in measures_for(scope).items():
            for reg in regressors:
                row = {}
                for name in names:
                    vals = [record_measure(r, name, scope, measure)
                            for r in records if r.regressor == reg]
                    vals = [v for v in vals if v is not None]
                    if vals:
                        row[name] = median_iqr(vals, f"{reg}/{name}")
                winners = _best({k: s.median for k, s in row.items()}, direction)
                for name, s in row.items():
                    out.cells.append({"scope": scope, "measure": measure, "regressor": reg,
                                      "explainer": name, "best": name in winners, **_cell(s)})
        for reg in regressors:
            for name in names:
                res = [r.result(name, scope) for r in records if r.regressor == reg]
                secs = [x.seconds for x in res if x is not None and x.status == "ok"]
                if secs:
                    out.timing.append({"scope": scope, "regressor": reg, "explainer": name,
                                       **_cell(median_iqr(secs))})

    for reg in regressors:
        recs = [r for r in records if r.regressor == reg]
        if not recs:
            continue
        for measure in ACCURACY_MEASURES:
            out.accuracy.append({"regressor": reg, "measure": measure,
                                 **_cell(median_iqr([r.accuracy[measure] for r in recs]))})
        flags = [r for r in recs if r.hit is not None]
        if flags:
            by_ds = defaultdict(bool)
            for r in flags:
                by_ds[r.dataset] |= bool(r.hit)
            out.hits.append({"regressor": reg, "record_rate": float(np.mean([r.hit for r in flags])),
                             "dataset_rate": float(np.mean(list(by_ds.values()))),
                             "datasets": len(by_ds)})

    out.ranks = _ranks(records, [r for r in regressors if r != TRUTH])
    return out


def _ranks(records: list[RunRecord], regressors: list[str]) -> dict:
    """Average ranks over datasets of each regressor's median test error."""
    result = {}
    datasets = list(dict.fromkeys(r.dataset for r in records))
    for measure, direction in ACCURACY_MEASURES.items():
        S = np.full((len(regressors), len(datasets)), np.nan)
        for i, reg in enumerate(regressors):
            for j, name in enumerate(datasets):
                vals = [r.accuracy[measure] for r in records
                        if r.regressor == reg and r.dataset == name]
                if vals:
                    S[i, j] = float(np.median(vals))
        complete = ~np.isnan(S).any(axis=0)
        if len(regressors) < 2 or not complete.any():
            continue
        table = average_ranks(S[:, complete], regressors, f"{direction}-better")
        result[measure] = {"ranks": dict(zip(regressors, table.ranks.tolist())),
                           "datasets": [d for d, c in zip(datasets, complete) if c],
                           **table.pvalue_dict()}
    return result


def cmd_aggregate(source, regressors=None, explainers=None) -> Summary:
    """Summarise the records under ``source`` and write the tables next to them.

    ``source`` is an output directory or an :class:`ExperimentConfig`.
    """
    directory = Path(getattr(source, "output_dir", source))
    if regressors is None and hasattr(source, "regressors"):
        regressors, explainers = source.regressors, source.explainers
    records = read_records(directory)
    summary = summarize(records, regressors, explainers)
    write_summary(summary, directory / SUMMARY_DIR)
    return summary


def write_summary(summary: Summary, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "summary.json").write_text(summary.to_json())
    for scope in ("local", "global"):
        if not summary.explainers[scope]:
            continue
        for measure in measures_for(scope):
            summary.heatmap(scope, measure).to_csv(directory / f"heatmap_{scope}_{measure}.csv")
        summary.timing_table(scope).to_csv(directory / f"timing_{scope}.csv")
    pd.DataFrame(summary.cells).to_csv(directory / "cells.csv", index=False)
    summary.accuracy_table().to_csv(directory / "accuracy.csv")
    if summary.hits:
        pd.DataFrame(summary.hits).to_csv(directory / "hit_rate.csv", index=False)
    for measure, doc in summary.ranks.items():
        pd.DataFrame({"method": list(doc["ranks"]), "average_rank": list(doc["ranks"].values())}
                     ).to_csv(directory / f"ranks_{measure}.csv", index=False)
        (directory / f"pvalues_{measure}.json").write_text(
            json.dumps({k: v for k, v in doc.items() if k != "ranks"}, indent=1))


def load_summary(directory) -> Summary:
    path = Path(directory) / SUMMARY_DIR / "summary.json"
    if not path.exists():
        raise EmptyRecordsError(f"no summary at {path}; run the aggregate stage first")
    return Summary.from_json(path.read_text())


def _text_table(df: pd.DataFrame) -> str:
    header = [df.index.name or ""] + [str(c) for c in df.columns]
    rows = [[str(i)] + [str(v) for v in row] for i, row in zip(df.index, df.values)]
    widths = [max(len(r[k]) for r in [header] + rows) for k in range(len(header))]
    fmt = lambda r: "  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()  # noqa: E731
    return "\n".join([fmt(header), fmt(["-" * w for w in widths])] + [fmt(r) for r in rows])


def cmd_report(summary, path=None) -> str:
    """Plain-text rendering of the aggregate tables; best cells carry a ``*``."""
    if not isinstance(summary, Summary):
        summary = load_summary(summary)
    if not summary.cells and not summary.accuracy:
        raise EmptyRecordsError("summary is empty")
    parts = ["ACCURACY (median ± IQR on the test set)", _text_table(summary.accuracy_table())]
    if summary.hits:
        parts += ["", "HIT RATE", _text_table(pd.DataFrame(summary.hits).set_index("regressor"))]
    for measure, doc in summary.ranks.items():
        ranks = ", ".join(f"{k}={v:.2f}" for k, v in sorted(doc["ranks"].items(),
                                                            key=lambda kv: kv[1]))
        parts += ["", f"AVERAGE RANK ({measure}): {ranks}"]
    for scope in ("local", "global"):
        if not summary.explainers[scope]:
            continue
        for measure, direction in measures_for(scope).items():
            table = summary.heatmap(scope, measure, with_best=False)
            for c in summary.cells:
                if c["scope"] == scope and c["measure"] == measure and c["best"]:
                    table.loc[c["regressor"], c["explainer"]] += " *"
            parts += ["", f"{scope.upper()} {measure} ({direction} is better)", _text_table(table)]
        parts += ["", f"{scope.upper()} explanation seconds", _text_table(summary.timing_table(scope))]
    text = "\n".join(parts) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text
