"""Run and failure records plus their JSON-lines persistence.

Wall-clock timings are the only non-reproducible part of a record, so they
are written to a sidecar stream keyed by cell. The main stream is then
byte-identical across reruns with the same master seed.
"""

from __future__ import annotations

import json
import threading
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

RECORDS = "records.jsonl"
TIMINGS = "timings.jsonl"
FAILURES = "failures.jsonl"


def cell_key(dataset: str, regressor: str, repetition: int) -> str:
    return f"{dataset}/{regressor}/{repetition}"


@dataclass
class ExplainerResult:
    """One explainer applied to one fitted model in one scope.

    ``values`` is a vector for global scope and a point-by-feature matrix for
    local scope; ``truth`` is the same explainer applied to the generating
    expression. ``robustness`` holds one value per evaluated point.
    """

    explainer: str
    scope: str
    status: str = "ok"  # "ok" or "skipped"
    reason: str | None = None
    values: list | None = None
    truth: list | None = None
    quality: dict = field(default_factory=dict)
    robustness: dict = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def key(self) -> str:
        return f"{self.explainer}/{self.scope}"


@dataclass
class RunRecord:
    dataset: str
    regressor: str
    repetition: int
    seed: int
    hyper: dict
    accuracy: dict
    size: int | None = None
    hit: bool | None = None
    expression: str | None = None
    points: list = field(default_factory=list)
    explanations: list[ExplainerResult] = field(default_factory=list)
    fit_seconds: float = 0.0

    @property
    def key(self) -> str:
        return cell_key(self.dataset, self.regressor, self.repetition)

    def result(self, explainer: str, scope: str) -> ExplainerResult | None:
        for r in self.explanations:
            if r.explainer == explainer and r.scope == scope:
                return r
        return None

    # -- serialisation --------------------------------------------------------

    def to_doc(self) -> dict:
        """Timing-free dictionary."""
        doc = asdict(self)
        doc.pop("fit_seconds")
        for e in doc["explanations"]:
            e.pop("seconds")
        return doc

    def timing_doc(self) -> dict:
        return {"key": self.key, "fit_seconds": self.fit_seconds,
                "explainers": {e.key: e.seconds for e in self.explanations}}

    @classmethod
    def from_docs(cls, doc: dict, timing: dict | None = None) -> "RunRecord":
        doc = dict(doc)
        timing = timing or {}
        secs = timing.get("explainers", {})
        expl = []
        for e in doc.pop("explanations", []):
            r = ExplainerResult(**e)
            r.seconds = float(secs.get(r.key, 0.0))
            expl.append(r)
        return cls(**doc, explanations=expl, fit_seconds=float(timing.get("fit_seconds", 0.0)))


@dataclass
class FailureRecord:
    dataset: str
    regressor: str
    repetition: int
    seed: int
    error: str
    message: str
    traceback: str = ""

    @property
    def key(self) -> str:
        return cell_key(self.dataset, self.regressor, self.repetition)

    def to_doc(self) -> dict:
        return asdict(self)


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


class RecordWriter:
    """Append-only writer shared by all cells; a lock keeps lines whole."""

    def __init__(self, directory, fresh: bool = True):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        if fresh:
            for name in (RECORDS, TIMINGS, FAILURES):
                (self.dir / name).write_text("")

    def _append(self, name: str, doc: dict) -> None:
        with self._lock, open(self.dir / name, "a") as fh:
            fh.write(dumps(doc) + "\n")
            fh.flush()

    def write(self, item) -> None:
        if isinstance(item, FailureRecord):
            self._append(FAILURES, item.to_doc())
        else:
            self._append(RECORDS, item.to_doc())
            self._append(TIMINGS, item.timing_doc())

    def sort(self, order: dict[str, int]) -> None:
        """Rewrite every stream in cell order (used after out-of-order completion)."""
        for name in (RECORDS, TIMINGS, FAILURES):
            path = self.dir / name
            docs = _read_lines(path)
            docs.sort(key=lambda d: order.get(d.get("key") or _key(d), len(order)))
            path.write_text("".join(dumps(d) + "\n" for d in docs))


def _key(doc: dict) -> str:
    return cell_key(doc["dataset"], doc["regressor"], doc["repetition"])


def _read_lines(path: Path) -> list[dict]:
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def read_records(directory) -> list[RunRecord]:
    directory = Path(directory)
    timings = {t["key"]: t for t in _read_lines(directory / TIMINGS)}
    return [RunRecord.from_docs(d, timings.get(_key(d))) for d in _read_lines(directory / RECORDS)]


def read_failures(directory) -> list[FailureRecord]:
    return [FailureRecord(**d) for d in _read_lines(Path(directory) / FAILURES)]


def write_records(directory, items: Iterable) -> None:
    w = RecordWriter(directory)
    for it in items:
        w.write(it)
