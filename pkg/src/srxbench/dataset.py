"""Ground-truth equations, samplers and noiseless dataset generation."""

from __future__ import annotations

import functools
import io
import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .expr import Node, evaluate_batch, parse, variables
from .expr.parse import ParseError

DEFAULT_GRID_CAP = 1_000_000  # matrix entries (rows x d)
TRAIN_SUBSAMPLE = 1000


class GenerationStarvedError(RuntimeError):
    pass


class GridCapExceededError(ValueError):
    def __init__(self, n_entries: int, cap: int):
        self.n_entries = n_entries
        self.cap = cap
        super().__init__(f"grid would hold {n_entries} entries, above the cap of {cap}")


class ManifestError(ValueError):
    def __init__(self, message: str, line: int, column: int = 0, source: str = "<manifest>"):
        self.line = line
        self.column = column
        super().__init__(f"{source}:{line}:{column}: {message}")


@dataclass(frozen=True)
class FeatureSpace:
    names: tuple[str, ...]
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        names = tuple(self.names)
        lower = np.asarray(self.lower, dtype=np.float64).reshape(-1)
        upper = np.asarray(self.upper, dtype=np.float64).reshape(-1)
        if not (len(names) == len(lower) == len(upper)):
            raise ValueError("names, lower and upper must have the same length")
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")
        if np.any(lower >= upper):
            raise ValueError("every lower bound must be below its upper bound")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def d(self) -> int:
        return len(self.names)

    def with_bounds(self, lower, upper) -> "FeatureSpace":
        d = self.d
        return FeatureSpace(self.names, np.broadcast_to(lower, d), np.broadcast_to(upper, d))

    def __eq__(self, other):
        return (isinstance(other, FeatureSpace) and self.names == other.names
                and np.array_equal(self.lower, other.lower)
                and np.array_equal(self.upper, other.upper))

    def __hash__(self):
        return hash((self.names, self.lower.tobytes(), self.upper.tobytes()))


# -- samplers ----------------------------------------------------------------


@dataclass(frozen=True)
class Uniform:
    n: int
    lower: float | None = None
    upper: float | None = None

    def __str__(self):
        if self.lower is None:
            return f"U({self.n})"
        return f"U({_num(self.lower)},{_num(self.upper)},{self.n})"


@dataclass(frozen=True)
class Grid:
    start: float
    stop: float
    step: float

    def __str__(self):
        return f"E({_num(self.start)},{_num(self.stop)},{_num(self.step)})"


@dataclass(frozen=True)
class LatinHypercube:
    n: int

    def __str__(self):
        return f"LHS({self.n})"


Sampler = Union[Uniform, Grid, LatinHypercube]


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


_SAMPLER = re.compile(r"^\s*(U|E|LHS)\s*\(([^)]*)\)\s*$")


def parse_sampler(text: str) -> Sampler:
    m = _SAMPLER.match(text)
    if not m:
        raise ValueError(f"unrecognised sampler {text.strip()!r}")
    kind, body = m.groups()
    args = [a.strip() for a in body.split(",") if a.strip()]
    try:
        if kind == "U" and len(args) == 1:
            return Uniform(int(args[0]))
        if kind == "U" and len(args) == 3:
            return Uniform(int(args[2]), float(args[0]), float(args[1]))
        if kind == "E" and len(args) == 3:
            return Grid(float(args[0]), float(args[1]), float(args[2]))
        if kind == "LHS" and len(args) == 1:
            return LatinHypercube(int(args[0]))
    except ValueError:
        pass
    raise ValueError(f"bad arguments for sampler {text.strip()!r}")


@dataclass(frozen=True)
class GroundTruth:
    name: str
    tree: Node
    space: FeatureSpace
    train_sampler: Sampler
    test_sampler: Sampler
    expression: str = ""

    def __post_init__(self):
        if variables(self.tree) and max(variables(self.tree)) >= self.space.d:
            raise ValueError(f"{self.name}: tree uses variables outside the feature space")


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    space: FeatureSpace
    name: str = ""
    seed: int | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[1] != self.space.d:
            raise ValueError("inconsistent dataset shapes")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("datasets may not contain non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.space, self.name, self.seed)

    def to_csv(self, path) -> None:
        header = ",".join(list(self.space.names) + ["target"])
        data = np.column_stack([self.X, self.y])
        buf = io.StringIO()
        np.savetxt(buf, data, delimiter=",", header=header, comments="", fmt="%.17g")
        Path(path).write_text(buf.getvalue())

    @classmethod
    def from_csv(cls, path, space: FeatureSpace | None = None, name: str = "") -> "Dataset":
        path = Path(path)
        with path.open() as fh:
            header = fh.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.size == 0:
            data = np.zeros((0, len(header)))
        X, y = data[:, :-1], data[:, -1]
        if space is None:
            lo, hi = X.min(axis=0), X.max(axis=0)
            space = FeatureSpace(header[:-1], lo, np.where(hi > lo, hi, lo + 1.0))
        return cls(X, y, space, name or path.stem)


# -- sampling ----------------------------------------------------------------


def sample_uniform(space: FeatureSpace, n: int, seed) -> np.ndarray:
    """``n`` i.i.d. rows, uniform within ``space`` bounds."""
    if n < 0:
        raise ValueError("n must be non-negative")
    rng = np.random.default_rng(seed)
    U = rng.random((n, space.d))
    return space.lower + U * (space.upper - space.lower)


def grid_axis(start: float, stop: float, step: float) -> np.ndarray:
    """Endpoint-inclusive 1-D grid ``start, start+step, ...`` up to ``stop``."""
    if step <= 0:
        raise ValueError("step must be positive")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(count)


def grid_size(start: float, stop: float, step: float, d: int) -> int:
    return len(grid_axis(start, stop, step)) ** d


def sample_grid(start: float, stop: float, step: float, d: int,
                cap: int = DEFAULT_GRID_CAP, on_exceed: str = "error") -> np.ndarray:
    """Cartesian product of the 1-D grid over ``d`` dimensions.

    When ``d * rows`` would exceed ``cap`` the call raises
    :class:`GridCapExceededError`, or with ``on_exceed="zip"`` returns the 1-D
    grid replicated in every column (the diagonal of the product).
    """
    axis = grid_axis(start, stop, step)
    n_entries = d * len(axis) ** d
    if n_entries > cap:
        if on_exceed == "zip":
            return np.repeat(axis[:, None], d, axis=1)
        raise GridCapExceededError(n_entries, cap)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.column_stack([m.reshape(-1) for m in mesh]) if d else np.zeros((1, 0))


def sample_grid_rows(start: float, stop: float, step: float, d: int, n: int, seed) -> np.ndarray:
    """``n`` distinct rows of the full product grid without materialising it."""
    axis = grid_axis(start, stop, step)
    total = len(axis) ** d
    rng = np.random.default_rng(seed)
    flat = np.sort(rng.choice(total, size=min(n, total), replace=False))
    idx = np.unravel_index(flat, (len(axis),) * d)
    return np.column_stack([axis[i] for i in idx])


def latin_hypercube(space: FeatureSpace, n: int, seed) -> np.ndarray:
    """Latin hypercube design: one point per stratum per column.

    Each column's range is cut into ``n`` equal strata and the strata are
    paired across columns by independent random permutations.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    d = space.d
    width = (space.upper - space.lower) / n
    out = np.empty((n, d))
    for j in range(d):
        perm = rng.permutation(n)
        u = rng.random(n)
        v = space.lower[j] + width[j] * (perm + u)
        # rounding can push a value into the next stratum; recentre those
        bad = np.floor((v - space.lower[j]) / width[j]) != perm
        v[bad] = space.lower[j] + width[j] * (perm[bad] + 0.5)
        out[:, j] = v
    return out


# -- registry ----------------------------------------------------------------


def _parse_bounds(text: str, line: int, col: int, source: str):
    names, lo, hi = [], [], []
    for item in text.split(","):
        parts = item.strip().split(":")
        if len(parts) != 3:
            raise ManifestError(f"bad variable spec {item.strip()!r} (want name:lo:hi)",
                                line, col, source)
        try:
            names.append(parts[0])
            lo.append(float(parts[1]))
            hi.append(float(parts[2]))
        except ValueError:
            raise ManifestError(f"bad bounds in {item.strip()!r}", line, col, source) from None
    try:
        return FeatureSpace(names, lo, hi)
    except ValueError as exc:
        raise ManifestError(str(exc), line, col, source) from None


def parse_manifest(text: str, source: str = "<manifest>") -> list[GroundTruth]:
    """Read ``name | expression | var:lo:hi,... | train | test`` records."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        fields = line.split("|")
        if len(fields) != 5:
            raise ManifestError(f"expected 5 '|'-separated fields, found {len(fields)}",
                                lineno, 0, source)
        offsets = [0]
        for f in fields[:-1]:
            offsets.append(offsets[-1] + len(f) + 1)
        name, expr, spec, train, test = (f.strip() for f in fields)
        space = _parse_bounds(spec, lineno, offsets[2], source)
        try:
            tree = parse(expr, space.names)
        except ParseError as exc:
            col = offsets[1] + (len(fields[1]) - len(fields[1].lstrip())) + exc.pos
            raise ManifestError(str(exc), lineno, col, source) from None
        samplers = []
        for k, s in ((3, train), (4, test)):
            try:
                samplers.append(parse_sampler(s))
            except ValueError as exc:
                raise ManifestError(str(exc), lineno, offsets[k], source) from None
        out.append(GroundTruth(name, tree, space, samplers[0], samplers[1], expr))
    return out


_BUNDLED = ("gp_benchmarks.txt", "physics.txt", "synthetic.txt")


@functools.lru_cache(maxsize=None)
def _bundled() -> tuple[GroundTruth, ...]:
    pkg = resources.files("srxbench") / "data"
    return tuple(gt for fname in _BUNDLED
                 for gt in parse_manifest((pkg / fname).read_text(), fname))


def registry(extra_manifests: Iterable[str | Path] = ()) -> list[GroundTruth]:
    """Bundled ground truths followed by any user manifests."""
    entries: list[GroundTruth] = list(_bundled())
    for path in extra_manifests:
        path = Path(path)
        entries.extend(parse_manifest(path.read_text(), str(path)))
    seen = set()
    for gt in entries:
        if gt.name in seen:
            raise ValueError(f"duplicate ground truth {gt.name!r}")
        seen.add(gt.name)
    return entries


def get(name: str, extra_manifests: Sequence[str | Path] = ()) -> GroundTruth:
    for gt in registry(extra_manifests):
        if gt.name == name:
            return gt
    raise KeyError(name)


# -- generation --------------------------------------------------------------


def _sampler_space(space: FeatureSpace, sampler: Sampler) -> FeatureSpace:
    if isinstance(sampler, Uniform) and sampler.lower is not None:
        return space.with_bounds(sampler.lower, sampler.upper)
    if isinstance(sampler, Grid):
        return space.with_bounds(sampler.start, sampler.stop)
    return space


def _draw_uniform(gt: GroundTruth, space: FeatureSpace, n: int, rng) -> tuple:
    X = sample_uniform(space, n, rng)
    y = evaluate_batch(gt.tree, X)
    ok = np.isfinite(y)
    rejected = int((~ok).sum())
    drawn = n
    X, y = X[ok], y[ok]
    while len(y) < n:
        if rejected > 0.5 * drawn:
            raise GenerationStarvedError(
                f"{gt.name}: {rejected} of {drawn} candidate rows were non-finite")
        Xn = sample_uniform(space, n - len(y), rng)
        yn = evaluate_batch(gt.tree, Xn)
        okn = np.isfinite(yn)
        drawn += len(yn)
        rejected += int((~okn).sum())
        X = np.vstack([X, Xn[okn]])
        y = np.concatenate([y, yn[okn]])
    if rejected > 0.5 * drawn:
        raise GenerationStarvedError(
            f"{gt.name}: {rejected} of {drawn} candidate rows were non-finite")
    return X, y


def _keep_finite(gt: GroundTruth, X: np.ndarray) -> tuple:
    y = evaluate_batch(gt.tree, X)
    ok = np.isfinite(y)
    if (~ok).sum() > 0.5 * len(y):
        raise GenerationStarvedError(f"{gt.name}: most grid rows are non-finite")
    return X[ok], y[ok]


def _draw(gt: GroundTruth, sampler: Sampler, rng, train_X=None,
          grid_cap: int = DEFAULT_GRID_CAP, subsample: int = TRAIN_SUBSAMPLE):
    space = _sampler_space(gt.space, sampler)
    if isinstance(sampler, Uniform):
        X, y = _draw_uniform(gt, space, sampler.n, rng)
        return X, y, space
    if isinstance(sampler, Grid):
        d = gt.space.d
        n_entries = d * grid_size(sampler.start, sampler.stop, sampler.step, d)
        if n_entries > grid_cap:
            X = sample_grid_rows(sampler.start, sampler.stop, sampler.step, d, subsample, rng)
        else:
            X = sample_grid(sampler.start, sampler.stop, sampler.step, d, cap=grid_cap)
        X, y = _keep_finite(gt, X)
        return X, y, space
    # Latin hypercube over the observed training range
    if train_X is not None:
        lo, hi = train_X.min(axis=0), train_X.max(axis=0)
        space = space.with_bounds(lo, np.where(hi > lo, hi, lo + 1e-12))
    for _ in range(10):
        X = latin_hypercube(space, sampler.n, rng)
        y = evaluate_batch(gt.tree, X)
        if np.all(np.isfinite(y)):
            return X, y, space
    X, y = _keep_finite(gt, X)
    return X, y, space


def generate(gt: GroundTruth, seed, grid_cap: int = DEFAULT_GRID_CAP,
             subsample: int = TRAIN_SUBSAMPLE) -> tuple[Dataset, Dataset]:
    """Noiseless ``(train, test)`` datasets for ``gt``.

    Non-finite rows are redrawn for uniform samplers and dropped for grids.
    A training grid too large for ``grid_cap`` is replaced by ``subsample``
    distinct grid rows drawn with the seed.
    """
    ss = np.random.SeedSequence(seed)
    train_seq, test_seq = ss.spawn(2)
    rng_train = np.random.default_rng(train_seq)
    rng_test = np.random.default_rng(test_seq)
    Xtr, ytr, sp_tr = _draw(gt, gt.train_sampler, rng_train, grid_cap=grid_cap,
                            subsample=subsample)
    Xte, yte, sp_te = _draw(gt, gt.test_sampler, rng_test, train_X=Xtr, grid_cap=grid_cap,
                            subsample=subsample)
    return (Dataset(Xtr, ytr, sp_tr, gt.name, seed),
            Dataset(Xte, yte, sp_te, gt.name, seed))
