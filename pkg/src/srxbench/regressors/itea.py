"""Interaction-Transformation Evolutionary Algorithm (mutation only).

Individuals are lists of ``(transform, strengths)`` terms; coefficients and the
intercept are refitted by least squares at every evaluation. Survivors are
chosen by (mu + lambda) truncation over parents and mutants, skipping exact
duplicates while enough distinct individuals exist.
"""

from __future__ import annotations

import time

import numpy as np
import scipy.linalg

from ..expr import ITEA_TRANSFORMS, ITExpression, ITTerm, it_to_tree
from ..expr.functions import FUNCTIONS
from ..expr.itexpr import monomials
from .base import SymbolicModel
from .linear import fit_linear

Term = tuple[str, tuple[int, ...]]


_MISSING = object()
# columns beyond this magnitude make the least-squares system overflow
_MAX_ABS = 1e100


def domain_probe(lower, upper) -> np.ndarray:
    """Points of the lattice ``{lower_i, 0, upper_i}^d`` (0 only when inside the box).

    A term must be finite here as well as on the training rows, which rejects
    terms with poles at the origin or overflow at the box corners that a
    sample might miss.
    """
    axes = []
    for lo, hi in zip(lower, upper):
        ax = [lo, hi]
        if lo < 0.0 < hi:
            ax.insert(1, 0.0)
        axes.append(ax)
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


class _Evaluator:
    """NMSE of term sets on fixed training data, with a per-term column cache."""

    def __init__(self, X, y, probe=None):
        self.X = np.ascontiguousarray(X, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        self.probe = None if probe is None else np.ascontiguousarray(probe, dtype=np.float64)
        self.var = float(np.var(self.y))
        self._cols: dict[Term, np.ndarray | None] = {}
        self._fit: dict[tuple[Term, ...], tuple[float, np.ndarray | None]] = {}

    def _apply(self, X, term):
        z = monomials(X, np.asarray([term[1]]))[:, 0]
        with np.errstate(all="ignore"):
            return FUNCTIONS[term[0]].numpy_fn(z)

    def column(self, term: Term):
        col = self._cols.get(term, _MISSING)
        if col is _MISSING:
            col = self._apply(self.X, term)
            if not np.all(np.isfinite(col)) or np.max(np.abs(col)) > _MAX_ABS:
                col = None
            elif self.probe is not None and not np.all(np.isfinite(self._apply(self.probe, term))):
                col = None
            self._cols[term] = col
        return col

    def fitness(self, terms: tuple[Term, ...]) -> tuple[float, np.ndarray | None]:
        hit = self._fit.get(terms)
        if hit is not None:
            return hit
        cols = [self.column(t) for t in terms]
        if any(c is None for c in cols):
            out = (np.inf, None)
        else:
            A = np.column_stack([np.ones(self.y.size), *cols])
            try:
                beta = scipy.linalg.lstsq(A, self.y, lapack_driver="gelsd")[0]
                with np.errstate(all="ignore"):
                    resid = A @ beta - self.y
                    mse = float(resid @ resid) / self.y.size
            except (np.linalg.LinAlgError, ValueError):
                beta, mse = None, np.inf
            nmse = mse / self.var if self.var > 0 else mse
            out = (nmse, beta) if np.isfinite(nmse) else (np.inf, None)
        self._fit[terms] = out
        return out


class _Mutator:
    def __init__(self, d: int, rng: np.random.Generator, transforms, max_strength: int,
                 max_terms: int):
        self.d = d
        self.rng = rng
        self.transforms = tuple(transforms)
        self.kmax = max_strength
        self.max_terms = max_terms

    def strengths(self) -> tuple[int, ...]:
        rng = self.rng
        k = np.zeros(self.d, dtype=int)
        active = rng.random(self.d) < 0.5
        if not active.any():
            active[rng.integers(self.d)] = True
        mags = rng.integers(1, self.kmax + 1, size=self.d)
        signs = np.where(rng.random(self.d) < 0.5, -1, 1)
        k[active] = (mags * signs)[active]
        return tuple(int(v) for v in k)

    def term(self) -> Term:
        return (self.transforms[self.rng.integers(len(self.transforms))], self.strengths())

    def individual(self, max_init_terms: int = 4) -> tuple[Term, ...]:
        n = int(self.rng.integers(1, max_init_terms + 1))
        terms: list[Term] = []
        for _ in range(20 * n):
            if len(terms) == n:
                break
            t = self.term()
            if t not in terms:
                terms.append(t)
        return tuple(terms)

    def expand(self, terms):
        rng = self.rng
        if len(terms) >= 2 and rng.random() < 0.5:
            i, j = rng.choice(len(terms), size=2, replace=False)
            sign = 1 if rng.random() < 0.5 else -1
            k = np.clip(np.add(terms[i][1], sign * np.asarray(terms[j][1])), -self.kmax, self.kmax)
            if not k.any():
                new = self.term()
            else:
                tf = self.transforms[rng.integers(len(self.transforms))]
                new = (tf, tuple(int(v) for v in k))
        else:
            new = self.term()
        if new in terms:
            return terms
        return terms + (new,)

    def shrink(self, terms):
        drop = int(self.rng.integers(len(terms)))
        return terms[:drop] + terms[drop + 1:]

    def local(self, terms):
        rng = self.rng
        i = int(rng.integers(len(terms)))
        tf, k = terms[i]
        k = list(k)
        j = int(rng.integers(self.d))
        choices = [v for v in range(-self.kmax, self.kmax + 1) if v != k[j]]
        k[j] = int(rng.choice(choices))
        if not any(k):
            return terms
        new = (tf, tuple(k))
        if new in terms:
            return terms
        return terms[:i] + (new,) + terms[i + 1:]

    def mutate(self, terms):
        ops = []
        if len(terms) < self.max_terms:
            ops.append(self.expand)
        if len(terms) > 1:
            ops.append(self.shrink)
        ops.append(self.local)
        return ops[int(self.rng.integers(len(ops)))](terms)


def _canonical(terms) -> tuple[Term, ...]:
    return tuple(sorted(terms))


def _to_itexpr(terms, beta, d) -> ITExpression:
    return ITExpression(float(beta[0]), tuple(
        ITTerm(tf, k, float(b)) for (tf, k), b in zip(terms, beta[1:])))


def fit_itea(train, popsize: int = 100, gens: int = 100, seed=0,
             transforms=ITEA_TRANSFORMS, max_strength: int = 3, max_terms: int = 10,
             probe_domain: bool = True, callback=None) -> SymbolicModel:
    """Evolve IT expressions by mutation and return the best as a symbolic model.

    Parameters
    ----------
    train : Dataset
        Training data; its feature space bounds feed the domain probe.
    popsize, gens : int
        Population size and number of generations.
    seed : int
        Seeds every random choice; equal seeds give identical models.
    max_strength, max_terms : int
        Bounds on ``|k|`` and on the number of terms.
    probe_domain : bool
        Reject terms that are non-finite on :func:`domain_probe` points.
    callback : callable, optional
        ``callback(gen, best_fitness, population)`` after each generation.
    """
    if popsize < 1 or gens < 0:
        raise ValueError("popsize must be >= 1 and gens >= 0")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    probe = domain_probe(train.space.lower, train.space.upper) if probe_domain else None
    ev = _Evaluator(train.X, train.y, probe)
    mut = _Mutator(train.d, rng, transforms, max_strength, max_terms)

    pop = [_canonical(mut.individual()) for _ in range(popsize)]
    fit = [ev.fitness(p)[0] for p in pop]
    history = [float(min(fit))]
    for gen in range(gens):
        children = [_canonical(mut.mutate(p)) for p in pop]
        cfit = [ev.fitness(c)[0] for c in children]
        pool = pop + children
        pfit = fit + cfit
        order = sorted(range(len(pool)), key=lambda i: (pfit[i], i))
        chosen, seen, spare = [], set(), []
        for i in order:
            if pool[i] in seen:
                spare.append(i)
                continue
            seen.add(pool[i])
            chosen.append(i)
            if len(chosen) == popsize:
                break
        chosen.extend(spare[:popsize - len(chosen)])
        pop = [pool[i] for i in chosen]
        fit = [pfit[i] for i in chosen]
        history.append(float(min(fit)))
        if callback is not None:
            callback(gen, history[-1], pop)

    best = int(np.argmin(fit))
    meta = {"selection": "mu+lambda", "max_strength": max_strength, "max_terms": max_terms,
            "history": history}
    if not np.isfinite(fit[best]):
        fallback = fit_linear(train, seed=seed)
        fallback.kind = "itea"
        fallback.hyper = {"popsize": popsize, "gens": gens}
        fallback.meta.update(meta, degenerate=True)
        fallback.meta["fit_seconds"] = time.perf_counter() - t0
        return fallback
    terms = pop[best]
    beta = ev.fitness(terms)[1]
    it = _to_itexpr(terms, beta, train.d)
    meta.update(degenerate=False, train_nmse=float(fit[best]),
                itexpr={"intercept": it.intercept,
                        "terms": [[t.transform, list(t.strengths), t.coef] for t in it.terms]},
                fit_seconds=time.perf_counter() - t0)
    model = SymbolicModel(kind="itea", hyper={"popsize": popsize, "gens": gens}, seed=seed,
                          form=it_to_tree(it), n_features=train.d, meta=meta)
    model.itexpr = it
    return model
