"""Genetic programming with nonlinear least-squares parameter fitting (GP-NLS).

Every fitness evaluation expands the evolved tree ``T`` into
``a * T'(w_1 x_1, ..., w_d x_d; c -> theta) + w0`` (each variable gets its
own coefficient and each constant becomes a free parameter), fits all
parameters with Levenberg-Marquardt and scores the result. The fitted values
are not written back into ``T`` (Baldwinian learning), so crossover and
mutation always act on the unexpanded trees.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..expr import GP_FUNCTIONS, compile_tree, depth, size, substitute_params, to_prefix
from ..expr.functions import FUNCTIONS
from ..expr.kernels import run_jacobian, run_program
from ..expr.tree import (Binary, Constant, Node, Parameter, Unary, Variable, children,
                         depth_at, replace_at, subtree_at, with_children)
from .base import SymbolicModel
from .lm import levenberg_marquardt

_ARITY = {name: FUNCTIONS[name].arity for name in GP_FUNCTIONS}


@dataclass
class GPConfig:
    max_depth: int = 10
    max_size: int = 50
    tournament: int = 3
    elitism: int = 1
    p_crossover: float = 0.9
    p_mutation: float = 0.25
    p_constant: float = 0.25  # share of terminals that are constants
    lm_iterations: int = 10
    functions: tuple[str, ...] = tuple(GP_FUNCTIONS)

    def __post_init__(self):
        if not 1 <= self.lm_iterations <= 25:
            raise ValueError("lm_iterations must lie in [1, 25]")
        if self.max_size < 1 or self.max_depth < 1:
            raise ValueError("size and depth limits must be positive")


# -- random trees ------------------------------------------------------------


def _terminal(rng, d: int, p_constant: float) -> Node:
    if rng.random() < p_constant:
        return Constant(float(np.round(rng.uniform(-1.0, 1.0), 3)))
    return Variable(int(rng.integers(d)))


def ptc2(rng: np.random.Generator, d: int, target_size: int, max_depth: int,
         functions=GP_FUNCTIONS, p_constant: float = 0.25) -> Node:
    """PTC2 tree with at most ``target_size`` nodes and depth ``max_depth`` (root = 1).

    Open child slots are filled in random order; a slot receives a function
    only if the nodes committed so far plus its arity stay within the target,
    so the size bound holds by construction.
    """
    funcs = [f for f in functions]
    if target_size <= 1 or max_depth <= 1:
        return _terminal(rng, d, p_constant)
    # nodes are [name, children-list] or a finished terminal Node
    first = [f for f in funcs if 1 + _ARITY[f] <= target_size]
    root_fn = first[int(rng.integers(len(first)))]
    root = [root_fn, [None] * _ARITY[root_fn]]
    open_slots = [(root, i, 2) for i in range(_ARITY[root_fn])]
    committed = 1 + _ARITY[root_fn]
    while open_slots and committed < target_size:
        parent, i, dep = open_slots.pop(int(rng.integers(len(open_slots))))
        room = target_size - committed
        options = [f for f in funcs if _ARITY[f] <= room] if dep < max_depth else []
        if options:
            fn = options[int(rng.integers(len(options)))]
            node = [fn, [None] * _ARITY[fn]]
            parent[1][i] = node
            committed += _ARITY[fn]
            open_slots.extend((node, j, dep + 1) for j in range(_ARITY[fn]))
        else:
            parent[1][i] = _terminal(rng, d, p_constant)
    for parent, i, _ in open_slots:
        parent[1][i] = _terminal(rng, d, p_constant)
    return _freeze(root)


def _freeze(node) -> Node:
    if not isinstance(node, list):
        return node
    fn, kids = node
    frozen = [_freeze(k) for k in kids]
    if len(frozen) == 1:
        return Unary(fn, frozen[0])
    return Binary(fn, frozen[0], frozen[1])


# -- expansion and fitting ---------------------------------------------------


def expand(tree: Node) -> tuple[Node, np.ndarray]:
    """Return ``(a * T' + w0, theta0)`` with ``a = theta[0]`` and ``w0 = theta[1]``.

    ``theta0`` holds 1 for every variable weight and the original value of
    every constant; ``a`` and ``w0`` start at 1 and 0.
    """
    theta = [1.0, 0.0]

    def walk(node: Node) -> Node:
        if isinstance(node, Variable):
            theta.append(1.0)
            return Binary("mul", Parameter(len(theta) - 1), node)
        if isinstance(node, Constant):
            theta.append(node.value)
            return Parameter(len(theta) - 1)
        kids = children(node)
        if not kids:
            return node
        return with_children(node, tuple(walk(k) for k in kids))

    inner = walk(tree)
    out = Binary("add", Binary("mul", Parameter(0), inner), Parameter(1))
    return out, np.asarray(theta)


@dataclass
class Evaluation:
    fitness: float  # training NMSE; inf when unusable
    expanded: Node
    theta: np.ndarray
    lm_ok: bool
    lm_iters: int


def _nmse(pred, y, var):
    with np.errstate(all="ignore"):
        r = pred - y
        mse = float(r @ r) / y.size
    out = mse / var if var > 0 else mse
    return out if np.isfinite(out) else np.inf


def fit_parameters(tree: Node, X, y, lm_iterations: int = 10) -> Evaluation:
    """Expand ``tree``, linearly scale, then refine every parameter with LM.

    A failed optimisation (non-finite start or an exception) keeps the
    pre-optimisation parameters and doubles the resulting error plus one.
    """
    expanded, theta = expand(tree)
    var = float(np.var(y))
    inner_prog = compile_tree(expanded.left.right)  # T' only
    with np.errstate(all="ignore"):
        f = run_program(inner_prog, X, theta)
        if np.all(np.isfinite(f)):
            fv = float(np.var(f))
            a = float(np.mean((f - f.mean()) * (y - y.mean())) / fv) if fv > 0 else 0.0
            w0 = float(y.mean() - a * f.mean())
            if np.isfinite(a) and np.isfinite(w0):
                theta[0], theta[1] = a, w0
    prog = compile_tree(expanded)

    def residual(th):
        out, J = run_jacobian(prog, X, th)
        return out - y, J

    with np.errstate(all="ignore"):
        pre = _nmse(run_program(prog, X, theta), y, var)
    try:
        res = levenberg_marquardt(residual, theta, max_iter=lm_iterations)
    except (np.linalg.LinAlgError, ValueError, FloatingPointError):
        res = None
    if res is None or not res.success:
        penal = 2.0 * pre + 1.0 if np.isfinite(pre) else np.inf
        return Evaluation(penal, expanded, theta, False, 0 if res is None else res.n_iter)
    fit = res.cost / y.size / var if var > 0 else res.cost / y.size
    if not np.isfinite(fit):
        fit = np.inf
    return Evaluation(fit, expanded, res.theta, True, res.n_iter)


# -- variation ---------------------------------------------------------------


def _fits(tree: Node, cfg: GPConfig) -> bool:
    return size(tree) <= cfg.max_size and depth(tree) <= cfg.max_depth


def crossover(rng, p1: Node, p2: Node, cfg: GPConfig, attempts: int = 10) -> Node:
    """Subtree crossover: a random subtree of ``p2`` replaces one of ``p1``."""
    n1, n2 = size(p1), size(p2)
    for _ in range(attempts):
        i = int(rng.integers(n1))
        j = int(rng.integers(n2))
        child = replace_at(p1, i, subtree_at(p2, j))
        if _fits(child, cfg):
            return child
    return p1


def subtree_mutation(rng, tree: Node, d: int, cfg: GPConfig) -> Node:
    pos = int(rng.integers(size(tree)))
    budget = cfg.max_size - size(tree) + size(subtree_at(tree, pos))
    room_depth = cfg.max_depth - depth_at(tree, pos) + 1
    target = int(rng.integers(1, max(budget, 1) + 1))
    new = ptc2(rng, d, target, room_depth, cfg.functions, cfg.p_constant)
    child = replace_at(tree, pos, new)
    return child if _fits(child, cfg) else tree


def point_mutation(rng, tree: Node, d: int, cfg: GPConfig) -> Node:
    pos = int(rng.integers(size(tree)))
    node = subtree_at(tree, pos)
    if isinstance(node, Variable) and d > 1:
        choices = [i for i in range(d) if i != node.index]
        new: Node = Variable(int(rng.choice(choices)))
    elif isinstance(node, (Variable, Constant)):
        new = _terminal(rng, d, cfg.p_constant)
    else:
        arity = len(children(node))
        same = [f for f in cfg.functions if _ARITY[f] == arity and f != node.fn]
        if not same:
            return tree
        fn = same[int(rng.integers(len(same)))]
        new = Unary(fn, node.child) if arity == 1 else Binary(fn, node.left, node.right)
    return replace_at(tree, pos, new)


# -- main loop ---------------------------------------------------------------


def fit_gpnls(train, population_size: int = 100, generations: int = 100, seed=0,
              config: GPConfig | None = None, callback=None) -> SymbolicModel:
    """Run GP-NLS and return the expanded best tree with its fitted constants."""
    cfg = config or GPConfig()
    if population_size < 2 or generations < 0:
        raise ValueError("population_size must be >= 2 and generations >= 0")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    X = np.ascontiguousarray(train.X, dtype=np.float64)
    y = np.asarray(train.y, dtype=np.float64)
    d = train.d
    cache: dict[Node, Evaluation] = {}

    def evaluate(tree: Node) -> Evaluation:
        ev = cache.get(tree)
        if ev is None:
            ev = fit_parameters(tree, X, y, cfg.lm_iterations)
            cache[tree] = ev
        return ev

    pop = [ptc2(rng, d, int(rng.integers(1, cfg.max_size + 1)), cfg.max_depth,
                cfg.functions, cfg.p_constant) for _ in range(population_size)]
    fit = np.array([evaluate(t).fitness for t in pop])
    history = [float(fit.min())]

    def tournament() -> Node:
        idx = rng.integers(population_size, size=cfg.tournament)
        best = min(idx, key=lambda i: (fit[i], i))
        return pop[int(best)]

    for gen in range(generations):
        order = np.lexsort((np.arange(population_size), fit))
        nxt = [pop[int(i)] for i in order[:cfg.elitism]]
        while len(nxt) < population_size:
            p1 = tournament()
            if rng.random() < cfg.p_crossover:
                child = crossover(rng, p1, tournament(), cfg)
            else:
                child = p1
            if rng.random() < cfg.p_mutation:
                if rng.random() < 0.5:
                    child = subtree_mutation(rng, child, d, cfg)
                else:
                    child = point_mutation(rng, child, d, cfg)
            nxt.append(child)
        pop = nxt
        fit = np.array([evaluate(t).fitness for t in pop])
        history.append(float(fit.min()))
        if callback is not None:
            callback(gen, history[-1], pop)

    best_i = int(np.lexsort((np.arange(population_size), fit))[0])
    best = pop[best_i]
    ev = evaluate(best)
    form = substitute_params(ev.expanded, ev.theta)
    meta = {"train_nmse": float(ev.fitness), "history": history,
            "selection": f"tournament({cfg.tournament}), elitism {cfg.elitism}",
            "lm_iterations": cfg.lm_iterations, "lm_ok": ev.lm_ok,
            "skeleton": to_prefix(best), "theta": ev.theta.tolist(),
            "evaluations": len(cache), "fit_seconds": time.perf_counter() - t0}
    return SymbolicModel(kind="gpnls",
                         hyper={"population_size": population_size, "generations": generations},
                         seed=seed, form=form, n_features=d, meta=meta)
