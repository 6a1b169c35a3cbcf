import numpy as np
import pytest
from hypothesis import strategies as st

from srxbench.dataset import Dataset, FeatureSpace
from srxbench.expr import Binary, Constant, Unary, Variable

# smooth primitives only, so finite-difference oracles stay meaningful
SMOOTH_UNARY = ("sin", "cos", "tanh", "exp", "square", "id")
SMOOTH_BINARY = ("add", "sub", "mul")


def make_dataset(fn, lower, upper, n=200, seed=0, names=None):
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    rng = np.random.default_rng(seed)
    X = rng.uniform(lower, upper, size=(n, lower.size))
    names = names or [f"x{i}" for i in range(lower.size)]
    return Dataset(X, fn(X), FeatureSpace(names, lower, upper), "synthetic", seed)


@pytest.fixture
def linear2():
    """Noiseless y = 3 x0 + 2 x1."""
    return make_dataset(lambda X: 3 * X[:, 0] + 2 * X[:, 1], [-2, -2], [2, 2], n=300)


@pytest.fixture
def cubic3():
    return make_dataset(lambda X: X[:, 0] ** 2 + np.sin(X[:, 1]) - 0.5 * X[:, 2] * X[:, 0],
                        [-1, -1, -1], [1, 1, 1], n=240, seed=3)


def random_tree(rng, d, depth=4, unary=SMOOTH_UNARY, binary=SMOOTH_BINARY):
    """Random expression of bounded depth over ``d`` variables."""
    if depth <= 1 or rng.random() < 0.25:
        if rng.random() < 0.3:
            return Constant(round(float(rng.uniform(-2, 2)), 3))
        return Variable(int(rng.integers(d)))
    if rng.random() < 0.4:
        return Unary(str(rng.choice(unary)), random_tree(rng, d, depth - 1, unary, binary))
    return Binary(str(rng.choice(binary)), random_tree(rng, d, depth - 1, unary, binary),
                  random_tree(rng, d, depth - 1, unary, binary))


@st.composite
def trees(draw, d=2, max_depth=4):
    seed = draw(st.integers(0, 2**32 - 1))
    return random_tree(np.random.default_rng(seed), d, max_depth)


# -- acceptance summary ----------------------------------------------------------
# Tests marked ``criterion(n)`` are tallied and printed as one line per criterion.

_CRITERIA: dict[int, list[str]] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    mark = report.user_properties and dict(report.user_properties).get("criterion")
    if mark:
        _CRITERIA.setdefault(mark, []).append(report.outcome)


def pytest_runtest_setup(item):
    m = item.get_closest_marker("criterion")
    if m:
        item.user_properties.append(("criterion", m.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        outcomes = _CRITERIA[n]
        verdict = "PASS" if all(o == "passed" for o in outcomes) else "FAIL"
        plural = "" if len(outcomes) == 1 else "s"
        terminalreporter.write_line(f"criterion {n}: {verdict} ({len(outcomes)} test{plural})")
