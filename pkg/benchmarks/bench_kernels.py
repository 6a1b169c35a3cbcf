"""Time every numba kernel against its numpy twin.

    python3 benchmarks/bench_kernels.py --rows 2000 --repeat 5

The numba column excludes compilation: each kernel is called once before
timing. Both backends are checked for agreement before they are timed.
"""

from __future__ import annotations

import argparse
import time

import numpy as np
import pandas as pd

from srxbench import dataset as ds
from srxbench._accel import HAVE_NUMBA
from srxbench.expr import evaluate_batch
from srxbench.regressors.cart import grow_tree
from srxbench.regressors.knn import knn_predict
from srxbench.regressors.linear import lasso_cd


def _best_of(fn, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rows: int, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    korns = ds.get("Korns-12")
    Xk = ds.sample_uniform(korns.space, rows * 10, seed)
    X = rng.normal(size=(rows, 5))
    y = np.sin(X[:, 0]) + X[:, 1] * X[:, 2] + 0.1 * rng.normal(size=rows)
    Xs = (X - X.mean(0)) / X.std(0)
    yc = y - y.mean()
    Xq = rng.normal(size=(rows // 4, 5))
    return {
        "evaluate_batch (Korns-12)": lambda b: evaluate_batch(korns.tree, Xk, backend=b),
        "knn_predict (k=9)": lambda b: knn_predict(X, y, Xq, 9, backend=b),
        "grow_tree (full depth)": lambda b: grow_tree(X, y, backend=b).value,
        "lasso_cd (alpha=0.01)": lambda b: lasso_cd(Xs, yc, 0.01, backend=b)[0],
    }


def main(argv=None) -> pd.DataFrame:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, default=2000)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--csv", help="also write the table here")
    args = parser.parse_args(argv)
    if not HAVE_NUMBA:
        parser.error("numba is not installed; install the 'fast' extra")

    rows = []
    for name, fn in cases(args.rows).items():
        a, b = np.asarray(fn("numba")), np.asarray(fn("numpy"))  # also warms the JIT
        np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12, equal_nan=True)
        t_nb = _best_of(lambda: fn("numba"), args.repeat)
        t_np = _best_of(lambda: fn("numpy"), args.repeat)
        rows.append({"kernel": name, "numba_ms": 1e3 * t_nb, "numpy_ms": 1e3 * t_np,
                     "speedup": t_np / t_nb})
    table = pd.DataFrame(rows)
    print(table.to_string(index=False, float_format=lambda v: f"{v:.2f}"))
    if args.csv:
        table.to_csv(args.csv, index=False)
    return table


if __name__ == "__main__":
    main()
