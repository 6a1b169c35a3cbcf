"""Summaries and significance tests used when aggregating results."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.stats import norm, rankdata

EXACT_MAX_N = 25
ALPHA = 0.05


@dataclass(frozen=True)
class GroupSummary:
    group: str
    median: float
    iqr: float
    n: int

    def __str__(self) -> str:
        return f"{_fmt(self.median)} ± {_fmt(self.iqr)}"


def _fmt(v: float) -> str:
    # fixed point for table-sized numbers, scientific once sentinel values leak in
    return f"{v:.2f}" if abs(v) < 1e5 or not math.isfinite(v) else f"{v:.2e}"


def median_iqr(values, group: str = "") -> GroupSummary:
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.size == 0:
        raise ValueError("median_iqr needs at least one value")
    q1, med, q3 = np.percentile(v, [25, 50, 75], method="linear")
    return GroupSummary(group, float(med), float(q3 - q1), int(v.size))


@dataclass(frozen=True)
class WilcoxonResult:
    pvalue: float
    statistic: float  # W+ (sum of positive ranks)
    n: int  # non-zero differences
    method: str  # "exact", "normal" or "degenerate"
    degenerate: bool = False


@lru_cache(maxsize=64)
def _signed_rank_counts(doubled: tuple[int, ...]) -> np.ndarray:
    """Number of sign assignments giving each value of ``2 W+`` (ranks doubled)."""
    total = sum(doubled)
    counts = np.zeros(total + 1, dtype=object)
    counts[0] = 1
    for r in doubled:
        nxt = counts.copy()
        nxt[r:] += counts[:-r]
        counts = nxt
    return counts


def wilcoxon_signed_rank(a, b=None) -> WilcoxonResult:
    """Two-sided signed-rank test on ``a - b`` (zero differences are dropped).

    Exact null distribution (ties handled through average ranks) for up to
    25 non-zero differences; otherwise a normal approximation with tie and
    continuity corrections.
    """
    a = np.asarray(a, dtype=float)
    d = a - np.asarray(b, dtype=float) if b is not None else a
    d = d[d != 0]
    n = d.size
    if n == 0:
        return WilcoxonResult(1.0, 0.0, 0, "degenerate", True)
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    if n <= EXACT_MAX_N:
        doubled = tuple(int(round(2 * r)) for r in ranks)
        counts = _signed_rank_counts(doubled)
        total = 2 ** n
        k = int(round(2 * w_plus))
        full = sum(doubled)
        lo = min(k, full - k)
        tail = sum(counts[: lo + 1])
        p = min(1.0, 2.0 * float(tail) / total)
        return WilcoxonResult(p, w_plus, n, "exact")
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_counts ** 3 - tie_counts)) / 48.0
    if var <= 0:
        return WilcoxonResult(1.0, w_plus, n, "degenerate", True)
    z = (abs(w_plus - mean) - 0.5) / math.sqrt(var)
    p = min(1.0, 2.0 * float(norm.sf(max(z, 0.0))))
    return WilcoxonResult(p, w_plus, n, "normal")


def holm_bonferroni(pvalues) -> np.ndarray:
    p = np.asarray(pvalues, dtype=float).reshape(-1)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    adj = np.minimum(1.0, (m - np.arange(m)) * p[order])
    adj = np.maximum.accumulate(adj)
    out = np.empty(m)
    out[order] = adj
    return out


@dataclass
class RankTable:
    methods: list[str]
    ranks: np.ndarray  # average rank per method
    pvalues: np.ndarray  # Holm-adjusted, symmetric, ones on the diagonal
    alpha: float = ALPHA
    conventions: dict = field(default_factory=lambda: {
        "zero_differences": "dropped", "ties": "average ranks",
        "exact_max_n": EXACT_MAX_N, "correction": "holm"})

    def significant(self, i: int, j: int) -> bool:
        return bool(self.pvalues[i, j] < self.alpha)

    def to_frame(self):
        import pandas as pd

        return pd.DataFrame({"method": self.methods, "average_rank": self.ranks})

    def pvalue_dict(self) -> dict:
        return {"alpha": self.alpha, "conventions": self.conventions,
                "pairs": [{"a": self.methods[i], "b": self.methods[j],
                           "p_adjusted": float(self.pvalues[i, j]),
                           "significant": self.significant(i, j)}
                          for i in range(len(self.methods))
                          for j in range(i + 1, len(self.methods))]}


def average_ranks(scores, methods=None, direction: str = "lower-better",
                  alpha: float = ALPHA) -> RankTable:
    """Mean fractional rank of each method (rows) across datasets (columns)."""
    S = np.asarray(scores, dtype=float)
    if S.ndim != 2 or np.isnan(S).any():
        raise ValueError("score matrix must be 2-D without missing cells")
    if direction not in ("lower-better", "higher-better"):
        raise ValueError("direction must be 'lower-better' or 'higher-better'")
    k = S.shape[0]
    methods = list(methods) if methods is not None else [str(i) for i in range(k)]
    signed = S if direction == "lower-better" else -S
    ranks = np.apply_along_axis(rankdata, 0, signed).mean(axis=1)
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    raw = [wilcoxon_signed_rank(S[i], S[j]).pvalue for i, j in pairs]
    adj = holm_bonferroni(raw) if raw else np.zeros(0)
    P = np.ones((k, k))
    for (i, j), p in zip(pairs, adj):
        P[i, j] = P[j, i] = p
    return RankTable(methods, ranks, P, alpha)
