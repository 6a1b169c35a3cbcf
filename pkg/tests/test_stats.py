import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from srxbench import stats


def test_all_positive_five_differences():
    r = stats.wilcoxon_signed_rank([1, 2, 3, 4, 5])
    assert r.pvalue == pytest.approx(0.0625)
    assert r.method == "exact" and r.statistic == 15


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(-50, 50).filter(bool), min_size=1, max_size=20, unique_by=abs))
def test_exact_matches_scipy_without_ties(d):
    ours = stats.wilcoxon_signed_rank(d).pvalue
    ref = scipy.stats.wilcoxon(d, method="exact").pvalue
    assert ours == pytest.approx(ref, rel=1e-9)


def test_ties_use_average_ranks():
    # |d| = 1, 1, 2: ranks 1.5, 1.5, 3; W+ = 4.5 of 6; three of eight sign patterns reach >= 4.5
    r = stats.wilcoxon_signed_rank([1, -1, 2])
    assert r.statistic == 4.5
    assert r.pvalue == pytest.approx(0.75)


def test_zero_differences_are_dropped():
    r = stats.wilcoxon_signed_rank([0, 0, 1, 2, 3, 4, 5])
    assert r.n == 5 and r.pvalue == pytest.approx(0.0625)
    assert stats.wilcoxon_signed_rank([1, 2], [1, 2]).degenerate


def test_normal_approximation_for_large_n():
    rng = np.random.default_rng(0)
    d = rng.normal(0.3, 1.0, 60)
    r = stats.wilcoxon_signed_rank(d)
    ref = scipy.stats.wilcoxon(d, method="approx", correction=True).pvalue
    assert r.method == "normal"
    assert r.pvalue == pytest.approx(ref, rel=1e-6)


def test_holm_two_values():
    np.testing.assert_allclose(stats.holm_bonferroni([0.01, 0.04]), [0.02, 0.04])


@given(st.lists(st.floats(0, 1), min_size=1, max_size=12))
def test_holm_is_monotone_and_bounded(p):
    adj = stats.holm_bonferroni(p)
    assert np.all(adj >= np.asarray(p) - 1e-15) and np.all(adj <= 1)
    order = np.argsort(p, kind="stable")
    assert np.all(np.diff(adj[order]) >= 0)


def test_holm_rejects_out_of_range():
    with pytest.raises(ValueError):
        stats.holm_bonferroni([1.2])


def test_median_iqr_one_to_five():
    s = stats.median_iqr([1, 2, 3, 4, 5])
    assert (s.median, s.iqr, s.n) == (3.0, 2.0, 5)
    assert str(s) == "3.00 ± 2.00"


def test_median_iqr_single_value_and_empty():
    assert stats.median_iqr([7.5]).iqr == 0.0
    with pytest.raises(ValueError):
        stats.median_iqr([])


def test_average_ranks_with_ties_and_direction():
    S = np.array([[1.0, 2.0, 0.5],
                  [1.0, 3.0, 0.7],
                  [2.0, 1.0, 0.9]])
    low = stats.average_ranks(S, ["a", "b", "c"])
    np.testing.assert_allclose(low.ranks, [(1.5 + 2 + 1) / 3, (1.5 + 3 + 2) / 3, (3 + 1 + 3) / 3])
    high = stats.average_ranks(S, direction="higher-better")
    np.testing.assert_allclose(high.ranks, 4 - low.ranks)


def test_rank_table_pvalues():
    rng = np.random.default_rng(2)
    S = rng.random((3, 10))
    S[0] -= 1.0  # method 0 always best
    t = stats.average_ranks(S, ["a", "b", "c"])
    assert t.ranks[0] == 1.0
    np.testing.assert_array_equal(np.diag(t.pvalues), 1.0)
    np.testing.assert_array_equal(t.pvalues, t.pvalues.T)
    doc = t.pvalue_dict()
    assert len(doc["pairs"]) == 3 and doc["conventions"]["correction"] == "holm"
    assert doc["pairs"][0]["significant"]
    assert list(t.to_frame().columns) == ["method", "average_rank"]


def test_rank_inputs_validated():
    with pytest.raises(ValueError):
        stats.average_ranks([[1.0, np.nan], [2.0, 1.0]])
    with pytest.raises(ValueError):
        stats.average_ranks([[1.0], [2.0]], direction="sideways")
