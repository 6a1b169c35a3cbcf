import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srxbench import dataset as ds
from srxbench.expr import evaluate_batch

GP_NAMES = ("Korns-11", "Korns-12", "Vladislavleva-4", "Pagie-1")


def test_registry_holds_gp_benchmarks_and_physics_subset():
    names = [g.name for g in ds.registry()]
    for n in GP_NAMES:
        assert n in names
    physics = [g for g in ds.registry() if isinstance(g.test_sampler, ds.LatinHypercube)]
    assert len(physics) >= 10


def test_korns11_entry():
    gt = ds.get("Korns-11")
    assert gt.space.names == ("x", "y", "z", "v", "w")
    assert gt.train_sampler == ds.Uniform(1000, -50.0, 10.0)
    assert gt.test_sampler == ds.Uniform(100, -50.0, 10.0)


def test_pagie_entry():
    gt = ds.get("Pagie-1")
    assert gt.train_sampler == ds.Grid(-5.0, 5.0, 0.01)
    assert gt.test_sampler == ds.Grid(-5.0, 5.0, 0.1)


def test_vladislavleva_at_threes():
    gt = ds.get("Vladislavleva-4")
    assert evaluate_batch(gt.tree, np.full((1, 5), 3.0))[0] == pytest.approx(2.0)


def test_manifest_errors_are_positioned():
    with pytest.raises(ds.ManifestError) as exc:
        ds.parse_manifest("ok | x + | x:0:1 | U(10) | U(10)", "m.txt")
    assert exc.value.line == 1 and exc.value.column > 5
    with pytest.raises(ds.ManifestError):
        ds.parse_manifest("\n\nbad | x | x:1:0 | U(10) | U(10)")
    with pytest.raises(ds.ManifestError) as exc:
        ds.parse_manifest("a | x | x:0:1 | Q(3) | U(1)")
    assert exc.value.line == 1


def test_user_manifest_extends_registry(tmp_path):
    path = tmp_path / "extra.txt"
    path.write_text("Mine | a*b + 1 | a:0:1,b:0:1 | U(50) | LHS(5)\n")
    gt = ds.get("Mine", [path])
    train, test = ds.generate(gt, 3)
    assert (train.n, test.n) == (50, 5)


# -- samplers --------------------------------------------------------------------


def test_uniform_empty_and_bounds():
    space = ds.FeatureSpace(["a", "b"], [-1, 2], [1, 3])
    assert ds.sample_uniform(space, 0, 0).shape == (0, 2)
    X = ds.sample_uniform(space, 500, 1)
    assert np.all(X >= space.lower) and np.all(X <= space.upper)


def test_uniform_means_converge():
    space = ds.FeatureSpace(["a", "b"], [-50, 0], [10, 4])
    X = ds.sample_uniform(space, 100_000, 2)
    mid = (space.lower + space.upper) / 2
    assert np.all(np.abs(X.mean(axis=0) - mid) <= 0.01 * np.abs(space.upper - space.lower))


def test_grid_counts():
    assert ds.grid_axis(-5, 5, 0.1).size == 101
    np.testing.assert_array_equal(ds.grid_axis(0, 1, 1), [0.0, 1.0])
    assert ds.sample_grid(-5, 5, 0.1, 2).shape == (101 * 101, 2)


def test_pagie_train_grid_exceeds_cap():
    with pytest.raises(ds.GridCapExceededError) as exc:
        ds.sample_grid(-5, 5, 0.01, 2)
    assert exc.value.n_entries == 2 * 1001**2
    zipped = ds.sample_grid(-5, 5, 0.01, 2, on_exceed="zip")
    assert zipped.shape == (1001, 2)
    assert ds.sample_grid(-5, 5, 0.01, 2, cap=3_000_000).shape == (1001**2, 2)


def _strata(X, space):
    width = (space.upper - space.lower) / X.shape[0]
    return np.floor((X - space.lower) / width).astype(int)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 60), st.integers(1, 4), st.integers(0, 2**31))
def test_lhs_stratification(n, d, seed):
    space = ds.FeatureSpace([f"x{i}" for i in range(d)], np.zeros(d) - 1.5, np.arange(1, d + 1))
    X = ds.latin_hypercube(space, n, seed)
    S = _strata(X, space)
    for j in range(d):
        assert sorted(S[:, j]) == list(range(n))


def test_lhs_seeds_change_pairing_not_coverage():
    space = ds.FeatureSpace(["a", "b"], [0, 0], [1, 1])
    A, B = ds.latin_hypercube(space, 30, 0), ds.latin_hypercube(space, 30, 1)
    assert not np.array_equal(_strata(A, space), _strata(B, space))
    for j in range(2):
        assert sorted(_strata(A, space)[:, j]) == sorted(_strata(B, space)[:, j])


def test_lhs_single_point():
    space = ds.FeatureSpace(["a"], [2], [3])
    x = ds.latin_hypercube(space, 1, 9)
    assert x.shape == (1, 1) and 2 <= x[0, 0] <= 3


# -- generation --------------------------------------------------------------------


def test_generate_is_deterministic():
    gt = ds.get("Korns-12")
    a, b = ds.generate(gt, 5), ds.generate(gt, 5)
    for u, v in zip(a, b):
        np.testing.assert_array_equal(u.X, v.X)
        np.testing.assert_array_equal(u.y, v.y)


def test_uniform_train_has_1000_rows():
    train, test = ds.generate(ds.get("Korns-11"), 0)
    assert (train.n, test.n) == (1000, 100)


def test_pagie_train_is_subsampled_and_finite():
    train, test = ds.generate(ds.get("Pagie-1"), 0)
    assert train.n == 1000 and np.all(np.isfinite(train.y))
    assert test.n == 101 * 101
    assert len({tuple(r) for r in train.X}) == 1000


def test_korns11_origin_row_value():
    gt = ds.get("Korns-11")
    X = np.zeros((1, 5))
    X[0, 1:] = [3.0, -7.0, 2.0, 9.0]
    assert evaluate_batch(gt.tree, X)[0] == pytest.approx(17.87)


def test_physics_test_set_is_lhs_over_train_range():
    train, test = ds.generate(ds.get("I.12.4"), 1)
    assert test.n == 30
    lo, hi = train.X.min(axis=0), train.X.max(axis=0)
    assert np.all(test.X >= lo) and np.all(test.X <= hi)
    S = _strata(test.X, ds.FeatureSpace(test.space.names, lo, hi))
    for j in range(test.d):
        assert sorted(S[:, j]) == list(range(30))


def test_starvation_is_reported():
    gt = ds.parse_manifest("Bad | log(x) | x:-10:0.5 | U(100) | U(10)")[0]
    with pytest.raises(ds.GenerationStarvedError):
        ds.generate(gt, 0)


def test_nonfinite_rows_are_redrawn():
    # log(x) is non-finite on a fifth of the box; every kept row must be finite
    gt = ds.parse_manifest("Some | log(x) | x:-1:4 | U(400) | U(40)")[0]
    train, test = ds.generate(gt, 0)
    assert train.n == 400 and np.all(train.X > 0)


def test_csv_round_trip(tmp_path):
    train, _ = ds.generate(ds.get("I.6.2a"), 4)
    train.to_csv(tmp_path / "t.csv")
    back = ds.Dataset.from_csv(tmp_path / "t.csv", train.space)
    np.testing.assert_array_equal(back.X, train.X)
    np.testing.assert_array_equal(back.y, train.y)
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "theta,target"


def test_dataset_rejects_nonfinite():
    space = ds.FeatureSpace(["a"], [0], [1])
    with pytest.raises(ValueError):
        ds.Dataset(np.array([[0.5]]), np.array([np.nan]), space)


def test_feature_space_invariants():
    with pytest.raises(ValueError):
        ds.FeatureSpace(["a", "a"], [0, 0], [1, 1])
    with pytest.raises(ValueError):
        ds.FeatureSpace(["a"], [1], [1])
