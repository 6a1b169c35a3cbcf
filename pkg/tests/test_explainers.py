import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_dataset
from srxbench import explainers as ex
from srxbench.expr import parse
from srxbench.regressors import SymbolicModel, fit_knn, fit_linear, fit_tree


def symbolic(text, d):
    names = [f"x{i}" for i in range(d)]
    return SymbolicModel(kind="fixed", form=parse(text, names), n_features=d)


@pytest.fixture
def cube():
    return make_dataset(lambda X: X[:, 0] * X[:, 1] + np.sin(X[:, 2]), [-1, -1, -1], [1, 1, 1],
                        n=200, seed=12)


# -- Shapley -------------------------------------------------------------------


@pytest.mark.parametrize("d", [1, 2, 5, 8])
def test_shapley_weights_sum_to_one_over_coalitions(d):
    w = ex.shapley_weights(d)
    assert sum(math.comb(d - 1, s) * w[s] for s in range(d)) == pytest.approx(1.0)


def test_exact_shap_on_linear_model(linear2):
    model = fit_linear(linear2)
    X = linear2.X[:10]
    vals, mode = ex.shap_values(model, linear2, X)
    beta = np.array(model.meta["coef"])
    assert mode == "exact"
    np.testing.assert_allclose(vals, beta * (X - linear2.X.mean(0)), atol=1e-10)


def test_exact_shap_efficiency(cube):
    model = fit_tree(cube, max_depth=6)
    X = cube.X[:20]
    vals, _ = ex.shap_values(model, cube, X)
    f0 = model.predict(cube.X.mean(0)[None])[0]
    np.testing.assert_allclose(vals.sum(1), model.predict(X) - f0, atol=1e-9)


def test_interaction_split_evenly():
    # f = x0 * x1 with zero means: each feature receives half the product
    data = make_dataset(lambda X: X[:, 0] * X[:, 1], [-1, -1], [1, 1], n=10)
    data.X[:] -= data.X.mean(0)
    vals, _ = ex.shap_values(symbolic("x0*x1", 2), data, np.array([[2.0, 3.0]]))
    np.testing.assert_allclose(vals, [[3.0, 3.0]], atol=1e-12)


def test_sampled_shap_is_exact_for_additive_models(cube):
    model = symbolic("2*x0 + sin(x1) - x2^2", 3)
    cfg = ex.ExplainerConfig(shap_exact_cutoff=1, shap_samples=8)
    X = cube.X[:5]
    sampled, mode = ex.shap_values(model, cube, X, cfg, seeds=3)
    exact, _ = ex.shap_values(model, cube, X)
    assert mode == "sampled"
    np.testing.assert_allclose(sampled, exact, atol=1e-12)


def test_shap_global_is_mean_magnitude(cube):
    model = fit_linear(cube)
    g = ex.shap_global(model, cube)
    vals, _ = ex.shap_values(model, cube, cube.X)
    np.testing.assert_allclose(g.values, np.abs(vals).mean(0))


def test_global_rows_subsample(cube):
    cfg = ex.ExplainerConfig(global_rows=25)
    assert ex.shap_global(fit_linear(cube), cube, cfg, seed=1).meta["rows"] == 25


# -- SAGE and permutation --------------------------------------------------------


def test_sage_ignores_unused_feature_and_keeps_sign_convention(cube):
    model = symbolic("x0 + 0*x1 + x2", 3)
    g = ex.sage_global(model, cube)
    assert g.values[1] == pytest.approx(0.0, abs=1e-12)
    assert g.values[0] > 0 and g.values[2] > 0
    np.testing.assert_allclose(g.meta["printed_sign_values"], -g.values)
    assert g.values.sum() == pytest.approx(g.meta["v_full"])


def test_histogram_mi_of_independent_uniforms_is_small():
    rng = np.random.default_rng(0)
    a, b = rng.random(20000), rng.random(20000)
    assert ex.histogram_mi(a, b) < 0.01
    assert ex.histogram_mi(a, a) > 2.0


def test_permutation_of_unused_feature_scores_zero():
    data = make_dataset(lambda X: 3 * X[:, 0] + X[:, 2], [-1, -1, -1], [1, 1, 1], n=200)
    g = ex.permutation_global(symbolic("3*x0 + x2", 3), data, seed=2)
    assert g.values[1] == pytest.approx(0.0, abs=1e-12)
    assert g.values[0] > g.values[2] > 0


# -- LIME and ELA ----------------------------------------------------------------


def test_lime_recovers_linear_slopes(linear2):
    model = symbolic("3*x0 + 2*x1", 2)
    out = ex.lime_local(model, linear2, linear2.X[:4], seeds=[0, 1, 2, 3])
    for e in out:
        np.testing.assert_allclose(e.values, [3.0, 2.0], atol=1e-8)
        assert not e.meta["rank_deficient"]


def test_lime_needs_enough_samples(linear2):
    with pytest.raises(ValueError):
        ex.lime_local(fit_linear(linear2), linear2, linear2.X[:1],
                      ex.ExplainerConfig(lime_samples=2))


def test_lime_seeds_are_per_point(linear2):
    model = fit_knn(linear2, k=5)
    a = ex.lime_local(model, linear2, linear2.X[:2], seeds=[5, 6])
    b = ex.lime_local(model, linear2, linear2.X[1:2], seeds=[6])
    np.testing.assert_array_equal(a[1].values, b[0].values)


def test_ela_on_linear_model(linear2):
    out = ex.ela_local(symbolic("3*x0 + 2*x1", 2), linear2, linear2.X[:3])
    for e in out:
        np.testing.assert_allclose(e.values, [3.0, 2.0], atol=1e-9)
        assert e.meta["k"] == 10


def test_ela_neighbors_break_ties_by_index():
    X = np.array([[1.0], [-1.0], [1.0], [0.0]])
    np.testing.assert_array_equal(ex.ela_neighbors(X, np.array([0.0]), 3), [3, 0, 1])


def test_ela_small_k_is_flagged(linear2):
    e = ex.ela_local(fit_linear(linear2), linear2, linear2.X[:1], k=2)[0]
    assert e.meta["degenerate"]


# -- Morris ----------------------------------------------------------------------


def test_morris_delta():
    np.testing.assert_allclose(ex.morris_delta([0, -1], [1, 1], levels=4), [2 / 3, 4 / 3])


def test_morris_on_linear_model_returns_slopes(cube):
    g = ex.morris_global(symbolic("2*x0 - x1 + 0.5*x2", 3), cube, seed=4)
    np.testing.assert_allclose(g.values, [2.0, -1.0, 0.5], atol=1e-12)
    np.testing.assert_allclose(g.meta["sigma"], 0.0, atol=1e-12)


# -- gradients, IG, PE -----------------------------------------------------------


def test_central_difference_gradient():
    model = symbolic("x0^2 + x0*x1", 2)
    G = ex.central_difference_gradient(model, np.array([[1.0, 2.0], [-3.0, 0.5]]))
    np.testing.assert_allclose(G, [[4.0, 1.0], [-5.5, -3.0]], rtol=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_ig_completeness(point):
    data = make_dataset(lambda X: X.sum(1), [-1, -1, -1], [1, 1, 1], n=50)
    model = symbolic("x0*x1 + sin(x2)", 3)
    x = np.array(point)
    e = ex.ig_local(model, data, x, steps=128)[0]
    gap = model.predict(x[None])[0] - model.predict(data.X.mean(0)[None])[0]
    assert e.values.sum() == pytest.approx(gap, abs=1e-3)


def test_ig_is_exact_on_linear_models(linear2):
    e = ex.ig_local(symbolic("3*x0 + 2*x1", 2), linear2, linear2.X[:1], steps=2)[0]
    np.testing.assert_allclose(e.values, [3, 2] * (linear2.X[0] - linear2.X.mean(0)))
    assert e.meta["gradient"] == "symbolic"


def test_ig_uses_finite_differences_for_black_boxes(linear2):
    e = ex.ig_local(fit_knn(linear2, k=3), linear2, linear2.X[:1])[0]
    assert e.meta["gradient"] == "central-difference"


def test_ig_baselines(linear2):
    model = symbolic("3*x0 + 2*x1", 2)
    x = np.array([[1.0, 1.0]])
    cfg = ex.ExplainerConfig(ig_baseline="zero")
    np.testing.assert_allclose(ex.ig_local(model, linear2, x, cfg)[0].values, [3, 2])
    with pytest.raises(ValueError):
        ex.ig_local(model, linear2, x, ex.ExplainerConfig(ig_baseline="median"))
    with pytest.raises(ValueError):
        ex.ig_local(model, linear2, x, baseline=[0.0])


def test_trapezoid_weights_integrate_linear_functions():
    w = ex.trapezoid_weights(11)
    assert w.sum() == pytest.approx(1.0)
    assert w @ np.linspace(0, 1, 11) == pytest.approx(0.5)


def test_pe_is_the_gradient(cube):
    model = symbolic("x0*x1 + sin(x2)", 3)
    X = cube.X[:4]
    vals = np.array([e.values for e in ex.pe_local(model, cube, X)])
    np.testing.assert_allclose(vals, np.column_stack([X[:, 1], X[:, 0], np.cos(X[:, 2])]))
    g = ex.pe_global(model, cube)
    np.testing.assert_allclose(g.values[2], np.abs(np.cos(cube.X[:, 2])).mean())


def test_pe_rejects_black_box(linear2):
    with pytest.raises(ex.UnsupportedExplainerError):
        ex.pe_local(fit_knn(linear2), linear2, linear2.X[:1])


# -- random baseline and registry --------------------------------------------------


def test_random_ranks_are_permutations():
    r = ex.random_ranks(6, 3)
    assert sorted(r) == [1, 2, 3, 4, 5, 6]
    np.testing.assert_array_equal(r, ex.random_ranks(6, 3))


def test_supports(linear2):
    black, white = fit_knn(linear2), fit_linear(linear2)
    assert not ex.supports("pe", black) and not ex.supports("ela", black)
    assert ex.supports("pe", white) and ex.supports("shap", black)


def test_dispatch(linear2):
    model = fit_linear(linear2)
    with pytest.raises(KeyError):
        ex.explain_local("gradcam", model, linear2, linear2.X[:1])
    with pytest.raises(KeyError):
        ex.explain_global("lime", model, linear2)
    g = ex.local_function("shap", model, linear2)
    assert g(linear2.X[:4]).shape == (4, 2)


def test_every_explainer_returns_d_values(cube):
    model = fit_linear(cube)
    cfg = ex.ExplainerConfig(lime_samples=50, morris_trajectories=5, permutation_repeats=2)
    for name in ex.LOCAL_EXPLAINERS:
        out = ex.explain_local(name, model, cube, cube.X[:2], cfg, seeds=1, point_indices=[7, 8])
        assert [e.values.shape for e in out] == [(3,), (3,)]
        assert out[1].point_index == 8 and out[0].to_record()["point"] == 7
    for name in ex.GLOBAL_EXPLAINERS:
        g = ex.explain_global(name, model, cube, cfg, seed=1)
        assert g.values.shape == (3,) and g.to_record()["point"] == "global"


def test_config_validation():
    with pytest.raises(ValueError):
        ex.ExplainerConfig(ig_steps=1)
    with pytest.raises(ValueError):
        ex.ExplainerConfig(shap_exact_cutoff=25)
    with pytest.raises(ValueError):
        ex.Explanation([1.0], "both", "x")
