"""Acceptance checks, one group per criterion; the terminal summary prints PASS/FAIL lines."""

import time
from pathlib import Path

import numpy as np
import pytest

from conftest import random_tree
from srxbench import dataset as ds
from srxbench import explainers as ex
from srxbench import metrics as mt
from srxbench import stats
from srxbench.expr import differentiate, evaluate, is_hit, param_jacobian, parse
from srxbench.harness import pipeline, records
from srxbench.harness.config import ExperimentConfig, derive_seed
from srxbench.regressors import REGRESSORS, fit_itea, fit_linear, levenberg_marquardt

ROOT = Path(__file__).resolve().parents[1]


def note(capsys, text):
    with capsys.disabled():
        print(f"\n  {text}")


# -- 1: Pagie-1 ------------------------------------------------------------------


@pytest.mark.slow
@pytest.mark.criterion(1)
def test_pagie1_median_nmse_of_symbolic_regressors(tmp_path, capsys):
    cfg = ExperimentConfig(datasets=["Pagie-1"], regressors=["itea", "gpnls"],
                           grids={"itea": {"popsize": [100], "gens": [100]},
                                  "gpnls": {"population_size": [100], "generations": [100]}},
                           explainers=[], repetitions=5, master_seed=0,
                           output_dir=str(tmp_path))
    t0 = time.perf_counter()
    assert pipeline.cmd_run(cfg).ok
    minutes = (time.perf_counter() - t0) / 60
    recs = records.read_records(tmp_path)
    for reg in ("itea", "gpnls"):
        nmse = [r.accuracy["nmse"] for r in recs if r.regressor == reg]
        assert len(nmse) == 5
        note(capsys, f"Pagie-1 {reg}: median test NMSE {np.median(nmse):.2e} over {nmse}")
        assert np.median(nmse) <= 0.05
    note(capsys, f"Pagie-1 runtime {minutes:.1f} min")
    assert minutes <= 15


# -- 2: hit machinery ------------------------------------------------------------

IT_REPRESENTABLE = ["Harmonic-1", "Linear-2", "Linear-3", "I.12.1", "I.14.4"]


@pytest.mark.criterion(2)
def test_itea_hits_it_representable_equations(capsys):
    hits = {}
    for name in IT_REPRESENTABLE:
        gt = ds.get(name)
        train, _ = ds.generate(gt, derive_seed(0, name, "data"))
        hits[name] = any(is_hit(fit_itea(train, popsize=100, gens=100, seed=s).form,
                                gt.tree, gt.space) for s in range(5))
    note(capsys, f"ITEA hits within 5 seeds: {hits}")
    assert sum(hits.values()) >= 2


@pytest.mark.criterion(2)
def test_planted_truth_is_a_hit_for_every_registry_entry():
    for gt in ds.registry():
        t0 = time.perf_counter()
        verdict = is_hit(gt.tree, gt.tree, gt.space)
        assert verdict.hit, gt.name
        assert time.perf_counter() - t0 < 1.0, gt.name


# -- 3: Shapley exactness --------------------------------------------------------

FAST = {"linear": {}, "lasso": {"alpha": 0.01}, "knn": {"k": 5},
        "tree": {"max_depth": 10, "max_leaf_nodes": 15},
        "forest": {"n_estimators": 100, "min_samples_split": 0.01},
        "itea": {"popsize": 50, "gens": 50},
        "gpnls": {"population_size": 50, "generations": 10}}


@pytest.fixture(scope="module")
def d3():
    gt = ds.get("I.18.12")
    return ds.generate(gt, 5)


@pytest.mark.criterion(3)
@pytest.mark.parametrize("name", list(REGRESSORS))
def test_exact_shap_is_efficient(name, d3):
    train, test = d3
    assert test.n == 30 and train.d == 3
    model = REGRESSORS[name].trainer(train, seed=1, **FAST[name])
    vals, mode = ex.shap_values(model, train, test.X)
    assert mode == "exact"
    f0 = model.predict(train.X.mean(0)[None])[0]
    gap = np.abs(vals.sum(1) - (model.predict(test.X) - f0))
    assert gap.max() <= 1e-9


@pytest.mark.criterion(3)
def test_exact_shap_on_ols_equals_centred_coefficients(d3):
    train, test = d3
    model = fit_linear(train)
    vals, _ = ex.shap_values(model, train, test.X)
    expect = np.asarray(model.meta["coef"]) * (test.X - train.X.mean(0))
    assert np.abs(vals - expect).max() <= 1e-8


# -- 4: robustness endpoints -----------------------------------------------------


@pytest.fixture(scope="module")
def linear_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("robust")
    cfg = ExperimentConfig(datasets=["Linear-2"], regressors=["linear", "forest"],
                           grids={"forest": {"n_estimators": [100], "min_samples_split": [0.01]}},
                           explainers=list(ex.LOCAL_EXPLAINERS), repetitions=2,
                           local_points=30, neighbors=30, master_seed=0, output_dir=str(out))
    assert pipeline.cmd_run(cfg).ok
    return records.read_records(out)


def _points(recs, regressor, explainer, measure):
    return np.concatenate([r.result(explainer, "local").robustness[f"{measure}_points"]
                           for r in recs if r.regressor == regressor])


@pytest.mark.criterion(4)
def test_partial_effects_are_exactly_robust_on_linear_data(linear_run):
    assert np.all(_points(linear_run, "linear", "pe", "stability") == 0.0)
    # infidelity compares two routes through floating point; machine zero is the bound
    assert np.all(_points(linear_run, "linear", "pe", "infidelity") <= 1e-20)


@pytest.mark.criterion(4)
def test_ig_on_bagged_trees_is_less_stable_than_on_ols(linear_run, capsys):
    forest = np.median(_points(linear_run, "forest", "ig", "stability"))
    ols = np.median(_points(linear_run, "linear", "ig", "stability"))
    note(capsys, f"IG median stability: forest {forest:.3g}, linear {ols:.3g}")
    assert forest > ols


@pytest.mark.criterion(4)
def test_random_importance_has_lowest_jaccard(linear_run, capsys):
    for reg in ("linear", "forest"):
        rnd = np.median(_points(linear_run, reg, "random", "jaccard"))
        rec = next(r for r in linear_run if r.regressor == reg)
        others = {e: float(np.median(_points(linear_run, reg, e, "jaccard")))
                  for e in ex.LOCAL_EXPLAINERS
                  if e != "random" and rec.result(e, "local").status == "ok"}
        note(capsys, f"{reg} median Jaccard: random {rnd:.2f}, others {others}")
        assert all(rnd < v for v in others.values())


# -- 5: quality calibration ------------------------------------------------------


@pytest.mark.criterion(5)
def test_truth_against_truth_is_perfect(d3):
    train, test = d3
    gt = ds.get("I.18.12")
    cfg = ex.ExplainerConfig(lime_samples=300, morris_trajectories=20)
    for name in ex.LOCAL_EXPLAINERS:
        a = mt.truth_explanation(gt, name, "local", train, test.X, cfg, seeds=list(range(30)))
        b = mt.truth_explanation(gt, name, "local", train, test.X, cfg, seeds=list(range(30)))
        q = mt.mean_quality(a, b)
        assert q["cosine"] == pytest.approx(1.0, abs=1e-12) and q["nmse"] == 0.0, name
    for name in ex.GLOBAL_EXPLAINERS:
        a = mt.truth_explanation(gt, name, "global", train, config=cfg, seed=3)
        b = mt.truth_explanation(gt, name, "global", train, config=cfg, seed=3)
        assert mt.cosine_quality(a.values, b.values).value == pytest.approx(1.0, abs=1e-12)
        assert mt.nmse_quality(a.values, b.values).value == 0.0, name


@pytest.mark.criterion(5)
def test_zero_variance_truth_uses_plain_mse():
    gt = ds.parse_manifest("Flat | x + y | x:0:1,y:0:1 | U(100) | U(10)")[0]
    train, test = ds.generate(gt, 0)
    truth = mt.truth_explanation(gt, "pe", "local", train, test.X[:1])[0]
    np.testing.assert_array_equal(truth.values, [1.0, 1.0])
    s = mt.nmse_quality(truth.values, [1.5, 0.0])
    assert s.degenerate and s.value == pytest.approx((0.25 + 1.0) / 2)
    assert mt.nmse_quality(truth.values, truth.values).value == 0.0


# -- 6: numerical oracles --------------------------------------------------------


@pytest.mark.criterion(6)
def test_symbolic_derivatives_match_central_differences():
    rng = np.random.default_rng(6)
    checked = 0
    for _ in range(200):
        tree = random_tree(rng, 3, 5)
        x = rng.uniform(-1, 1, 3)
        for j in range(3):
            exact = evaluate(differentiate(tree, j), x)
            h = 1e-6 * max(1.0, abs(x[j]))
            xp, xm = x.copy(), x.copy()
            xp[j] += h
            xm[j] -= h
            fd = (evaluate(tree, xp) - evaluate(tree, xm)) / (2 * h)
            assert abs(exact - fd) <= 1e-5 * max(1.0, abs(exact))
            checked += 1
    assert checked == 600


@pytest.mark.criterion(6)
def test_integrated_gradients_against_fine_quadrature(d3):
    train, test = d3
    model = mt.truth_model(ds.get("I.18.12"))
    ig = np.array([e.values for e in ex.ig_local(model, train, test.X, steps=128)])
    oracle = np.array([e.values for e in ex.ig_local(model, train, test.X, steps=100_001)])
    assert np.abs(ig - oracle).max() <= 1e-3
    gap = model.predict(test.X) - model.predict(train.X.mean(0)[None])[0]
    assert np.abs(ig.sum(1) - gap).max() <= 1e-3


@pytest.mark.criterion(6)
def test_levenberg_marquardt_recovers_sine_skeleton():
    x = np.linspace(-3, 3, 61).reshape(-1, 1)
    y = 2.5 * np.sin(x[:, 0]) + 1.0
    skeleton = parse("p0*sin(p1*x) + p2", parameters=["p0", "p1", "p2"])

    def fun(theta):
        v, J = param_jacobian(skeleton, x, theta)
        return v - y, J

    res = levenberg_marquardt(fun, [1.0, 0.0, 0.9])
    assert np.abs(res.theta - [2.5, 1.0, 1.0]).max() <= 1e-6
    assert res.cost <= res.initial_cost


# -- 7: statistics ---------------------------------------------------------------


@pytest.mark.criterion(7)
def test_wilcoxon_all_positive_five():
    assert stats.wilcoxon_signed_rank([0.3, 1.1, 2.0, 0.7, 4.2]).pvalue == pytest.approx(0.0625)


@pytest.mark.criterion(7)
def test_holm_pair():
    np.testing.assert_allclose(stats.holm_bonferroni([0.01, 0.04]), [0.02, 0.04])


@pytest.mark.criterion(7)
def test_median_iqr_of_one_to_five():
    s = stats.median_iqr([1, 2, 3, 4, 5])
    assert (s.median, s.iqr) == (3.0, 2.0)


# -- 8: determinism and isolation ------------------------------------------------


@pytest.mark.slow
@pytest.mark.criterion(8)
def test_smoke_run_is_reproducible_and_isolates_failures(tmp_path, monkeypatch, capsys):
    base = ExperimentConfig.from_yaml(ROOT / "configs" / "smoke.yaml")
    assert len(base.datasets) == 2 and len(base.regressors) == 3
    assert all(base.repetitions_for(r) == 2 for r in base.regressors)

    t0 = time.perf_counter()
    a = base.with_overrides(output_dir=str(tmp_path / "a"))
    b = base.with_overrides(output_dir=str(tmp_path / "b"))
    assert pipeline.cmd_run(a).records == 12
    assert pipeline.cmd_run(b).records == 12
    minutes = (time.perf_counter() - t0) / 60
    note(capsys, f"two smoke runs took {minutes:.2f} min")
    assert minutes < 10
    assert (a.out / records.RECORDS).read_bytes() == (b.out / records.RECORDS).read_bytes()

    victim = ("I.12.1", "itea", 1)
    fit_seed = derive_seed(pipeline.cell_seed(base, *victim), "fit")
    real = pipeline.fit_model

    def flaky(regressor, train, seed, hyper, gt):
        if seed == fit_seed:
            raise ArithmeticError("injected failure")
        return real(regressor, train, seed, hyper, gt)

    monkeypatch.setattr(pipeline, "fit_model", flaky)
    c = base.with_overrides(output_dir=str(tmp_path / "c"))
    res = pipeline.cmd_run(c)
    assert (res.records, res.failures) == (11, 1)
    fails = records.read_failures(c.out)
    assert [(f.dataset, f.regressor, f.repetition) for f in fails] == [victim]
    clean = {r.key: r.to_doc() for r in records.read_records(a.out)}
    broken = {r.key: r.to_doc() for r in records.read_records(c.out)}
    assert set(clean) - set(broken) == {"I.12.1/itea/1"}
    assert all(broken[k] == clean[k] for k in broken)
