import numpy as np
import pandas as pd
import pytest

from pseudosel.data import ParameterState
from pseudosel.errors import DataValidationError
from pseudosel.optimizer import PathGrid
from pseudosel.selection import GammaSpec
from pseudosel.simulation import (ScenarioConfig, StudySettings, aggregate, evaluate_selection,
                                  parse_method, run_study, simulate)


def test_s1_shapes_and_truth():
    inst = simulate(ScenarioConfig("s1", n=500, p=200, seed=1))
    data = inst.dataset
    assert (data.K, data.n, data.p) == (4, 500, 200)
    mats = [e.covariates for e in data.experiments]
    assert all(not np.array_equal(mats[0], m) for m in mats[1:])
    assert inst.true_support == tuple(range(50))
    norms = inst.true_coefficients.group_norms()
    assert np.all(norms[:50] >= 0.05) and np.all(norms[50:] == 0)
    B = inst.true_coefficients.coefficients
    assert B[:, :50].min() >= 0.05 and B[:, :50].max() <= 0.5


def test_s2_layout():
    inst = simulate(ScenarioConfig("s2", n=300, p=400, seed=1))
    assert inst.dataset.p == 400
    X = inst.dataset.experiments[0].covariates
    block = np.corrcoef(X[:, :200], rowvar=False)[np.triu_indices(200, 1)].mean()
    rest = np.corrcoef(X[:, 200:], rowvar=False)[np.triu_indices(200, 1)].mean()
    assert abs(block - 0.2) < 0.05 and abs(rest) < 0.02


def test_s3_shared_covariates_and_binary_margins():
    means = []
    for rep in range(5):
        inst = simulate(ScenarioConfig("s3", n=1000, p=50, q=10, seed=2), rep)
        exps = inst.dataset.experiments
        assert [e.family for e in exps] == ["gaussian", "gaussian", "bernoulli", "bernoulli"]
        for e in exps[1:]:
            assert np.array_equal(e.covariates, exps[0].covariates)
        for e in exps[2:]:
            assert set(np.unique(e.responses)) == {0.0, 1.0}
            means.append(e.responses.mean())
    assert all(abs(m - 0.5) < 0.05 for m in means)


def test_same_seed_and_replicate_is_byte_identical():
    cfg = ScenarioConfig("s3", n=100, p=20, q=5, seed=9)
    a, b = simulate(cfg, 3), simulate(cfg, 3)
    for ea, eb in zip(a.dataset.experiments, b.dataset.experiments):
        assert ea.covariates.tobytes() == eb.covariates.tobytes()
        assert ea.responses.tobytes() == eb.responses.tobytes()
    assert a.true_coefficients.coefficients.tobytes() == b.true_coefficients.coefficients.tobytes()
    c = simulate(cfg, 4)
    assert c.dataset.experiments[0].responses.tobytes() != a.dataset.experiments[0].responses.tobytes()


@pytest.mark.parametrize("scenario", ["s1", "s3"])
def test_response_correlation_matches_design(scenario):
    """Latent-scale residual correlation, averaged over pairs and replicates."""
    vals = []
    for rep in range(10):
        cfg = ScenarioConfig(scenario, n=1000, p=50, q=10, block_size=50, seed=4)
        inst = simulate(cfg, rep)
        B = inst.true_coefficients.coefficients
        if scenario == "s3":
            # binary margins are dichotomized; use the continuous pair only
            exps = inst.dataset.experiments[:2]
        else:
            exps = inst.dataset.experiments
        R = np.column_stack([e.responses - e.covariates @ B[k] for k, e in enumerate(exps)])
        C = np.corrcoef(R, rowvar=False)
        vals.append(C[np.triu_indices(len(exps), 1)].mean())
    assert abs(np.mean(vals) - 0.7) < 0.05


def test_within_block_covariate_correlation():
    cfg = ScenarioConfig("s1", n=1000, p=100, block_size=50, seed=6)
    X = simulate(cfg).dataset.experiments[0].covariates
    C = np.corrcoef(X, rowvar=False)
    within = np.concatenate([C[b:b + 50, b:b + 50][np.triu_indices(50, 1)] for b in (0, 50)])
    between = C[:50, 50:].ravel()
    assert abs(within.mean() - 0.2) < 0.03
    assert abs(between.mean()) < 0.03


@pytest.mark.parametrize("kwargs", [dict(q=300), dict(rho_response=1.0), dict(p=210),
                                    dict(replicates=0), dict(scenario="s4"),
                                    dict(coef_low=0.6)])
def test_invalid_configs_rejected(kwargs):
    base = dict(scenario="s1", n=100, p=200)
    base.update(kwargs)
    with pytest.raises(DataValidationError):
        ScenarioConfig(**base)


def test_metric_examples():
    inst = simulate(ScenarioConfig("s1", n=50, p=100, seed=1))
    truth = inst.true_coefficients
    m = evaluate_selection(inst.true_support, truth, inst)
    assert m == {"psr": 1.0, "fdr": 0.0, "sse": 0.0}
    m = evaluate_selection(tuple(inst.true_support) + (70,), truth, inst)
    assert m["psr"] == 1.0 and m["fdr"] == pytest.approx(1 / 51)
    m = evaluate_selection((), ParameterState(np.zeros((4, 100)), np.zeros(4)), inst)
    assert m["psr"] == 0.0 and m["fdr"] == 0.0
    assert m["sse"] == pytest.approx(np.sum(truth.coefficients ** 2))


def test_single_experiment_metrics_use_that_experiment(rng):
    inst = simulate(ScenarioConfig("s1", n=50, p=100, seed=1))
    est = inst.true_coefficients.coefficients[[2]]
    assert evaluate_selection(inst.true_support, est, inst, (2,))["sse"] == 0.0
    with pytest.raises(DataValidationError):
        evaluate_selection(inst.true_support, est, inst)


def test_parse_method():
    assert parse_method("integration") is None
    assert parse_method("single:1") == (0,)
    for bad in ("single:0", "single:x", "joint"):
        with pytest.raises(DataValidationError):
            parse_method(bad)


@pytest.fixture(scope="module")
def small_study():
    cfg = ScenarioConfig("s1", n=200, p=100, q=10, seed=3, replicates=3)
    settings = StudySettings(methods=("integration", "single:2"), penalties=("scad", "lasso"),
                             gammas=(GammaSpec(1.0), GammaSpec(6.0)),
                             grid=PathGrid(n_lambda=40, max_groups="auto"))
    return cfg, settings, run_study(cfg, settings)


def test_study_rows_per_method(small_study):
    cfg, settings, res = small_study
    table = res.replicates
    groups = table.groupby(["method", "penalty", "c"]).size()
    assert len(groups) == 2 * 2 * 2
    assert (groups == cfg.replicates).all()
    assert not res.partial


def test_aggregate_is_mean_and_sd_of_rows(small_study):
    _, _, res = small_study
    agg = res.aggregate
    for _, row in agg.iterrows():
        sub = res.replicates[(res.replicates.method == row.method)
                             & (res.replicates.penalty == row.penalty)
                             & (res.replicates.c == row.c)]
        for metric in ("psr", "fdr", "sse"):
            assert row[f"{metric}_mean"] == pytest.approx(sub[metric].mean(), rel=1e-12)
            assert row[f"{metric}_sd"] == pytest.approx(sub[metric].std(ddof=1), rel=1e-12)
        assert row.replicates_ok == len(sub)


def test_study_is_identical_across_worker_counts(small_study):
    cfg, settings, res = small_study
    par = run_study(cfg, settings, jobs=2)
    drop = ["runtime_ms"]
    pd.testing.assert_frame_equal(res.replicates.drop(columns=drop),
                                  par.replicates.drop(columns=drop))
    pd.testing.assert_frame_equal(res.aggregate, par.aggregate)


def test_aggregate_ignores_failed_rows():
    rows = pd.DataFrame([
        dict(scenario="s1", n=1, p=1, c=1.0, penalty="scad", method="integration", replicate=r,
             psr=v, fdr=0.0, sse=0.0, chosen_support_size=1, runtime_ms=0.0, error=e)
        for r, (v, e) in enumerate([(1.0, ""), (0.5, ""), (np.nan, "boom")])])
    agg = aggregate(rows)
    assert agg.psr_mean.iloc[0] == 0.75 and agg.replicates_ok.iloc[0] == 2
