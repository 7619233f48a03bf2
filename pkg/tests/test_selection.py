import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_dataset
from pseudosel.data import ExperimentData, MultiExperimentDataset
from pseudosel.errors import DataValidationError, SelectionError, SeparationError
from pseudosel.optimizer import FitResult, PathGrid, SolutionPath, fit_path
from pseudosel.pseudolik import InformationMatrices, information_matrices, pseudo_loglik
from pseudosel.selection import (Candidate, GammaSpec, effective_df, evaluate_candidate,
                                 pseu_bic, refit, select_model)
from pseudosel.simulation import ScenarioConfig, simulate


def info(H, V):
    return InformationMatrices(np.asarray(H, float), np.asarray(V, float), (), (0,), 10)


def test_pseu_bic_arithmetic():
    cand = Candidate((0, 1), loglik=-100.0, d_eff=3.0)
    value = cand.bic(GammaSpec(1.0), 200)
    assert value == pytest.approx(200 + 3 * np.log(200), rel=1e-15)
    assert value == pytest.approx(215.8945, abs=1e-3)
    loglog = GammaSpec(1.0, "c_log_p_loglog_p").value(200)
    assert loglog == pytest.approx(np.log(200) + np.log(np.log(200)))


def test_gamma_spec_validation():
    with pytest.raises(DataValidationError):
        GammaSpec(0.0)
    with pytest.raises(DataValidationError):
        GammaSpec(1.0, "log_n")


def test_effective_df_examples():
    H = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 3.0]])
    assert effective_df(info(H, H)) == pytest.approx(3.0, abs=1e-12)
    assert effective_df(info(np.eye(2), np.diag([2.0, 2.0]))) == pytest.approx(4.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_effective_df_invariant_under_congruence(seed, d):
    rng = np.random.default_rng(seed)
    A, B, T = rng.standard_normal((3, d, d))
    H = A @ A.T + np.eye(d)
    V = B @ B.T + 0.1 * np.eye(d)
    T = T + 3 * np.eye(d)          # well conditioned, invertible
    base = effective_df(info(H, V))
    moved = effective_df(info(T.T @ H @ T, T.T @ V @ T))
    assert moved == pytest.approx(base, rel=1e-8)
    assert base > 0


def test_blockwise_trace_equals_full_trace(rng):
    data = make_dataset(rng, n=120, p=4, families=("gaussian", "bernoulli", "gaussian"))
    support = (0, 2)
    theta = refit(data, support)
    full = effective_df(information_matrices(data, theta, support))
    cand = evaluate_candidate(data, support)
    assert cand.d_eff == pytest.approx(full, rel=1e-10)


def test_correlated_responses_do_not_enter_trace():
    """H is block diagonal, so d_eff only sees each experiment's own score variance."""
    inst = simulate(ScenarioConfig("s1", n=400, p=100, q=10, block_size=50, seed=3))
    support = inst.true_support
    joint = evaluate_candidate(inst.dataset, support)
    parts = sum(evaluate_candidate(inst.dataset.subset((k,)), support).d_eff
                for k in range(inst.dataset.K))
    assert joint.d_eff == pytest.approx(parts, rel=1e-10)


def test_empty_support_is_intercept_only_model(rng):
    data = make_dataset(rng, n=60, p=3, families=("gaussian", "bernoulli"))
    res = pseu_bic(data, ())
    theta = refit(data, ())
    assert np.all(theta.coefficients == 0)
    for k, e in enumerate(data.experiments):
        ybar = np.mean(e.responses)
        want = ybar if e.family == "gaussian" else np.log(ybar / (1 - ybar))
        assert theta.intercepts[k] == pytest.approx(want, rel=1e-9)
    d = sum(effective_df(information_matrices(data, theta, (), (k,))) for k in range(2))
    assert res.d_eff == pytest.approx(d)
    assert res.pseu_bic == pytest.approx(-2 * pseudo_loglik(data, theta) + d * np.log(3))


def test_separation_names_the_experiment():
    x = np.linspace(-1, 1, 20)
    y = (x > 0).astype(float)
    exps = (ExperimentData("gaussian", x + 0.1 * np.sin(7 * x), x[:, None], name="g"),
            ExperimentData("bernoulli", y, x[:, None], name="sep"))
    data = MultiExperimentDataset(exps)
    with pytest.raises(SeparationError) as err:
        pseu_bic(data, (0,))
    assert err.value.experiment == "sep"
    assert "sep" in str(err.value)


def test_gaussian_k1_complexity_approaches_parameter_count():
    rng = np.random.default_rng(4)
    data = make_dataset(rng, n=5000, p=5, families=("gaussian",))
    cand = evaluate_candidate(data, (0, 1, 2, 3, 4))
    assert abs(cand.d_eff / 6 - 1) <= 0.2


def test_true_support_beats_added_noise_groups():
    wins = 0
    cfg = ScenarioConfig("s1", n=500, p=200, seed=21)
    for rep in range(20):
        inst = simulate(cfg, rep)
        rng = np.random.default_rng(rep)
        noise = rng.choice(np.arange(cfg.q, cfg.p), 5, replace=False)
        true = pseu_bic(inst.dataset, inst.true_support)
        bigger = pseu_bic(inst.dataset, tuple(inst.true_support) + tuple(noise))
        wins += true.pseu_bic < bigger.pseu_bic
    assert wins >= 18


def fake_path(supports, lams=None):
    lams = lams or list(np.linspace(1.0, 0.1, len(supports)))
    fits = tuple(FitResult(theta=None, lam=l, active_set=tuple(s), objective=0.0, iterations=1,
                           converged=True, kkt_violation=0.0) for s, l in zip(supports, lams))
    return SolutionPath(np.array(lams), fits, baseline=None)


def test_single_distinct_support_is_chosen(rng):
    data = make_dataset(rng, n=50, p=3)
    rep = select_model(data, fake_path([(1,), (1,), (1,)]))
    assert rep.chosen.active_set == (1,)
    assert rep.chosen_index == 0        # ties go to the larger lambda


def test_ties_prefer_smaller_support_then_larger_lambda(rng):
    data = make_dataset(rng, n=50, p=3)
    path = fake_path([(), (0,), (0, 1), (0,)])
    same = Candidate((), loglik=-10.0, d_eff=2.0)
    cands = {(): same, (0,): Candidate((0,), loglik=-10.0, d_eff=2.0),
             (0, 1): Candidate((0, 1), loglik=-10.0, d_eff=2.0)}
    rep = select_model(data, path, candidates=cands)
    assert rep.chosen_index == 0
    cands[()] = Candidate((), loglik=-20.0, d_eff=2.0)
    rep = select_model(data, path, candidates=cands)
    assert rep.chosen_index == 1


def test_all_failed_candidates_raise(rng):
    data = make_dataset(rng, n=50, p=3)
    path = fake_path([(0,), (0, 1)])
    cands = {(0,): Candidate((0,), error="boom"), (0, 1): Candidate((0, 1), error="bang")}
    with pytest.raises(SelectionError) as err:
        select_model(data, path, candidates=cands)
    assert set(err.value.causes.values()) == {"boom", "bang"}


@pytest.fixture(scope="module")
def s1_path():
    inst = simulate(ScenarioConfig("s1", n=300, p=100, q=20, seed=8))
    return inst, fit_path(inst.dataset, "scad", grid=PathGrid(max_groups="auto"))


def test_larger_c_never_grows_chosen_support(s1_path):
    inst, path = s1_path
    sizes = [len(select_model(inst.dataset, path, GammaSpec(c)).chosen.active_set)
             for c in (0.25, 0.5, 1, 2, 4, 6, 10)]
    assert all(b <= a for a, b in zip(sizes, sizes[1:]))


def test_report_records_every_lambda(s1_path):
    inst, path = s1_path
    rep = select_model(inst.dataset, path)
    assert len(rep.records) == len(path.fits)
    best = min(r.pseu_bic for r in rep.records)
    assert rep.chosen.pseu_bic == best
    assert all(r.d_eff > 0 for r in rep.records if r.active_set and r.error is None)


def test_no_refit_uses_penalized_estimate(s1_path):
    inst, path = s1_path
    rep = select_model(inst.dataset, path, refit=False)
    f = path.fits[rep.chosen_index]
    assert rep.chosen.refit_loglik == pytest.approx(pseudo_loglik(inst.dataset, f.theta))
