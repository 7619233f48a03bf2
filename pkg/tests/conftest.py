import numpy as np
import pytest

from pseudosel.data import ExperimentData, MultiExperimentDataset


def make_dataset(rng, n=40, p=3, families=("gaussian", "gaussian"), weights=None,
                 missing=0.0, coef_scale=0.5, sigma2=None):
    """Small random dataset with the given experiment families."""
    K = len(families)
    weights = weights or [1.0] * K
    sigma2 = sigma2 or [1.0] * K
    exps = []
    for k, fam in enumerate(families):
        X = rng.standard_normal((n, p))
        beta = coef_scale * rng.standard_normal(p)
        eta = 0.3 + X @ beta
        if fam == "gaussian":
            y = eta + np.sqrt(sigma2[k]) * rng.standard_normal(n)
        else:
            y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
        obs = rng.random(n) >= missing
        obs[:3] = True
        if fam == "bernoulli":
            y[0], y[1] = 0.0, 1.0
        exps.append(ExperimentData(fam, np.where(obs, y, np.nan), X, obs, weights[k],
                                   sigma2[k], name=f"e{k}"))
    return MultiExperimentDataset(tuple(exps))


def standardized_dataset(rng, n=20, p=2, families=("gaussian",), coef_scale=0.6):
    """Dataset whose covariates already have mean 0 and population sd 1 per column."""
    exps = []
    for k, fam in enumerate(families):
        X = rng.standard_normal((n, p))
        X = (X - X.mean(0)) / X.std(0)
        beta = coef_scale * rng.standard_normal(p)
        eta = 0.2 + X @ beta
        if fam == "gaussian":
            y = eta + rng.standard_normal(n)
        else:
            y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
            y[0], y[1] = 0.0, 1.0
        exps.append(ExperimentData(fam, y, X, name=f"e{k}"))
    return MultiExperimentDataset(tuple(exps))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
