"""Per-subject log-density, score and negative Hessian of the marginal models.

Parameters of one experiment are ordered ``(intercept, coef_1, ..., coef_p)``
and the linear predictor is ``eta = intercept + x @ coef``.  For both families
the negative Hessian is a scalar curvature times ``(1, x)(1, x)^T``.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DataValidationError

MU_CLAMP = 1e-12


@dataclass(frozen=True)
class SubjectContribution:
    loglik: float
    score: np.ndarray
    neg_hessian: np.ndarray = None


def _augment(x, params):
    x1 = np.concatenate(([1.0], np.asarray(x, dtype=float).ravel()))
    params = np.asarray(params, dtype=float).ravel()
    if x1.shape != params.shape:
        raise DataValidationError(
            f"parameter length {params.shape[0]} does not match 1 + {x1.shape[0] - 1} covariates")
    if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(params))):
        raise DataValidationError("non-finite covariates or parameters")
    return x1, params


def gaussian_contrib(y, x, params, sigma2=1.0, hessian=False):
    if not sigma2 > 0 or not np.isfinite(y):
        raise DataValidationError("gaussian contribution needs finite y and sigma2 > 0")
    x1, params = _augment(x, params)
    resid = y - x1 @ params
    loglik = -0.5 * np.log(2 * np.pi * sigma2) - resid ** 2 / (2 * sigma2)
    score = (resid / sigma2) * x1
    H = np.outer(x1, x1) / sigma2 if hessian else None
    return SubjectContribution(float(loglik), score, H)


def bernoulli_contrib(y, x, params, hessian=False):
    if y not in (0, 1):
        raise DataValidationError(f"bernoulli response must be 0 or 1, got {y!r}")
    x1, params = _augment(x, params)
    eta = x1 @ params
    loglik = y * eta - np.logaddexp(0.0, eta)
    mu = expit(eta)
    score = (y - mu) * x1
    H = None
    if hessian:
        m = np.clip(mu, MU_CLAMP, 1 - MU_CLAMP)
        H = m * (1 - m) * np.outer(x1, x1)
    return SubjectContribution(float(loglik), score, H)


# ---------------------------------------------------------------------------
# Vectorized forms over the rows of one experiment.

def loglik_terms(family, y, eta, sigma2=1.0):
    """Per-subject log-density for linear predictors ``eta``."""
    if family == "gaussian":
        return -0.5 * np.log(2 * np.pi * sigma2) - (y - eta) ** 2 / (2 * sigma2)
    return y * eta - np.logaddexp(0.0, eta)


def score_weights(family, y, eta, sigma2=1.0):
    """d loglik / d eta per subject; the score is this times ``(1, x)``."""
    if family == "gaussian":
        return (y - eta) / sigma2
    return y - expit(eta)


def curvature_weights(family, eta, sigma2=1.0):
    """-d^2 loglik / d eta^2 per subject."""
    if family == "gaussian":
        return np.full(np.shape(eta), 1.0 / sigma2)
    m = np.clip(expit(eta), MU_CLAMP, 1 - MU_CLAMP)
    return m * (1 - m)
