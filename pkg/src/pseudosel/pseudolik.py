"""Working-independence pseudo-loglikelihood and its information matrices.

The full parameter vector stacks experiments in order, each block laid out
as ``(intercept, coef_1, ..., coef_p)``.  Because the pseudo-loglikelihood is
a weighted sum of per-experiment terms, its Hessian is block diagonal across
experiments while the score covariance is not.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import marginal
from .errors import DataValidationError, SingularMatrixError

COND_LIMIT = 1e12


def linear_predictor(exp, state, k):
    return state.intercepts[k] + exp.covariates @ state.coefficients[k]


def pseudo_loglik(data, state):
    state.check_matches(data)
    total = 0.0
    for k, e in enumerate(data.experiments):
        eta = linear_predictor(e, state, k)
        terms = marginal.loglik_terms(e.family, e.y_filled, eta, e.noise_variance)
        total += e.weight * float(np.sum(terms[e.observed]))
    return total


def _experiment_pieces(e, state, k):
    eta = linear_predictor(e, state, k)
    z = e.observed.astype(float)
    s = e.weight * z * marginal.score_weights(e.family, e.y_filled, eta, e.noise_variance)
    c = e.weight * z * marginal.curvature_weights(e.family, eta, e.noise_variance)
    return s, c


def pseudo_score(data, state):
    """Gradient of the pseudo-loglikelihood, length ``K * (p + 1)``."""
    state.check_matches(data)
    out = []
    for k, e in enumerate(data.experiments):
        s, _ = _experiment_pieces(e, state, k)
        out.append(np.concatenate(([s.sum()], e.covariates.T @ s)))
    return np.concatenate(out)


def pseudo_neg_hessian(data, state):
    """Negative Hessian; cross-experiment blocks are exactly zero."""
    state.check_matches(data)
    d = data.p + 1
    H = np.zeros((data.K * d, data.K * d))
    for k, e in enumerate(data.experiments):
        _, c = _experiment_pieces(e, state, k)
        X1 = np.column_stack((np.ones(data.n), e.covariates))
        H[k * d:(k + 1) * d, k * d:(k + 1) * d] = (X1 * c[:, None]).T @ X1
    return H


@dataclass(frozen=True, eq=False)
class InformationMatrices:
    """Per-subject-average ``H`` and ``V`` restricted to a support.

    The parameter set is, for each listed experiment, its intercept followed
    by the coefficients of the predictors in ``support``.
    """

    H: np.ndarray
    V: np.ndarray
    support: tuple
    experiments: tuple
    n_subjects: int

    @property
    def dim(self):
        return self.H.shape[0]


def information_matrices(data, state, support, experiments=None):
    """Observed ``H`` and uncentered score outer-product ``V`` on a support."""
    state.check_matches(data)
    support = tuple(sorted(int(j) for j in support))
    if any(not 0 <= j < data.p for j in support):
        raise DataValidationError("support index out of range")
    experiments = tuple(range(data.K)) if experiments is None else tuple(experiments)
    n = data.n_effective
    m = len(support) + 1
    U = np.zeros((data.n, m * len(experiments)))
    H = np.zeros((m * len(experiments),) * 2)
    for b, k in enumerate(experiments):
        e = data.experiments[k]
        s, c = _experiment_pieces(e, state, k)
        X1 = np.column_stack((np.ones(data.n), e.covariates[:, list(support)]))
        U[:, b * m:(b + 1) * m] = X1 * s[:, None]
        H[b * m:(b + 1) * m, b * m:(b + 1) * m] = (X1 * c[:, None]).T @ X1 / n
    V = U.T @ U / n
    return InformationMatrices(H, V, support, experiments, n)


def _checked_factor(A, label):
    """Cholesky factor of a symmetric matrix after a condition-number guard."""
    A = (A + A.T) / 2
    ev = np.linalg.eigvalsh(A)
    if ev[0] <= 0 or ev[-1] / ev[0] > COND_LIMIT:
        raise SingularMatrixError(
            f"{label} (eigenvalues in [{ev[0]:.3g}, {ev[-1]:.3g}])")
    try:
        return scipy.linalg.cho_factor(A)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(label) from exc


def solve_symmetric(A, B, label="matrix singular"):
    return scipy.linalg.cho_solve(_checked_factor(A, label), B)


def godambe(info):
    """Godambe information ``H^T V^{-1} H``."""
    G = info.H.T @ solve_symmetric(info.V, info.H, "V singular on support")
    return (G + G.T) / 2


def sandwich_covariance(info):
    """Estimated covariance ``G^{-1} / n`` of the supported parameters."""
    G = godambe(info)
    return solve_symmetric(G, np.eye(G.shape[0]), "Godambe matrix singular") / info.n_subjects


def sandwich_se(info):
    return np.sqrt(np.diag(sandwich_covariance(info)))
