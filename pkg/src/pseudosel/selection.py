"""Pseudolikelihood BIC and model selection along a solution path.

``pseu_bic(s) = -2 l_I(theta_s) + d_eff(s) * gamma_n`` where ``theta_s`` is
the unpenalized maximum pseudolikelihood estimate on support ``s`` and
``d_eff = tr(H^{-1} V)``.  Since the Hessian is block diagonal across
experiments, the trace is computed one experiment block at a time.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import ParameterState, default_max_support, standardize
from .errors import (DataValidationError, NumericalError, SelectionError, SeparationError,
                     SingularMatrixError)
from .pseudolik import information_matrices, pseudo_loglik, solve_symmetric

GAMMA_FORMS = ("c_log_p", "c_log_p_loglog_p")


@dataclass(frozen=True)
class GammaSpec:
    c: float = 1.0
    form: str = "c_log_p"

    def __post_init__(self):
        if not self.c > 0:
            raise DataValidationError("c must be positive")
        if self.form not in GAMMA_FORMS:
            raise DataValidationError(f"unknown gamma form {self.form!r}")

    def value(self, p):
        if p < 2:
            raise DataValidationError("gamma_n needs at least two predictors")
        if self.form == "c_log_p":
            return self.c * np.log(p)
        return self.c * (np.log(p) + np.log(np.log(p)))


def effective_df(info):
    """``tr(H^{-1} V)``."""
    X = solve_symmetric(info.H, info.V, "support too large / collinear: H singular")
    return float(np.trace(X))


def _refit_gaussian(X1, y):
    coef, *_ = np.linalg.lstsq(X1, y, rcond=None)
    return coef


def _refit_bernoulli(X1, y, name, max_iter=100, tol=1e-10):
    coef = np.zeros(X1.shape[1])

    def ll(c):
        eta = X1 @ c
        return float(np.sum(y * eta - np.logaddexp(0.0, eta)))

    cur = ll(coef)
    for _ in range(max_iter):
        eta = X1 @ coef
        mu = expit(eta)
        grad = X1.T @ (y - mu)
        W = mu * (1 - mu)
        try:
            step = np.linalg.solve((X1 * W[:, None]).T @ X1, grad)
        except np.linalg.LinAlgError:
            raise SeparationError(f"refit diverged in experiment {name!r}", name) from None
        t = 1.0
        while True:
            new = ll(coef + t * step)
            if new >= cur - 1e-12 or t < 1e-10:
                break
            t /= 2
        coef = coef + t * step
        cur = new
        if np.max(np.abs(X1 @ coef)) > 35:
            raise SeparationError(
                f"refit diverged in experiment {name!r} (perfect or quasi separation)", name)
        if np.max(np.abs(t * step)) < tol:
            return coef
    raise SeparationError(f"refit did not converge in experiment {name!r}", name)


def refit(data, support):
    """Unpenalized pseudolikelihood MLE restricted to ``support``.

    The pseudo-loglikelihood is separable, so each experiment is fitted on its
    own observed rows.
    """
    support = sorted(int(j) for j in support)
    std = standardize(data)
    B = np.zeros((data.K, data.p))
    b = np.zeros(data.K)
    for k, e in enumerate(data.experiments):
        obs = e.observed
        Xs = std.design[k][obs][:, support]
        X1 = np.column_stack((np.ones(Xs.shape[0]), Xs))
        if X1.shape[0] <= X1.shape[1] or np.linalg.matrix_rank(X1) < X1.shape[1]:
            raise SingularMatrixError(
                f"support too large / collinear for experiment {e.name or k!r}")
        y = e.responses[obs]
        coef = (_refit_gaussian(X1, y) if e.family == "gaussian"
                else _refit_bernoulli(X1, y, e.name or str(k)))
        b[k] = coef[0]
        B[k, support] = coef[1:]
    return std.to_original(ParameterState(B, b))


@dataclass(frozen=True, eq=False)
class Candidate:
    """A support with its fitted log pseudolikelihood and effective df."""

    support: tuple
    theta: ParameterState = None
    loglik: float = np.nan
    d_eff: float = np.nan
    error: str = None

    def bic(self, gamma, p):
        if self.error is not None:
            return np.inf
        return -2 * self.loglik + self.d_eff * gamma.value(p)


def evaluate_candidate(data, support, refit_support=True, theta=None):
    support = tuple(sorted(int(j) for j in support))
    if refit_support:
        theta = refit(data, support)
    elif theta is None:
        raise DataValidationError("refit=False needs the penalized estimate")
    ll = pseudo_loglik(data, theta)
    d_eff = sum(effective_df(information_matrices(data, theta, support, experiments=(k,)))
                for k in range(data.K))
    return Candidate(support, theta, ll, d_eff)


@dataclass(frozen=True)
class PseuBIC:
    pseu_bic: float
    refit_loglik: float
    d_eff: float


def pseu_bic(data, support, gamma_spec=None, refit=True, theta=None):
    gamma_spec = gamma_spec or GammaSpec()
    cand = evaluate_candidate(data, support, refit, theta)
    return PseuBIC(cand.bic(gamma_spec, data.p), cand.loglik, cand.d_eff)


def evaluate_supports(data, path, refit=True, max_support="auto"):
    """Evaluate each distinct active set on the path once.

    Returns a dict ``support -> Candidate``.  Supports larger than
    ``max_support`` are recorded with an error and never chosen.
    """
    if max_support == "auto":
        max_support = default_max_support(data)
    cands = {}
    for f in path.fits:
        if f.error is not None:
            continue
        s = tuple(f.active_set)
        if s in cands and (refit or cands[s].error is None):
            continue
        if max_support is not None and len(s) > max_support:
            cands[s] = Candidate(s, error=f"support size {len(s)} exceeds max_support")
            continue
        try:
            cands[s] = evaluate_candidate(data, s, refit, None if refit else f.theta)
        except NumericalError as exc:
            cands[s] = Candidate(s, error=str(exc))
    return cands


@dataclass(frozen=True)
class SelectionRecord:
    lam: float
    active_set: tuple
    refit_loglik: float
    d_eff: float
    pseu_bic: float
    error: str = None


@dataclass(frozen=True, eq=False)
class SelectionReport:
    records: tuple
    chosen_index: int
    gamma_spec: GammaSpec
    theta: ParameterState        # estimate at which the chosen criterion was evaluated

    @property
    def chosen(self):
        return self.records[self.chosen_index]


def select_model(data, path, gamma_spec=None, refit=True, max_support="auto", candidates=None):
    """Choose the path model minimizing pseu-BIC.

    Ties go to the smaller support, then to the larger lambda.
    """
    gamma_spec = gamma_spec or GammaSpec()
    if not path.fits:
        raise DataValidationError("empty solution path")
    if candidates is None:
        candidates = evaluate_supports(data, path, refit, max_support)
    records = []
    for i, f in enumerate(path.fits):
        if f.error is not None:
            records.append(SelectionRecord(f.lam, f.active_set, np.nan, np.nan, np.inf, f.error))
            continue
        c = candidates[tuple(f.active_set)]
        records.append(SelectionRecord(f.lam, f.active_set, c.loglik, c.d_eff,
                                       c.bic(gamma_spec, data.p), c.error))
    keys = [(r.pseu_bic, len(r.active_set), i) for i, r in enumerate(records)]
    best = min(keys)
    if not np.isfinite(best[0]):
        raise SelectionError("every candidate support failed",
                             {i: r.error for i, r in enumerate(records)})
    idx = best[2]
    cand = candidates[tuple(records[idx].active_set)]
    return SelectionReport(tuple(records), idx, gamma_spec, cand.theta)
