"""Group descent for the penalized pseudo-loglikelihood over a lambda path.

The objective maximized is ``l_I(theta)/n - sum_p penalty(||theta^(p)||)``
with the penalty applied to coefficients of the internally standardized
covariates.  Each group step minimizes an isotropic quadratic majorizer of
``-l_I/n`` in that block, so the objective never decreases across sweeps.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kern
from .data import ParameterState, default_max_support, standardize
from .errors import DataValidationError, DivergenceError, NumericalError
from .penalty import PENALTIES, PenaltySpec

log = logging.getLogger(__name__)

KKT_FLOOR = 1e-8


@dataclass(frozen=True)
class FitControls:
    max_iter: int = 1000
    tol: float = 1e-7
    kkt_tol: float = None       # default: max(1e-4 * lambda, KKT_FLOOR)
    standardize: bool = True

    def __post_init__(self):
        if self.max_iter < 1:
            raise DataValidationError("max_iter must be positive")
        if not self.tol > 0:
            raise DataValidationError("tol must be positive")
        if self.kkt_tol is not None and not self.kkt_tol > 0:
            raise DataValidationError("kkt_tol must be positive")

    def kkt_tol_for(self, lam):
        if self.kkt_tol is not None:
            return self.kkt_tol
        return max(1e-4 * lam, KKT_FLOOR)


@dataclass(frozen=True)
class PathGrid:
    n_lambda: int = 100
    min_ratio: float = 1e-3
    max_groups: object = None   # stop once more groups are active; "auto" = min(p, n/2)

    def __post_init__(self):
        if self.n_lambda < 1:
            raise DataValidationError("n_lambda must be positive")
        if not 0 < self.min_ratio < 1:
            raise DataValidationError("min_ratio must lie in (0, 1)")
        if self.max_groups not in (None, "auto") and not (
                isinstance(self.max_groups, int) and self.max_groups >= 0):
            raise DataValidationError("max_groups must be nonnegative")


@dataclass(frozen=True, eq=False)
class FitResult:
    theta: ParameterState
    lam: float
    active_set: tuple
    objective: float
    iterations: int
    converged: bool
    kkt_violation: float
    penalty: PenaltySpec = None
    objective_trace: np.ndarray = field(default=None, repr=False)
    theta_standard: ParameterState = field(default=None, repr=False)
    error: str = None


@dataclass(frozen=True, eq=False)
class SolutionPath:
    lambdas: np.ndarray
    fits: tuple
    baseline: ParameterState
    penalty_family: str = "scad"
    a: float = 3.7
    stopped_early: bool = False

    @property
    def errors(self):
        return {i: f.error for i, f in enumerate(self.fits) if f.error is not None}

    def active_sizes(self):
        return np.array([len(f.active_set) for f in self.fits])


class Problem:
    """Standardized arrays and majorization constants for one dataset."""

    def __init__(self, data, standardize_covariates=True):
        self.data = data
        self.std = standardize(data, enabled=standardize_covariates)
        K, n, p = data.K, data.n, data.p
        self.X = np.ascontiguousarray(np.transpose(self.std.design, (0, 2, 1)))
        self.y = np.ascontiguousarray(np.array([e.y_filled for e in data.experiments]))
        self.zw = np.array([e.weight * e.observed for e in data.experiments], dtype=float)
        self.sig2 = np.array([e.noise_variance for e in data.experiments])
        self.fam = np.array([0 if e.family == "gaussian" else 1 for e in data.experiments],
                            dtype=np.int64)
        self.inv_n = 1.0 / data.n_effective
        c = np.where(self.fam == 0, 1.0 / self.sig2, 0.25)
        # block Hessian of -l_I/n for group j is diagonal over k and bounded by
        # these per-experiment values
        col_curv = np.einsum("kjn,kn->kj", self.X ** 2, self.zw) * (c * self.inv_n)[:, None]
        self.v_raw = col_curv.max(axis=0) if K else np.zeros(p)
        self.vb = (self.zw.sum(axis=1) * c * self.inv_n)
        if np.any(self.vb <= 0):
            raise DataValidationError("an experiment has no observed responses")

    def curvature(self, penalty):
        v = np.maximum(self.v_raw, 1e-12)
        if penalty.family == "scad":
            v = np.maximum(v, 1.0 / (penalty.a - 1.0) + 1e-8)
        return v

    def intercept_only(self):
        """Intercept-only MLE on the standardized scale (all coefficients 0)."""
        b = np.zeros(self.data.K)
        for k, e in enumerate(self.data.experiments):
            ybar = float(np.mean(e.responses[e.observed]))
            if e.family == "gaussian":
                b[k] = ybar
            else:
                if ybar <= 0.0 or ybar >= 1.0:
                    raise DataValidationError(
                        f"bernoulli experiment {e.name or k!r} has a constant response")
                b[k] = np.log(ybar / (1 - ybar))
        return ParameterState(np.zeros((self.data.K, self.data.p)), b)

    def work_arrays(self, state_std):
        beta = np.array(state_std.coefficients, dtype=float, order="C")
        b = np.array(state_std.intercepts, dtype=float)
        eta = np.zeros_like(self.y)
        resid = np.zeros_like(self.y)
        kern.refresh(self.X, self.y, self.zw, self.sig2, self.fam, beta, b, eta, resid)
        return beta, b, eta, resid

    def gradients(self, state_std):
        _, _, _, resid = self.work_arrays(state_std)
        return kern.gradients(self.X, resid, self.inv_n)

    def kkt(self, state_std, penalty):
        gb, G = self.gradients(state_std)
        return float(kern.kkt_violation(gb, G, np.asarray(state_std.coefficients, dtype=float),
                                        penalty.lam, penalty.a, PENALTIES.index(penalty.family)))

    def objective(self, state_std, penalty):
        beta, _, eta, _ = self.work_arrays(state_std)
        return float(kern.objective(self.y, self.zw, self.sig2, self.fam, beta, eta, self.inv_n,
                                    penalty.lam, penalty.a, PENALTIES.index(penalty.family)))


def _problem(data, controls):
    return Problem(data, controls.standardize)


def lambda_max(data, standardize_covariates=True, problem=None):
    """Smallest lambda at which the all-zero coefficient solution is stationary."""
    prob = problem or Problem(data, standardize_covariates)
    gb, G = prob.gradients(prob.intercept_only())
    return float(np.max(np.sqrt(np.sum(G ** 2, axis=0))))


def penalized_objective(data, theta, penalty, standardize_covariates=True):
    """``Q(theta)/n`` evaluated with the penalty on the standardized scale."""
    prob = Problem(data, standardize_covariates)
    return prob.objective(prob.std.to_standard(theta), penalty)


def kkt_check(data, theta, penalty, standardize_covariates=True):
    """Maximum KKT violation of ``theta`` (original scale) on the standardized scale."""
    prob = Problem(data, standardize_covariates)
    return prob.kkt(prob.std.to_standard(theta), penalty)


def _solve(prob, penalty, start_std, controls):
    """Run group descent from a standardized starting state."""
    lam, a = penalty.lam, penalty.a
    code = PENALTIES.index(penalty.family)
    v = prob.curvature(penalty)
    kkt_tol = controls.kkt_tol_for(lam)
    beta, b, eta, resid = prob.work_arrays(start_std)
    args = (prob.X, prob.y, prob.zw, prob.sig2, prob.fam, v, prob.vb, beta, b, eta, resid,
            prob.inv_n, lam, a, code)
    all_groups = np.arange(prob.data.p)

    def obj():
        val = kern.objective(prob.y, prob.zw, prob.sig2, prob.fam, beta, eta, prob.inv_n,
                             lam, a, code)
        if not np.isfinite(val):
            raise DivergenceError(f"non-finite objective at lambda={lam:g}")
        return val

    trace = [obj()]
    it = 0
    converged = False
    kkt = np.inf
    while it < controls.max_iter:
        kern.sweep(all_groups, *args)
        it += 1
        trace.append(obj())
        active = np.flatnonzero(np.any(beta != 0.0, axis=0))
        while it < controls.max_iter:
            step = kern.sweep(active, *args)
            it += 1
            trace.append(obj())
            change = abs(trace[-1] - trace[-2])
            if change <= controls.tol * max(1.0, abs(trace[-1])) and step <= 0.5 * kkt_tol:
                break
            grown = np.flatnonzero(np.any(beta != 0.0, axis=0))
            if grown.shape[0] != active.shape[0]:
                active = grown
        kern.refresh(prob.X, prob.y, prob.zw, prob.sig2, prob.fam, beta, b, eta, resid)
        gb, G = kern.gradients(prob.X, resid, prob.inv_n)
        kkt = float(kern.kkt_violation(gb, G, beta, lam, a, code))
        if kkt <= kkt_tol:
            converged = True
            break
    state_std = ParameterState(beta, b)
    return state_std, np.array(trace), it, converged, kkt


def _result(prob, penalty, state_std, trace, it, converged, kkt):
    theta = prob.std.to_original(state_std)
    active = tuple(int(j) for j in np.flatnonzero(state_std.group_norms() > 0))
    return FitResult(theta=theta, lam=penalty.lam, active_set=active, objective=float(trace[-1]),
                     iterations=it, converged=converged, kkt_violation=kkt, penalty=penalty,
                     objective_trace=trace, theta_standard=state_std)


def fit(data, penalty, init=None, controls=None, problem=None):
    """Maximize the penalized objective at a single lambda.

    ``init`` is on the original covariate scale; the default start is zero
    coefficients with intercept-only intercepts.
    """
    controls = controls or FitControls()
    prob = problem or _problem(data, controls)
    if init is None:
        start = prob.intercept_only()
    else:
        init.check_matches(data)
        start = prob.std.to_standard(init)
    state_std, trace, it, converged, kkt = _solve(prob, penalty, start, controls)
    if not converged:
        log.warning("fit at lambda=%g stopped after %d sweeps (kkt %.3g)", penalty.lam, it, kkt)
    return _result(prob, penalty, state_std, trace, it, converged, kkt)


def lambda_grid(lmax, grid):
    if grid.n_lambda == 1:
        return np.array([lmax])
    return np.exp(np.linspace(np.log(lmax), np.log(lmax * grid.min_ratio), grid.n_lambda))


def fit_path(data, family="scad", a=3.7, grid=None, controls=None):
    """Warm-started fits over a log-spaced decreasing lambda grid."""
    grid = grid or PathGrid()
    controls = controls or FitControls()
    prob = _problem(data, controls)
    baseline_std = prob.intercept_only()
    lmax = lambda_max(data, problem=prob)
    if not lmax > 0:
        raise DataValidationError("lambda_max is zero: no predictor has a nonzero score")
    lambdas = lambda_grid(lmax, grid)
    max_groups = default_max_support(data) if grid.max_groups == "auto" else grid.max_groups
    fits = []
    state = baseline_std
    stopped = False
    for lam in lambdas:
        pen = PenaltySpec(family, float(lam), a)
        try:
            res = _result(prob, pen, *_solve(prob, pen, state, controls))
        except NumericalError as exc:
            log.warning("path fit failed at lambda=%g: %s", lam, exc)
            res = FitResult(theta=prob.std.to_original(state), lam=float(lam),
                            active_set=state.active_set(), objective=np.nan, iterations=0,
                            converged=False, kkt_violation=np.inf, penalty=pen,
                            theta_standard=state, error=str(exc))
        fits.append(res)
        state = res.theta_standard
        if max_groups is not None and len(res.active_set) > max_groups:
            stopped = True
            break
    lambdas = lambdas[:len(fits)]
    return SolutionPath(lambdas=lambdas, fits=tuple(fits),
                        baseline=prob.std.to_original(baseline_std),
                        penalty_family=family, a=a, stopped_early=stopped)
