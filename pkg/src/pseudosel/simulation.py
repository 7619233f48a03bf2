"""Simulation designs, selection metrics and the replicate study driver.

RNG scheme: every random draw comes from
``default_rng(SeedSequence(seed, spawn_key=(replicate, slot, purpose)))``
where ``slot`` is the experiment index (``K`` for draws shared by all
experiments) and ``purpose`` is one of the ``_COVARIATES``/``_COEFS``/
``_RESPONSES`` codes.  Instances are therefore reproducible per replicate no
matter which worker runs them or in which order.
"""
import logging
import time
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .data import ExperimentData, MultiExperimentDataset, ParameterState
from .errors import DataValidationError, PseudoselError, StudyError
from .optimizer import FitControls, PathGrid, fit_path
from .selection import GammaSpec, evaluate_supports, select_model

log = logging.getLogger(__name__)

SCENARIOS = ("s1", "s2", "s3")
_COVARIATES, _COEFS, _RESPONSES = 0, 1, 2
MAX_FAILURE_RATE = 0.2


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "s1"
    n: int = 500
    p: int = 200
    q: int = 50
    K: int = 4
    rho_response: float = 0.7
    rho_block: float = 0.2
    block_size: int = None          # s1: 50, s2: 200
    coef_low: float = 0.05
    coef_high: float = 0.5
    seed: int = 0
    replicates: int = 1

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise DataValidationError(f"unknown scenario {self.scenario!r}")
        if self.block_size is None:
            object.__setattr__(self, "block_size", {"s1": 50, "s2": 200, "s3": 1}[self.scenario])
        if self.n < 2 or self.p < 1 or self.K < 1:
            raise DataValidationError("need n >= 2, p >= 1, K >= 1")
        if not 0 <= self.q <= self.p:
            raise DataValidationError("q must lie in [0, p]")
        if not abs(self.rho_response) < 1 or self.rho_response < -1 / max(self.K - 1, 1):
            raise DataValidationError("rho_response gives a non positive definite covariance")
        if not 0 <= self.rho_block < 1:
            raise DataValidationError("rho_block must lie in [0, 1)")
        if not 0 <= self.coef_low <= self.coef_high:
            raise DataValidationError("need 0 <= coef_low <= coef_high")
        if self.scenario == "s1" and self.p % self.block_size:
            raise DataValidationError(f"p={self.p} is not a multiple of block_size={self.block_size}")
        if self.scenario == "s2" and not self.q <= self.block_size <= self.p:
            raise DataValidationError("s2 needs q <= block_size <= p")
        if self.scenario == "s3" and self.K < 2:
            raise DataValidationError("s3 needs at least two experiments")
        if self.replicates < 1:
            raise DataValidationError("replicates must be positive")

    @property
    def binary_experiments(self):
        """Experiments observed as dichotomized latent responses (s3 only)."""
        if self.scenario != "s3":
            return ()
        return tuple(range(self.K - self.K // 2, self.K))


@dataclass(frozen=True, eq=False)
class SimulatedInstance:
    dataset: MultiExperimentDataset
    true_coefficients: ParameterState
    true_support: tuple


def _rng(seed, replicate, slot, purpose):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(replicate, slot, purpose)))


def equicorrelated(rng, n, p, rho, block_size):
    """Blocks of ``block_size`` columns with unit variance and correlation ``rho``."""
    nblocks = -(-p // block_size)
    shared = rng.standard_normal((n, nblocks))
    idio = rng.standard_normal((n, p))
    block_of = np.arange(p) // block_size
    return np.sqrt(rho) * shared[:, block_of] + np.sqrt(1 - rho) * idio


def _covariates(cfg, rng):
    if cfg.scenario == "s1":
        return equicorrelated(rng, cfg.n, cfg.p, cfg.rho_block, cfg.block_size)
    if cfg.scenario == "s2":
        X = rng.standard_normal((cfg.n, cfg.p))
        X[:, :cfg.block_size] = equicorrelated(rng, cfg.n, cfg.block_size, cfg.rho_block,
                                               cfg.block_size)
        return X
    return rng.standard_normal((cfg.n, cfg.p))


def compound_symmetric(K, rho):
    return (1 - rho) * np.eye(K) + rho * np.ones((K, K))


def simulate(config, replicate=0):
    cfg = config
    K, n, p, q = cfg.K, cfg.n, cfg.p, cfg.q
    if cfg.scenario == "s3":
        shared = _covariates(cfg, _rng(cfg.seed, replicate, K, _COVARIATES))
        Xs = [shared] * K
    else:
        Xs = [_covariates(cfg, _rng(cfg.seed, replicate, k, _COVARIATES)) for k in range(K)]
    B = np.zeros((K, p))
    B[:, :q] = _rng(cfg.seed, replicate, K, _COEFS).uniform(cfg.coef_low, cfg.coef_high, (K, q))
    L = np.linalg.cholesky(compound_symmetric(K, cfg.rho_response))
    noise = _rng(cfg.seed, replicate, K, _RESPONSES).standard_normal((n, K)) @ L.T
    latent = np.column_stack([Xs[k] @ B[k] for k in range(K)]) + noise
    exps = []
    for k in range(K):
        if k in cfg.binary_experiments:
            exps.append(ExperimentData("bernoulli", (latent[:, k] > 0).astype(float), Xs[k],
                                       name=f"experiment_{k + 1}"))
        else:
            exps.append(ExperimentData("gaussian", latent[:, k], Xs[k], name=f"experiment_{k + 1}"))
    names = tuple(f"x{j}" for j in range(p))
    data = MultiExperimentDataset(tuple(exps), names)
    return SimulatedInstance(data, ParameterState(B, np.zeros(K)), tuple(range(q)))


def evaluate_selection(selected, estimate, truth, experiments=None):
    """psr, fdr and sse of a selected support and coefficient estimate.

    ``experiments`` restricts the truth to the experiments the estimate
    covers (single-experiment analyses).
    """
    true_coefs = truth.true_coefficients.coefficients
    if experiments is not None:
        true_coefs = true_coefs[list(experiments)]
    est = np.asarray(estimate.coefficients if isinstance(estimate, ParameterState) else estimate)
    if est.shape != true_coefs.shape:
        raise DataValidationError(f"estimate shape {est.shape} vs truth {true_coefs.shape}")
    sel = set(int(j) for j in selected)
    true = set(truth.true_support)
    psr = len(sel & true) / len(true) if true else 1.0
    fdr = len(sel - true) / max(len(sel), 1)
    sse = float(np.sum((est - true_coefs) ** 2))
    return {"psr": psr, "fdr": fdr, "sse": sse}


# ---------------------------------------------------------------------------
# Study driver

def parse_method(method):
    """``"integration"`` or ``"single:k"`` (k 1-based) -> experiment indices or None."""
    if method == "integration":
        return None
    if method.startswith("single:"):
        try:
            k = int(method.split(":", 1)[1])
        except ValueError:
            raise DataValidationError(f"bad method {method!r}") from None
        if k < 1:
            raise DataValidationError(f"bad method {method!r}")
        return (k - 1,)
    raise DataValidationError(f"unknown method {method!r}")


@dataclass(frozen=True)
class StudySettings:
    methods: tuple = ("integration",)
    penalties: tuple = ("scad",)
    gammas: tuple = (GammaSpec(),)
    a: float = 3.7
    grid: PathGrid = field(default_factory=lambda: PathGrid(max_groups="auto"))
    controls: FitControls = field(default_factory=FitControls)
    refit: bool = True
    max_support: object = "auto"


def _replicate(cfg, settings, replicate):
    inst = simulate(cfg, replicate)
    rows = []
    for method in settings.methods:
        exps = parse_method(method)
        if exps is not None and exps[0] >= cfg.K:
            raise DataValidationError(f"{method} refers to a missing experiment")
        data = inst.dataset if exps is None else inst.dataset.subset(exps)
        for pen in settings.penalties:
            t0 = time.perf_counter()
            base = dict(scenario=cfg.scenario, n=cfg.n, p=cfg.p, penalty=pen, method=method,
                        replicate=replicate)
            try:
                path = fit_path(data, pen, settings.a, settings.grid, settings.controls)
                cands = evaluate_supports(data, path, refit=settings.refit,
                                          max_support=settings.max_support)
                reports = [select_model(data, path, g, candidates=cands) for g in settings.gammas]
            except PseudoselError as exc:
                ms = (time.perf_counter() - t0) * 1e3
                for g in settings.gammas:
                    rows.append(dict(base, c=g.c, psr=np.nan, fdr=np.nan, sse=np.nan,
                                     chosen_support_size=-1, runtime_ms=ms, error=str(exc)))
                continue
            ms = (time.perf_counter() - t0) * 1e3
            for g, rep in zip(settings.gammas, reports):
                fitres = path.fits[rep.chosen_index]
                m = evaluate_selection(fitres.active_set, fitres.theta, inst, exps)
                rows.append(dict(base, c=g.c, **m, chosen_support_size=len(fitres.active_set),
                                 runtime_ms=ms, error=""))
    return rows


REPLICATE_COLUMNS = ["scenario", "n", "p", "c", "penalty", "method", "replicate", "psr", "fdr",
                     "sse", "chosen_support_size", "runtime_ms", "error"]
GROUP_COLUMNS = ["scenario", "n", "p", "c", "penalty", "method"]


@dataclass(frozen=True, eq=False)
class StudyResult:
    replicates: pd.DataFrame
    aggregate: pd.DataFrame
    n_failed: int

    @property
    def partial(self):
        return self.n_failed > 0


def aggregate(table):
    ok = table[table["error"] == ""]
    g = ok.groupby(GROUP_COLUMNS, sort=False)
    out = g[["psr", "fdr", "sse", "chosen_support_size"]].agg(["mean", "std"])
    out.columns = [f"{a}_{b.replace('std', 'sd')}" for a, b in out.columns]
    out["replicates_ok"] = g.size()
    return out.reset_index()


def run_study(config, settings=None, jobs=1):
    """Simulate, fit, select and score every replicate; aggregate by method."""
    settings = settings or StudySettings()
    for m in settings.methods:
        parse_method(m)
    if jobs == 1:
        per_rep = [_replicate(config, settings, r) for r in range(config.replicates)]
    else:
        per_rep = Parallel(n_jobs=jobs)(
            delayed(_replicate)(config, settings, r) for r in range(config.replicates))
    table = pd.DataFrame([row for rows in per_rep for row in rows], columns=REPLICATE_COLUMNS)
    failed_reps = table.loc[table["error"] != "", "replicate"].nunique()
    if failed_reps > MAX_FAILURE_RATE * config.replicates:
        raise StudyError(f"{failed_reps} of {config.replicates} replicates failed: "
                         + "; ".join(table.loc[table["error"] != "", "error"].unique()[:3]))
    return StudyResult(table, aggregate(table), int(failed_reps))

