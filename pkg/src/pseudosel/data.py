"""Multi-experiment datasets, parameter containers and file ingestion.

Layout: ``K`` experiments measured on the same ``n`` subjects, each with its
own ``n x p`` covariate matrix.  Column ``j`` of every experiment measures the
same predictor object, and the ``K`` coefficients of that column form one
penalty group.  All indices are 0-based.
"""
import csv
import json
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DataValidationError

FAMILIES = ("gaussian", "bernoulli")

_DECIMAL = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ExperimentData:
    """One experiment: responses, covariates and observation indicators.

    Unobserved responses are stored as NaN and never enter a computation.
    """

    family: str
    responses: np.ndarray
    covariates: np.ndarray
    observed: np.ndarray = None
    weight: float = 1.0
    noise_variance: float = 1.0
    name: str = ""

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DataValidationError(f"unknown family tag {self.family!r}")
        y = np.asarray(self.responses, dtype=float)
        X = np.asarray(self.covariates, dtype=float)
        if y.ndim != 1 or X.ndim != 2:
            raise DataValidationError("responses must be 1-d and covariates 2-d")
        if X.shape[0] != y.shape[0]:
            raise DataValidationError(
                f"dimension mismatch: {y.shape[0]} responses vs {X.shape[0]} covariate rows")
        obs = np.isfinite(y) if self.observed is None else np.asarray(self.observed, dtype=bool)
        if obs.shape != y.shape:
            raise DataValidationError("observed indicator length differs from responses")
        if not np.all(np.isfinite(y[obs])):
            raise DataValidationError("observed responses must be finite")
        if not np.all(np.isfinite(X)):
            raise DataValidationError("covariates must be finite")
        if self.family == "bernoulli" and not np.all(np.isin(y[obs], (0.0, 1.0))):
            raise DataValidationError(f"non-binary response in bernoulli experiment {self.name!r}")
        if not self.weight > 0:
            raise DataValidationError("experiment weight must be positive")
        if not self.noise_variance > 0:
            raise DataValidationError("noise variance must be positive")
        y = np.where(obs, y, np.nan)
        object.__setattr__(self, "responses", _frozen(y))
        object.__setattr__(self, "covariates", _frozen(X))
        object.__setattr__(self, "observed", _frozen(obs, bool))
        object.__setattr__(self, "weight", float(self.weight))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))

    @property
    def n(self):
        return self.responses.shape[0]

    @property
    def p(self):
        return self.covariates.shape[1]

    @property
    def y_filled(self):
        """Responses with unobserved entries replaced by 0."""
        return np.where(self.observed, self.responses, 0.0)


@dataclass(frozen=True, eq=False)
class MultiExperimentDataset:
    experiments: tuple
    predictor_names: tuple = None
    subject_ids: tuple = None

    def __post_init__(self):
        exps = tuple(self.experiments)
        if len(exps) < 1:
            raise DataValidationError("need at least one experiment")
        n, p = exps[0].n, exps[0].p
        for e in exps:
            if e.n != n or e.p != p:
                raise DataValidationError(
                    f"dimension mismatch across experiments: ({e.n}, {e.p}) vs ({n}, {p})")
        if p < 1:
            raise DataValidationError("need at least one predictor")
        names = self.predictor_names
        names = tuple(f"x{j}" for j in range(p)) if names is None else tuple(map(str, names))
        if len(names) != p:
            raise DataValidationError("predictor_names length differs from covariate count")
        ids = self.subject_ids
        ids = tuple(str(i) for i in range(n)) if ids is None else tuple(map(str, ids))
        if len(ids) != n:
            raise DataValidationError("subject_ids length differs from subject count")
        object.__setattr__(self, "experiments", exps)
        object.__setattr__(self, "predictor_names", names)
        object.__setattr__(self, "subject_ids", ids)

    @property
    def K(self):
        return len(self.experiments)

    @property
    def n(self):
        return self.experiments[0].n

    @property
    def p(self):
        return self.experiments[0].p

    @cached_property
    def n_effective(self):
        """Number of subjects with at least one observed response."""
        any_obs = np.zeros(self.n, dtype=bool)
        for e in self.experiments:
            any_obs |= e.observed
        return int(any_obs.sum())

    def subset(self, experiments):
        """Dataset restricted to the given experiment indices (order kept)."""
        idx = list(experiments)
        return MultiExperimentDataset(
            tuple(self.experiments[k] for k in idx), self.predictor_names, self.subject_ids)

    def zero_state(self):
        return ParameterState(np.zeros((self.K, self.p)), np.zeros(self.K))


@dataclass(frozen=True, eq=False)
class ParameterState:
    """Coefficient matrix (K x p) plus one intercept per experiment."""

    coefficients: np.ndarray
    intercepts: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.coefficients, dtype=float)
        b = np.asarray(self.intercepts, dtype=float)
        if B.ndim != 2 or b.shape != (B.shape[0],):
            raise DataValidationError(
                f"coefficients {B.shape} and intercepts {b.shape} are inconsistent")
        if not (np.all(np.isfinite(B)) and np.all(np.isfinite(b))):
            raise DataValidationError("parameter state has non-finite entries")
        object.__setattr__(self, "coefficients", _frozen(B))
        object.__setattr__(self, "intercepts", _frozen(b))

    @property
    def K(self):
        return self.coefficients.shape[0]

    @property
    def p(self):
        return self.coefficients.shape[1]

    def group_norms(self):
        return np.sqrt(np.sum(self.coefficients ** 2, axis=0))

    def active_set(self):
        return tuple(int(j) for j in np.flatnonzero(self.group_norms() > 0))

    def check_matches(self, data):
        if self.K != data.K or self.p != data.p:
            raise DataValidationError(
                f"parameter shape ({self.K}, {self.p}) does not match data ({data.K}, {data.p})")

    def params_of(self, k):
        """Experiment k's parameter vector, ordered (intercept, coefficients)."""
        return np.concatenate(([self.intercepts[k]], self.coefficients[k]))

    def subset(self, experiments):
        idx = list(experiments)
        return ParameterState(self.coefficients[idx], self.intercepts[idx])


def default_max_support(data):
    """Largest support the selection step evaluates by default (``min(p, n/2)``).

    Near-saturated refits shrink the residuals that the score covariance is
    built from, which drives the effective degrees of freedom toward zero.
    """
    return min(data.p, data.n_effective // 2)


def group_view(state, p):
    """The K coefficients of predictor object ``p`` in experiment order."""
    if not 0 <= p < state.p:
        raise IndexError(f"predictor index {p} out of range for p={state.p}")
    return state.coefficients[:, p].copy()


def group_norm(v):
    return float(np.linalg.norm(np.asarray(v, dtype=float)))


@dataclass(frozen=True, eq=False)
class Standardization:
    """Per-experiment, per-column centering and scaling over observed rows.

    A column that is constant within an experiment keeps scale 1; its
    standardized values are all zero so its coefficient stays at zero.
    """

    center: np.ndarray
    scale: np.ndarray
    design: np.ndarray = field(repr=False)

    def to_standard(self, state):
        B = state.coefficients * self.scale
        b = state.intercepts + np.sum(state.coefficients * self.center, axis=1)
        return ParameterState(B, b)

    def to_original(self, state):
        B = state.coefficients / self.scale
        b = state.intercepts - np.sum(B * self.center, axis=1)
        return ParameterState(B, b)


def standardize(data, enabled=True):
    """Build the standardized K x n x p design (unobserved rows zeroed)."""
    K, n, p = data.K, data.n, data.p
    design = np.zeros((K, n, p))
    center = np.zeros((K, p))
    scale = np.ones((K, p))
    for k, e in enumerate(data.experiments):
        obs = e.observed
        X = e.covariates[obs]
        if enabled and X.shape[0] > 0:
            mu = X.mean(axis=0)
            sd = X.std(axis=0)
            const = sd <= 1e-12 * np.maximum(1.0, np.abs(mu))
            sd = np.where(const, 1.0, sd)
            center[k] = mu
            scale[k] = sd
            Xs = (X - mu) / sd
            Xs[:, const] = 0.0
        else:
            Xs = X
        design[k][obs] = Xs
    design.setflags(write=False)
    return Standardization(_frozen(center), _frozen(scale), design)


# ---------------------------------------------------------------------------
# File ingestion

def _parse_float(cell, what):
    cell = cell.strip()
    if not _DECIMAL.match(cell):
        raise DataValidationError(f"cannot parse {what} value {cell!r} as a decimal number")
    return float(cell)


def _read_experiment_csv(path, id_col, response_col, predictor_cols):
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = [c for c in [id_col, response_col, *predictor_cols] if c not in header]
            if missing:
                raise DataValidationError(f"{path}: missing columns {missing}")
            rows = {}
            for line, row in enumerate(reader, start=2):
                sid = row[id_col].strip()
                if sid in rows:
                    raise DataValidationError(f"{path}:{line}: duplicate subject id {sid!r}")
                cell = (row[response_col] or "").strip()
                y = np.nan if cell == "" else _parse_float(cell, f"{path}:{line} response")
                x = []
                for c in predictor_cols:
                    v = (row[c] or "").strip()
                    if v == "":
                        raise DataValidationError(f"{path}:{line}: missing covariate {c!r}")
                    x.append(_parse_float(v, f"{path}:{line} covariate"))
                rows[sid] = (y, x)
    except OSError as exc:
        raise DataValidationError(f"unreadable file {path}: {exc}") from exc
    return rows


def load_dataset(manifest_path):
    """Load a JSON manifest and its per-experiment CSV files.

    Subjects are aligned by the id column; a subject absent from an
    experiment's file, or present with an empty response cell, is treated as
    unobserved in that experiment.
    """
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except OSError as exc:
        raise DataValidationError(f"unreadable file {manifest_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataValidationError(f"manifest {manifest_path} is not valid JSON: {exc}") from exc
    try:
        id_col = manifest["subject_id_column"]
        predictors = list(manifest["predictor_columns"])
        specs = list(manifest["experiments"])
    except (KeyError, TypeError) as exc:
        raise DataValidationError(f"manifest missing field {exc}") from exc
    if not specs:
        raise DataValidationError("manifest lists no experiments")
    default_resp = manifest.get("response_column", "response")

    tables = []
    order = []
    seen = set()
    for spec in specs:
        if spec.get("family") not in FAMILIES:
            raise DataValidationError(f"unknown family tag {spec.get('family')!r}")
        path = manifest_path.parent / spec["file"]
        rows = _read_experiment_csv(path, id_col, spec.get("response_column", default_resp),
                                    predictors)
        tables.append(rows)
        for sid in rows:
            if sid not in seen:
                seen.add(sid)
                order.append(sid)

    n, p = len(order), len(predictors)
    experiments = []
    for spec, rows in zip(specs, tables):
        y = np.full(n, np.nan)
        X = np.zeros((n, p))
        for i, sid in enumerate(order):
            if sid in rows:
                y[i], X[i] = rows[sid]
        experiments.append(ExperimentData(
            family=spec["family"], responses=y, covariates=X, observed=np.isfinite(y),
            weight=spec.get("weight", 1.0), noise_variance=spec.get("noise_variance", 1.0),
            name=spec.get("name", Path(spec["file"]).stem)))
    return MultiExperimentDataset(tuple(experiments), tuple(predictors), tuple(order))


def write_dataset(data, directory, id_column="id"):
    """Write ``data`` as manifest.json plus one CSV per experiment.

    Floats are written with ``repr`` so that loading the files back gives the
    same arrays bit for bit.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    specs = []
    for k, e in enumerate(data.experiments):
        fname = f"experiment_{k + 1}.csv"
        with open(directory / fname, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([id_column, "response", *data.predictor_names])
            for i, sid in enumerate(data.subject_ids):
                y = repr(float(e.responses[i])) if e.observed[i] else ""
                w.writerow([sid, y, *(repr(float(v)) for v in e.covariates[i])])
        specs.append({"file": fname, "family": e.family, "weight": e.weight,
                      "noise_variance": e.noise_variance, "name": e.name or f"experiment_{k + 1}"})
    manifest = {"subject_id_column": id_column, "response_column": "response",
                "predictor_columns": list(data.predictor_names), "experiments": specs}
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path
