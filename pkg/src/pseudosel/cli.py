"""Command-line interface: ``pseudosel {fit,path,select,simulate,evaluate}``.

Every run writes ``summary.json`` holding the full effective configuration
and deterministic results, plus ``run_info.json`` with wall time.  Timing is
kept out of every other file so reruns are byte-identical.  ``--from-summary``
replays the configuration stored in a previous summary.

Exit codes: 0 success, 1 validation or I/O error, 2 numerical failure,
3 partial study (some, but at most 20%, of replicates failed).
"""
import argparse
import csv
import json
import os
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .data import ParameterState, load_dataset, write_dataset
from .errors import DataValidationError, NumericalError, PseudoselError
from .optimizer import FitControls, PathGrid, fit, fit_path
from .penalty import PENALTIES, PenaltySpec
from .pseudolik import information_matrices, sandwich_se
from .selection import GAMMA_FORMS, GammaSpec, evaluate_supports, select_model
from .simulation import (SCENARIOS, ScenarioConfig, SimulatedInstance, StudySettings,
                         evaluate_selection, parse_method, run_study, simulate)

OUT_ENV = "PSEUDOSEL_OUT"
DEFAULT_OUT = "pseudosel_out"
EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 1, 2, 3
TIMING_COLUMNS = ["runtime_ms"]
# flags that do not change results and are therefore left out of the summary
_UNRECORDED = ("out", "from_summary", "func", "jobs")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise DataValidationError(message)


def _float_list(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _str_list(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _max_groups(text):
    if text in ("auto", "none"):
        return text
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("--max-groups takes auto, none or an integer")


def _solver_flags(p, path=True):
    p.add_argument("--penalty", choices=PENALTIES, default="scad")
    p.add_argument("--scad-a", type=float, default=3.7)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--kkt-tol", type=float, default=None)
    p.add_argument("--no-standardize", action="store_true")
    if path:
        p.add_argument("--n-lambda", type=int, default=100)
        p.add_argument("--min-ratio", type=float, default=1e-3)
        p.add_argument("--max-groups", type=_max_groups, default="auto",
                       help="stop the path once more groups are active (auto = min(p, n/2))")


def _selection_flags(p):
    p.add_argument("--c", type=_float_list, default=[1.0],
                   help="comma-separated gamma multipliers")
    p.add_argument("--gamma-form", choices=GAMMA_FORMS, default="c_log_p")
    p.add_argument("--no-refit", action="store_true",
                   help="evaluate pseu-BIC at the penalized estimate (approximation)")


def build_parser():
    parser = _Parser(prog="pseudosel", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--out", default=None,
                       help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
        p.add_argument("--from-summary", default=None,
                       help="rerun with the configuration stored in a summary.json")
        p.set_defaults(func=func)
        return p

    p = command("fit", cmd_fit, "fit at a single lambda")
    p.add_argument("--manifest")
    p.add_argument("--lambda", dest="lam", type=float)
    _solver_flags(p, path=False)

    p = command("path", cmd_path, "fit the warm-started lambda path")
    p.add_argument("--manifest")
    _solver_flags(p)

    p = command("select", cmd_select, "fit the path and choose a model by pseu-BIC")
    p.add_argument("--manifest")
    _solver_flags(p)
    _selection_flags(p)

    p = command("simulate", cmd_simulate, "run a replicated simulation study")
    p.add_argument("--scenario", choices=SCENARIOS, default="s1")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--p", type=int, default=200)
    p.add_argument("--q", type=int, default=50)
    p.add_argument("--K", type=int, default=4)
    p.add_argument("--rho-response", type=float, default=0.7)
    p.add_argument("--rho-block", type=float, default=0.2)
    p.add_argument("--block-size", type=int, default=None)
    p.add_argument("--coef-low", type=float, default=0.05)
    p.add_argument("--coef-high", type=float, default=0.5)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--methods", type=_str_list, default=["integration"],
                   help="comma-separated: integration, single:k (k 1-based)")
    p.add_argument("--penalties", type=_str_list, default=None,
                   help="comma-separated penalties to compare (default: --penalty)")
    p.add_argument("--export-data", action="store_true",
                   help="also write replicate 0 as manifest + CSVs and its true coefficients")
    _solver_flags(p)
    _selection_flags(p)

    p = command("evaluate", cmd_evaluate, "score selected coefficients against a truth file")
    p.add_argument("--coefficients", help="coefficients.csv from fit or select")
    p.add_argument("--truth", help="true_coefficients.csv from simulate --export-data")
    return parser


# ---------------------------------------------------------------------------
# configuration helpers

def _controls(args):
    return FitControls(max_iter=args.max_iter, tol=args.tol, kkt_tol=args.kkt_tol,
                       standardize=not args.no_standardize)


def _grid(args):
    mg = None if args.max_groups == "none" else args.max_groups
    return PathGrid(n_lambda=args.n_lambda, min_ratio=args.min_ratio, max_groups=mg)


def _gammas(args):
    return [GammaSpec(c, args.gamma_form) for c in args.c]


def _require(args, *names):
    for name in names:
        if getattr(args, name, None) is None:
            flag = "--lambda" if name == "lam" else "--" + name.replace("_", "-")
            raise DataValidationError(f"{args.command} needs {flag}")


def _validate(args):
    """Cheap checks that must fail before any computation starts."""
    if getattr(args, "max_iter", 1) < 1:
        raise DataValidationError("--max-iter must be positive")
    if getattr(args, "lam", None) is not None and not args.lam >= 0:
        raise DataValidationError(f"--lambda must be nonnegative, got {args.lam}")
    if getattr(args, "reps", 1) < 1:
        raise DataValidationError("--reps must be at least 1")
    if getattr(args, "jobs", 1) < 1:
        raise DataValidationError("--jobs must be at least 1")
    if getattr(args, "command", None) == "simulate":
        for m in args.methods:
            parse_method(m)
        for pen in args.penalties or [args.penalty]:
            if pen not in PENALTIES:
                raise DataValidationError(f"unknown penalty {pen!r}")
    if hasattr(args, "penalty"):
        PenaltySpec(args.penalty, 0.0, args.scad_a)
        _controls(args)
    if hasattr(args, "n_lambda"):
        _grid(args)
    if hasattr(args, "c"):
        _gammas(args)


def _config_of(args):
    return {k: v for k, v in sorted(vars(args).items()) if k not in _UNRECORDED}


def _versions():
    out = {"pseudosel": __version__, "python": sys.version.split()[0]}
    for pkg in ("numpy", "scipy", "numba", "pandas", "joblib"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def _resolve_out(args):
    out = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise DataValidationError(f"output directory {out} is not writable: {exc}") from exc
    return out


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not serializable: {type(obj).__name__}")


def _write_json(path, payload):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default,
                               allow_nan=True) + "\n")


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def _coefficient_rows(data, theta):
    names = [e.name or f"experiment_{k + 1}" for k, e in enumerate(data.experiments)]
    header = ["predictor", "group_norm", *names]
    rows = [["(intercept)", float(np.linalg.norm(theta.intercepts)), *theta.intercepts]]
    norms = theta.group_norms()
    for j, name in enumerate(data.predictor_names):
        rows.append([name, float(norms[j]), *theta.coefficients[:, j]])
    return header, rows


def _se_rows(data, theta, support):
    """Sandwich SEs of the listed parameters; returns (rows, error message)."""
    support = tuple(support)
    try:
        se = sandwich_se(information_matrices(data, theta, support))
    except NumericalError as exc:
        return [], str(exc)
    rows, i = [], 0
    for k, e in enumerate(data.experiments):
        ename = e.name or f"experiment_{k + 1}"
        rows.append([ename, "(intercept)", float(theta.intercepts[k]), float(se[i])])
        i += 1
        for j in support:
            rows.append([ename, data.predictor_names[j], float(theta.coefficients[k, j]),
                         float(se[i])])
            i += 1
    return rows, None


def _fit_record(f):
    return {"lambda": f.lam, "objective": f.objective, "iterations": f.iterations,
            "converged": f.converged, "kkt_violation": f.kkt_violation,
            "active_set_size": len(f.active_set), "error": f.error}


def _write_path(out, data, path):
    names = [e.name or f"experiment_{k + 1}" for k, e in enumerate(data.experiments)]
    rows = []
    for i, f in enumerate(path.fits):
        norms = f.theta.group_norms()
        for j, name in enumerate(data.predictor_names):
            rows.append([i, f.lam, name, float(norms[j]), *f.theta.coefficients[:, j]])
    _write_rows(out / "path.csv", ["lambda_index", "lambda", "predictor", "group_norm", *names],
                rows)


# ---------------------------------------------------------------------------
# commands; each returns (results dict, exit code)

def cmd_fit(args, out):
    _require(args, "manifest", "lam")
    data = load_dataset(args.manifest)
    res = fit(data, PenaltySpec(args.penalty, args.lam, args.scad_a), controls=_controls(args))
    _write_rows(out / "coefficients.csv", *_coefficient_rows(data, res.theta))
    _write_rows(out / "active_set.csv", ["index", "predictor"],
                [[j, data.predictor_names[j]] for j in res.active_set])
    se_rows, se_err = _se_rows(data, res.theta, res.active_set)
    _write_rows(out / "standard_errors.csv", ["experiment", "parameter", "estimate", "se"],
                se_rows)
    result = dict(_fit_record(res), active_set=[data.predictor_names[j] for j in res.active_set],
                  standard_error_failure=se_err)
    return result, EXIT_OK


def cmd_path(args, out):
    _require(args, "manifest")
    data = load_dataset(args.manifest)
    path = fit_path(data, args.penalty, args.scad_a, _grid(args), _controls(args))
    _write_path(out, data, path)
    result = {"stopped_early": path.stopped_early, "n_fits": len(path.fits),
              "fits": [_fit_record(f) for f in path.fits]}
    return result, EXIT_OK


def cmd_select(args, out):
    _require(args, "manifest")
    data = load_dataset(args.manifest)
    path = fit_path(data, args.penalty, args.scad_a, _grid(args), _controls(args))
    _write_path(out, data, path)
    refit = not args.no_refit
    cands = evaluate_supports(data, path, refit=refit)
    gammas = _gammas(args)
    reports = [select_model(data, path, g, refit=refit, candidates=cands) for g in gammas]

    # one row per distinct support, first (largest) lambda at which it appears
    first = {}
    for i, f in enumerate(path.fits):
        if f.error is None:
            first.setdefault(tuple(f.active_set), i)
    chosen_sets = [tuple(r.chosen.active_set) for r in reports]
    header = ["lambda_index", "lambda", "support_size", "refit_loglik", "d_eff",
              *[f"pseu_bic_c{g.c:g}" for g in gammas], *[f"chosen_c{g.c:g}" for g in gammas],
              "error", "support"]
    rows = []
    for s, i in sorted(first.items(), key=lambda kv: kv[1]):
        c = cands[s]
        rows.append([i, path.fits[i].lam, len(s), c.loglik, c.d_eff,
                     *[c.bic(g, data.p) for g in gammas], *[int(s == cs) for cs in chosen_sets],
                     c.error or "", ";".join(data.predictor_names[j] for j in s)])
    _write_rows(out / "selection.csv", header, rows)

    chosen = []
    for g, rep in zip(gammas, reports):
        tag = f"c{g.c:g}"
        fitres = path.fits[rep.chosen_index]
        _write_rows(out / f"coefficients_{tag}.csv", *_coefficient_rows(data, fitres.theta))
        se_rows, se_err = _se_rows(data, rep.theta, rep.chosen.active_set)
        _write_rows(out / f"standard_errors_{tag}.csv",
                    ["experiment", "parameter", "estimate", "se"], se_rows)
        chosen.append({"c": g.c, "gamma_form": g.form, "lambda_index": rep.chosen_index,
                       "lambda": rep.chosen.lam, "pseu_bic": rep.chosen.pseu_bic,
                       "d_eff": rep.chosen.d_eff, "refit_loglik": rep.chosen.refit_loglik,
                       "active_set": [data.predictor_names[j] for j in rep.chosen.active_set],
                       "standard_error_failure": se_err})
    result = {"stopped_early": path.stopped_early, "n_fits": len(path.fits),
              "non_converged": sum(not f.converged for f in path.fits), "chosen": chosen}
    return result, EXIT_OK


def cmd_simulate(args, out):
    cfg = ScenarioConfig(args.scenario, n=args.n, p=args.p, q=args.q, K=args.K,
                         rho_response=args.rho_response, rho_block=args.rho_block,
                         block_size=args.block_size, coef_low=args.coef_low,
                         coef_high=args.coef_high, seed=args.seed, replicates=args.reps)
    settings = StudySettings(methods=tuple(args.methods),
                             penalties=tuple(args.penalties or [args.penalty]),
                             gammas=tuple(_gammas(args)), a=args.scad_a, grid=_grid(args),
                             controls=_controls(args), refit=not args.no_refit)
    if args.export_data:
        inst = simulate(cfg, 0)
        write_dataset(inst.dataset, out / "data")
        _write_rows(out / "data" / "true_coefficients.csv",
                    *_coefficient_rows(inst.dataset, inst.true_coefficients))
    res = run_study(cfg, settings, jobs=args.jobs)
    table = res.replicates
    keys = ["scenario", "n", "p", "c", "penalty", "method", "replicate"]
    table.drop(columns=TIMING_COLUMNS).to_csv(out / "replicates.csv", index=False,
                                              lineterminator="\n")
    res.aggregate.to_csv(out / "aggregate.csv", index=False, lineterminator="\n")
    timings = table[keys + TIMING_COLUMNS]
    result = {"replicates": args.reps, "failed_replicates": res.n_failed,
              "aggregate": res.aggregate.to_dict(orient="records")}
    code = EXIT_PARTIAL if res.partial else EXIT_OK
    return result, code, timings


def _read_coefficients(path):
    try:
        df = pd.read_csv(path)
    except (OSError, ValueError) as exc:
        raise DataValidationError(f"unreadable file {path}: {exc}") from exc
    if "predictor" not in df.columns or "group_norm" not in df.columns:
        raise DataValidationError(f"{path} is not a coefficients file")
    df = df[df.predictor != "(intercept)"].set_index("predictor")
    return df.drop(columns="group_norm")


def cmd_evaluate(args, out):
    _require(args, "coefficients", "truth")
    est, truth = _read_coefficients(args.coefficients), _read_coefficients(args.truth)
    if list(est.index) != list(truth.index) or list(est.columns) != list(truth.columns):
        raise DataValidationError("coefficient and truth files list different predictors "
                                  "or experiments")
    B_est, B_true = est.to_numpy(float).T, truth.to_numpy(float).T
    K = B_true.shape[0]
    support = tuple(int(j) for j in np.flatnonzero(np.linalg.norm(B_true, axis=0) > 0))
    truth = SimulatedInstance(None, ParameterState(B_true, np.zeros(K)), support)
    selected = np.flatnonzero(np.linalg.norm(B_est, axis=0) > 0)
    metrics = evaluate_selection(selected, ParameterState(B_est, np.zeros(K)), truth)
    _write_rows(out / "evaluation.csv", ["psr", "fdr", "sse", "selected", "true"],
                [[metrics["psr"], metrics["fdr"], metrics["sse"], len(selected), len(support)]])
    return metrics, EXIT_OK


# ---------------------------------------------------------------------------

def _apply_summary(args, parser):
    try:
        stored = json.loads(Path(args.from_summary).read_text())
        config = stored["config"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataValidationError(f"cannot read summary {args.from_summary}: {exc}") from exc
    if config.get("command") != args.command:
        raise DataValidationError(
            f"summary was written by {config.get('command')!r}, not {args.command!r}")
    for key, value in config.items():
        setattr(args, key, value)


def run(argv=None):
    """Parse ``argv``, execute, and return the exit code."""
    t0 = time.perf_counter()
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        if args.from_summary:
            _apply_summary(args, parser)
        _validate(args)
        out = _resolve_out(args)
        outcome = args.func(args, out)
    except DataValidationError as exc:
        print(f"pseudosel: validation error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"pseudosel: I/O error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except PseudoselError as exc:
        print(f"pseudosel: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    result, code = outcome[:2]
    timings = outcome[2] if len(outcome) > 2 else None
    _write_json(out / "summary.json", {"config": _config_of(args), "result": result,
                                       "versions": _versions(), "exit_code": code})
    _write_json(out / "run_info.json", {"wall_time_s": time.perf_counter() - t0,
                                        "jobs": getattr(args, "jobs", 1)})
    if timings is not None:
        timings.to_csv(out / "timings.csv", index=False, lineterminator="\n")
    if code == EXIT_PARTIAL:
        print(f"pseudosel: {result['failed_replicates']} replicate(s) failed; "
              "see replicates.csv", file=sys.stderr)
    return code


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
