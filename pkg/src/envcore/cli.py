"""Command-line interface: fit models on CSV data and run the Monte Carlo
studies, emitting machine-readable JSON and CSV artifacts.

Two subcommands:

  envcore fit       fit one estimator family to a CSV dataset
  envcore simulate  run a named simulation study

Floats are serialized with full round-trip precision.  Exit codes: 0 on
success, 2 on data or specification errors, 3 on convergence failures.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from .datasets import load_dental
from .errors import (DataError, DegenerateVariance, DimensionMismatch,
                     InvalidPartition, InvalidSpec, NoConvergence,
                     NonPositiveDefinite, RankDeficientContrast,
                     RankDeficientU, SingularDesign, SingularMoment,
                     Unidentifiable)
from .estimators import fit_cm, fit_ecm, fit_em, fit_secm, fit_um
from .inference import (estimate_profile, fit_contrast, select_dimension,
                        test_rows, wald_pvalues)
from .linalg import OptimizerOptions
from .model import Dataset
from .sim import (run_bias_sweep, run_ecm_study, run_efficiency_study,
                  run_size_calibration, scenario)

_DATA_ERRORS = (DataError, DimensionMismatch, RankDeficientU,
                RankDeficientContrast, SingularDesign, SingularMoment,
                InvalidPartition, Unidentifiable, InvalidSpec,
                OSError, ValueError, KeyError)
_CONVERGENCE_ERRORS = (NoConvergence, NonPositiveDefinite,
                       DegenerateVariance)


def _jsonify(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonify(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(_jsonify(payload), fh, indent=2)
        fh.write("\n")


def _read_table(path):
    """CSV with header row -> (header list, list of row dicts)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file")
        rows = list(reader)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return reader.fieldnames, rows


def _column_matrix(path, header, rows, names):
    out = np.empty((len(rows), len(names)))
    for j, name in enumerate(names):
        if name not in header:
            raise DataError(f"{path}: no column named {name!r}")
        for i, row in enumerate(rows):
            try:
                out[i, j] = float(row[name])
            except (TypeError, ValueError):
                raise DataError(
                    f"{path}: row {i + 2}, column {name!r}: "
                    f"cannot parse {row[name]!r} as a number") from None
    return out


def _parse_times(text, r):
    times = np.asarray([float(v) for v in text.split(",")])
    if times.size != r:
        raise DataError(
            f"--times must list {r} values (one per response), "
            f"got {times.size}")
    return times


def _build_U(args, r):
    spec = args.U
    if spec == "identity":
        return np.eye(r)
    if spec.startswith("poly:"):
        degree = int(spec.split(":", 1)[1])
        if degree < 0 or degree >= r:
            raise DataError(f"polynomial degree must be in [0, {r - 1}]")
        if args.times is None:
            raise DataError("--U poly:d requires --times")
        t = _parse_times(args.times, r)
        return np.vander(t, degree + 1, increasing=True)
    if spec.startswith("trig:"):
        period = float(spec.split(":", 1)[1])
        if period <= 0:
            raise DataError("trig period must be positive")
        if args.times is None:
            raise DataError("--U trig:T requires --times")
        t = _parse_times(args.times, r)
        w = 2.0 * np.pi * t / period
        return np.column_stack([np.ones(r), np.cos(w), np.sin(w)])
    U = np.loadtxt(spec, delimiter=",", ndmin=2)
    if U.shape[0] != r:
        raise DataError(f"{spec}: U has {U.shape[0]} rows, expected r={r}")
    return U


def _parse_tol(pairs):
    opts = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise DataError(f"--tol expects KEY=VALUE, got {pair!r}")
        key, val = pair.split("=", 1)
        if key not in OptimizerOptions.__dataclass_fields__:
            raise DataError(f"unknown tolerance key {key!r}")
        kind = OptimizerOptions.__dataclass_fields__[key].type
        opts[key] = (float(val) if kind is float or key in
                     ("tol", "inner_tol") else int(val))
    return OptimizerOptions(**opts) if opts else None


def _load_data(args):
    if args.data == "dental":
        Y, X, t, _ = load_dental()
        if args.times is None:
            args.times = ",".join(str(v) for v in t)
        return Y, X
    header, rows = _read_table(args.data)
    if args.responses:
        ynames = args.responses.split(",")
    else:
        ynames = [h for h in header if h.startswith(args.response_prefix)]
        if not ynames:
            raise DataError(
                f"{args.data}: no columns start with "
                f"{args.response_prefix!r}; use --responses")
    if args.predictors:
        xnames = args.predictors.split(",")
    else:
        xnames = [h for h in header if h not in ynames]
        if not xnames:
            raise DataError(f"{args.data}: no predictor columns left")
    Y = _column_matrix(args.data, header, rows, ynames)
    X = _column_matrix(args.data, header, rows, xnames)
    return Y, X


def _fit_payload(fit):
    payload = {
        "model": fit.kind,
        "intercept_mode": fit.intercept_mode,
        "n": fit.n, "p": fit.p, "r": fit.r, "k": fit.k,
        "dim": fit.dim,
        "loglik": fit.loglik,
        "n_params": fit.n_params,
        "bic": fit.bic,
        "beta0": fit.beta0,
        "beta": fit.beta,
        "Sigma": fit.Sigma,
        "avar_beta": fit.avar_beta,
    }
    for name in ("alpha", "basis", "Omega", "Omega0", "Lambda", "phi",
                 "avar_alpha"):
        value = getattr(fit, name)
        if value is not None:
            payload[name] = value
    return payload


def _write_fit_tables(path, fit, pvalues):
    se = np.sqrt(np.clip(np.diag(fit.avar_beta), 0.0, None)
                 / fit.n).reshape(fit.p, fit.r).T
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["response", "predictor", "estimate", "se",
                         "p_value"])
        for i in range(fit.r):
            for j in range(fit.p):
                writer.writerow([i, j, repr(float(fit.beta[i, j])),
                                 repr(float(se[i, j])),
                                 repr(float(pvalues[i, j]))])


def _write_plot_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["series", "x", "y", "lo", "hi"])
        for series, x, y, lo, hi in rows:
            writer.writerow([
                series, repr(float(x)), repr(float(y)),
                "" if lo is None else repr(float(lo)),
                "" if hi is None else repr(float(hi))])


def _cmd_fit(args):
    Y, X = _load_data(args)
    U = _build_U(args, Y.shape[1])
    opts = _parse_tol(args.tol)
    data = Dataset(Y=Y, X=X, U=U, intercept_mode=args.intercept)
    os.makedirs(args.out, exist_ok=True)

    dim = None
    bic_table = None
    if args.model in ("em", "ecm", "secm"):
        want = args.v if args.model == "secm" and args.v else args.u
        if want == "bic":
            bic_table = {}
            dim = select_dimension(data, args.model, opts=opts,
                                   trace=bic_table)
        else:
            try:
                dim = int(want)
            except (TypeError, ValueError):
                raise DataError(
                    f"--u/--v must be an integer or 'bic', got {want!r}"
                ) from None

    if args.model == "um":
        fit = fit_um(data)
    elif args.model == "cm":
        fit = fit_cm(data)
    elif args.model == "em":
        fit = fit_em(data, dim, opts=opts)
    elif args.model == "ecm":
        fit = fit_ecm(data, dim, opts=opts)
    else:
        fit = fit_secm(data, dim, opts=opts)

    pvalues = wald_pvalues(fit)
    payload = _fit_payload(fit)
    payload["wald_pvalues"] = pvalues
    if bic_table is not None:
        payload["bic_table"] = {str(k): v for k, v in
                                sorted(bic_table.items())}

    if args.test_rows is not None:
        if args.model not in ("em", "ecm", "secm"):
            raise DataError("--test-rows requires an envelope model")
        result = test_rows(data, dim, args.test_rows, opts=opts)
        payload["row_test"] = {
            "statistic": result.statistic, "df": result.df,
            "p_value": result.p_value,
            "loglik_null": result.loglik_null,
            "loglik_alt": result.loglik_alt}

    if args.contrast is not None:
        if dim is None:
            raise DataError("--contrast requires an integer --u")
        c1 = np.loadtxt(args.contrast, delimiter=",", ndmin=2)
        cf = fit_contrast(data, c1, dim, opts=opts)
        payload["contrast"] = {
            "c1": cf.c1, "alpha1": cf.alpha1,
            "Ualpha1": data.U @ cf.alpha1,
            "avar_Ualpha1": cf.avar_Ualpha1}

    if args.profile is not None:
        if dim is None:
            raise DataError("--profile requires an integer --u")
        x_new = np.loadtxt(args.profile, delimiter=",").reshape(-1)
        prof = estimate_profile(data, x_new, dim, opts=opts)
        payload["profile"] = {"x_new": prof.x_new, "mean": prof.mean,
                              "avar": prof.avar}
        half = 1.96 * np.sqrt(np.clip(np.diag(prof.avar), 0, None)
                              / data.n)
        xs = (_parse_times(args.times, data.r) if args.times
              else np.arange(data.r, dtype=float))
        _write_plot_csv(
            os.path.join(args.out, "profile.csv"),
            [("profile", xs[i], prof.mean[i], prof.mean[i] - half[i],
              prof.mean[i] + half[i]) for i in range(data.r)])

    _write_json(os.path.join(args.out, "fit.json"), payload)
    _write_fit_tables(os.path.join(args.out, "tables.csv"), fit, pvalues)
    return 0


def _write_report_tables(path, report):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["estimator", "metric", "value"])
        for name in sorted(report.estimators):
            for metric, value in report.estimators[name].items():
                writer.writerow([name, metric, repr(float(value))])
        for dim in sorted(report.dim_selection):
            writer.writerow(["em", f"dim_selected_{dim}",
                             report.dim_selection[dim]])


def _cmd_simulate(args):
    os.makedirs(args.out, exist_ok=True)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.n is not None:
        overrides["n"] = args.n
    if args.scenario in ("s1", "s2"):
        spec = scenario(args.scenario, **overrides)
        em_dim = "bic" if args.u in (None, "bic") else int(args.u)
        report = run_efficiency_study(spec, args.reps, em_dim=em_dim)
    elif args.scenario == "bias_sweep":
        spec = scenario("bias_sweep", **overrides)
        report = run_bias_sweep(spec, reps=args.reps)
    elif args.scenario == "ecm_star":
        report = run_ecm_study(reps=args.reps, seed=args.seed,
                               **({"n": args.n} if args.n else {}))
    else:
        design = dict(overrides)
        report = run_size_calibration(design=design, reps=args.reps)
    _write_json(os.path.join(args.out, "report.json"), report.to_dict())
    _write_report_tables(os.path.join(args.out, "tables.csv"), report)
    if "mse_cm_by_k" in report.extra:
        rows = [("cm", k, report.extra["mse_cm_by_k"][k], None, None)
                for k in report.extra["k_grid"]]
        for name in ("um", "em"):
            mse = report.estimators[name]["mse_mean"]
            rows += [(name, k, mse, None, None)
                     for k in report.extra["k_grid"]]
        _write_plot_csv(os.path.join(args.out, "mse_vs_k.csv"), rows)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="envcore",
        description="constrained multivariate regression with envelope "
                    "dimension reduction")
    sub = parser.add_subparsers(dest="command", required=True)

    pf = sub.add_parser("fit", help="fit an estimator family to CSV data")
    pf.add_argument("--data", required=True,
                    help="CSV path with header row, or 'dental' for the "
                         "bundled growth-curve fixture")
    pf.add_argument("--response-prefix", default="y",
                    help="response columns share this prefix (default y)")
    pf.add_argument("--responses", default=None,
                    help="explicit comma-separated response columns")
    pf.add_argument("--predictors", default=None,
                    help="explicit comma-separated predictor columns "
                         "(default: every non-response column)")
    pf.add_argument("--model", required=True,
                    choices=["um", "cm", "em", "ecm", "secm"])
    pf.add_argument("--u", default="bic",
                    help="envelope dimension: integer or 'bic'")
    pf.add_argument("--v", default=None,
                    help="secm dimension: integer or 'bic' (alias of --u)")
    pf.add_argument("--U", default="identity",
                    help="constraint basis: CSV path, poly:d, trig:T, or "
                         "identity")
    pf.add_argument("--times", default=None,
                    help="comma-separated response times for poly/trig U")
    pf.add_argument("--intercept", default="model2",
                    choices=["model2", "model3"])
    pf.add_argument("--test-rows", type=int, default=None, metavar="K2",
                    help="test that the trailing K2 coordinate rows of "
                         "alpha vanish")
    pf.add_argument("--contrast", default=None,
                    help="CSV with a p x p1 contrast matrix")
    pf.add_argument("--profile", default=None,
                    help="CSV with one predictor vector x_new")
    pf.add_argument("--seed", type=int, default=None)
    pf.add_argument("--tol", action="append", default=None, metavar="K=V",
                    help="optimizer option override, e.g. tol=1e-10")
    pf.add_argument("--out", default=".", help="output directory")
    pf.set_defaults(func=_cmd_fit)

    ps = sub.add_parser("simulate", help="run a Monte Carlo study")
    ps.add_argument("--scenario", required=True,
                    choices=["s1", "s2", "bias_sweep", "ecm_star",
                             "null_test"])
    ps.add_argument("--reps", type=int, default=100)
    ps.add_argument("--seed", type=int, default=None)
    ps.add_argument("--n", type=int, default=None)
    ps.add_argument("--u", default=None,
                    help="fixed envelope dimension for efficiency studies "
                         "(default: BIC per replicate)")
    ps.add_argument("--out", default=".", help="output directory")
    ps.set_defaults(func=_cmd_simulate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be nonnegative", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except _CONVERGENCE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
