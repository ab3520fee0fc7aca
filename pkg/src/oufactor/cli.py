"""Command-line interface.

Subcommands cover the full workflow: simulate data, fit a model, select
the state dimension, make held-out one-step predictions, canonicalize or
block-diagonalize parameter files, run the replicated estimator study,
and preprocess raw inputs. Exit codes: 0 success, 1 user error (bad
arguments or files), 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__
from .canonical import block_diagonalize, to_canonical
from .dataio import (
    CANONICAL_FORMAT,
    FIT_FORMAT,
    FORMAT_VERSION,
    format_float,
    load_model_params,
    params_to_dict,
    read_labels,
    read_series,
    write_json,
    write_params,
    write_series,
)
from .errors import NumericalError
from .estimate import fit
from .kalman import TimeSeries, predict_one_step
from .params import ModelParams
from .preprocess import (
    deseasonalize,
    logratio_labels,
    logratio_transform,
    read_counts,
    read_dated_series,
    write_climatology,
    write_dated_series,
)
from .selection import information_criteria, select_dimension
from .simulate import run_experiment, scenario_suite, simulate


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with code 1, not 2."""

    def error(self, message):
        self.exit(1, f"{self.format_usage()}{self.prog}: error: {message}\n")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _nonnegative_float(text):
    value = float(text)
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {value}")
    return value


def _fraction(text):
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(
            f"must be strictly between 0 and 1, got {value}"
        )
    return value


def _build_parser() -> tuple[_Parser, dict[str, _Parser]]:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0,
                        help="random seed (default 0)")
    common.add_argument("--threads", type=_positive_int, default=1,
                        help="worker processes for replicated experiments")
    common.add_argument("--out-dir", default=".",
                        help="directory for default output paths")
    common.add_argument("--config", default=None, metavar="FILE",
                        help="JSON file with option defaults; explicit "
                             "flags win")

    parser = _Parser(
        prog="oufactor",
        description="Latent factor models with mean-reverting "
                    "continuous-time dynamics.",
    )
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    registry: dict[str, _Parser] = {}

    def add(name, func, help_text):
        # help strings pass through %-formatting, descriptions do not
        sp = sub.add_parser(name, parents=[common],
                            help=help_text.replace("%", "%%"),
                            description=help_text)
        sp.set_defaults(func=func)
        registry[name] = sp
        return sp

    sp = add("simulate", _cmd_simulate,
             "Draw an exact sample path and write it as CSV.")
    source = sp.add_mutually_exclusive_group(required=True)
    source.add_argument("--scenario", metavar="ID",
                        help="study-grid cell to simulate from "
                             "(see `experiment --list`)")
    source.add_argument("--params", metavar="FILE",
                        help="JSON parameter file to simulate from")
    sp.add_argument("--n", type=_positive_int, default=500,
                    help="number of observations (default 500)")
    sp.add_argument("--dt", type=_positive_float, default=1.0,
                    help="time step between observations (default 1)")
    sp.add_argument("--noise-sd", type=_nonnegative_float, default=0.5,
                    help="measurement-error sd when simulating a scenario "
                         "(default 0.5)")
    sp.add_argument("--no-noise", action="store_true",
                    help="write noiseless factor combinations")
    sp.add_argument("--latent", metavar="FILE",
                    help="also write the latent path to this CSV")
    sp.add_argument("--output", metavar="FILE",
                    help="output CSV (default OUT_DIR/simulated.csv)")

    sp = add("fit", _cmd_fit,
             "Fit a model by maximum likelihood and write it as JSON.")
    sp.add_argument("data", help="observed series CSV")
    sp.add_argument("--m", type=_positive_int, required=True,
                    help="latent state dimension")
    sp.add_argument("--starts", type=_positive_int, default=5,
                    help="random optimization starts (default 5)")
    sp.add_argument("--max-evals", type=_positive_int, default=5000,
                    help="likelihood evaluation budget (default 5000)")
    sp.add_argument("--tol", type=_positive_float, default=1e-8,
                    help="optimizer convergence tolerance (default 1e-8)")
    sp.add_argument("--output", metavar="FILE",
                    help="output JSON (default OUT_DIR/fit.json)")

    sp = add("select", _cmd_select,
             "Fit several state dimensions and rank them by AIC and BIC.")
    sp.add_argument("data", help="observed series CSV")
    sp.add_argument("--m-values", type=_positive_int, nargs="+",
                    default=[1, 2, 3], metavar="M",
                    help="candidate dimensions (default 1 2 3)")
    sp.add_argument("--starts", type=_positive_int, default=5,
                    help="random optimization starts per dimension")
    sp.add_argument("--max-evals", type=_positive_int, default=5000,
                    help="likelihood evaluation budget per fit")
    sp.add_argument("--tol", type=_positive_float, default=1e-8,
                    help="optimizer convergence tolerance")
    sp.add_argument("--output", metavar="FILE",
                    help="output CSV table (default OUT_DIR/select.csv)")

    sp = add("predict", _cmd_predict,
             "Held-out one-step predictions with 95% intervals.")
    sp.add_argument("data", help="observed series CSV")
    source = sp.add_mutually_exclusive_group(required=True)
    source.add_argument("--params", metavar="FILE",
                        help="JSON parameter or fit file to predict with")
    source.add_argument("--m", type=_positive_int,
                        help="fit this state dimension on the training split")
    sp.add_argument("--split", type=_fraction, default=0.9,
                    help="training fraction of the rows (default 0.9)")
    sp.add_argument("--starts", type=_positive_int, default=5,
                    help="random optimization starts when fitting")
    sp.add_argument("--max-evals", type=_positive_int, default=5000,
                    help="likelihood evaluation budget when fitting")
    sp.add_argument("--tol", type=_positive_float, default=1e-8,
                    help="optimizer convergence tolerance when fitting")
    sp.add_argument("--save-params", metavar="FILE",
                    help="also write the training-split fit as JSON")
    sp.add_argument("--output", metavar="FILE",
                    help="output CSV (default OUT_DIR/predictions.csv)")

    sp = add("canonicalize", _cmd_canonicalize,
             "Rewrite parameters in canonical and block-diagonal form.")
    sp.add_argument("params_file", help="JSON parameter or fit file")
    sp.add_argument("--output", metavar="FILE",
                    help="output JSON (default OUT_DIR/canonical.json)")

    sp = add("experiment", _cmd_experiment,
             "Replicated estimator study over simulation scenarios.")
    sp.add_argument("--scenario", action="append", metavar="ID",
                    help="scenario to run (repeatable; default: all)")
    sp.add_argument("--list", action="store_true",
                    help="list scenario ids and labels, then exit")
    sp.add_argument("--replicates", type=_positive_int, default=20,
                    help="simulated datasets per scenario (default 20)")
    sp.add_argument("--n", type=_positive_int, default=2000,
                    help="observations per dataset (default 2000)")
    sp.add_argument("--dt", type=_positive_float, default=1.0,
                    help="time step (default 1)")
    sp.add_argument("--noise-sd", type=_nonnegative_float, default=0.5,
                    help="measurement-error sd (default 0.5)")
    sp.add_argument("--m-values", type=_positive_int, nargs="+",
                    default=[1, 2, 3], metavar="M",
                    help="dimensions fitted per dataset (default 1 2 3)")
    sp.add_argument("--starts", type=_positive_int, default=3,
                    help="random optimization starts per fit (default 3)")
    sp.add_argument("--max-evals", type=_positive_int, default=5000,
                    help="likelihood evaluation budget per fit")

    sp = add("preprocess", _cmd_preprocess,
             "Transform raw inputs into model-ready series.")
    sp.add_argument("mode", choices=("logratio", "deseason"),
                    help="logratio: log count ratios against a reference "
                         "column; deseason: subtract a day-of-year "
                         "climatology")
    sp.add_argument("data", help="input CSV")
    sp.add_argument("--pseudocount", type=_positive_float, default=0.3,
                    help="added to counts before ratios (default 0.3)")
    sp.add_argument("--reference", metavar="LABEL",
                    help="reference count column (default: last column)")
    sp.add_argument("--climatology", metavar="FILE",
                    help="also write the fitted day-of-year means")
    sp.add_argument("--output", metavar="FILE",
                    help="output CSV (default OUT_DIR/preprocessed.csv)")

    return parser, registry


def _apply_config(path, parser: _Parser) -> dict:
    """Defaults from a JSON config file, validated against the parser."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    actions = {
        action.dest: action
        for action in parser._actions
        if action.dest not in ("help", "config", "func")
    }
    unknown = sorted(set(doc) - set(actions))
    if unknown:
        raise ValueError(
            f"{path}: unknown config keys: {', '.join(unknown)}"
        )
    out = {}
    for key, value in doc.items():
        action = actions[key]
        try:
            if action.type is not None and value is not None:
                if isinstance(value, list):
                    value = [action.type(str(v)) for v in value]
                else:
                    value = action.type(str(value))
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise ValueError(f"{path}: key {key!r}: {exc}") from None
        out[key] = value
    return out


def _out_path(args, default_name: str, explicit) -> str:
    if explicit:
        return explicit
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, default_name)


def _scenario_by_id(scenario_id: str):
    for scenario in scenario_suite():
        if scenario.scenario_id == scenario_id:
            return scenario
    raise ValueError(
        f"unknown scenario {scenario_id!r}; run `oufactor experiment --list` "
        "for the available ids"
    )


def _block_section(params: ModelParams) -> tuple[dict | None, str | None]:
    """Block-diagonal form as a JSON-ready dict, or the failure reason."""
    try:
        form = block_diagonalize(params)
    except NumericalError as exc:
        return None, str(exc)
    eigs = [np.linalg.eigvals(b) for b in form.blocks]
    return {
        "params": params_to_dict(form.params),
        "transform": form.transform.tolist(),
        "blocks": [b.tolist() for b in form.blocks],
        "eigenvalues": [
            {"real": float(e[0].real), "imag": float(abs(e[0].imag))}
            for e in eigs
        ],
    }, None


# ---------------------------------------------------------------------------
# subcommands


def _cmd_simulate(args) -> int:
    if args.scenario:
        scenario = _scenario_by_id(args.scenario)
        p = scenario.loadings.shape[0]
        params = ModelParams(
            theta=scenario.theta,
            loadings=scenario.loadings,
            obs_mean=np.zeros(p),
            noise_var=np.full(p, args.noise_sd**2),
        )
    else:
        params = load_model_params(args.params)
    times = np.arange(args.n, dtype=float) * args.dt
    series, latent = simulate(
        params, times, args.seed, measurement_error=not args.no_noise
    )
    out = _out_path(args, "simulated.csv", args.output)
    write_series(out, series)
    print(f"wrote {out} ({series.n} rows, {series.p} columns)")
    if args.latent:
        write_series(
            args.latent,
            TimeSeries(times, latent),
            labels=[f"x{j + 1}" for j in range(latent.shape[1])],
        )
        print(f"wrote {args.latent} (latent path)")
    return 0


def _cmd_fit(args) -> int:
    series = read_series(args.data)
    result = fit(series, args.m, n_starts=args.starts,
                 max_evals=args.max_evals, tol=args.tol, seed=args.seed)
    ic = information_criteria(result.loglik, args.m, series.p,
                              series.n_observed)
    block, block_error = _block_section(result.params)
    doc = {
        "format": FIT_FORMAT,
        "version": FORMAT_VERSION,
        "data": os.path.basename(args.data),
        "m": args.m,
        "p": series.p,
        "n_rows": series.n,
        "n_observed": series.n_observed,
        "seed": args.seed,
        "loglik": result.loglik,
        "aic": ic.aic,
        "bic": ic.bic,
        "k": ic.k,
        "converged": result.converged,
        "n_evals": result.n_evals,
        "params": params_to_dict(result.params),
        "block": block,
        "block_error": block_error,
    }
    out = _out_path(args, "fit.json", args.output)
    write_json(out, doc)
    print(f"wrote {out} (loglik {result.loglik:.3f}, aic {ic.aic:.3f}, "
          f"bic {ic.bic:.3f})")
    return 0


def _cmd_select(args) -> int:
    series = read_series(args.data)
    table = select_dimension(series, m_values=args.m_values,
                             n_starts=args.starts, max_evals=args.max_evals,
                             tol=args.tol, seed=args.seed)
    print(table.as_text())
    print(f"best by aic: m={table.best_aic}")
    print(f"best by bic: m={table.best_bic}")
    out = _out_path(args, "select.csv", args.output)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["m", "loglik", "k", "aic", "bic", "converged", "refitted",
             "error"]
        )
        for row in table.rows:
            if row.error is not None:
                writer.writerow([row.m, "", row.k, "", "", "false",
                                 str(row.refitted).lower(), row.error])
            else:
                writer.writerow([
                    row.m, format_float(row.loglik), row.k,
                    format_float(row.aic), format_float(row.bic),
                    str(row.converged).lower(), str(row.refitted).lower(), "",
                ])
    print(f"wrote {out}")
    return 0


def _cmd_predict(args) -> int:
    series = read_series(args.data)
    labels = read_labels(args.data)
    n_train = int(series.n * args.split)
    if not 0 < n_train < series.n:
        raise ValueError(
            f"split {args.split} leaves no usable train/test rows for "
            f"{series.n} observations"
        )
    train, test = series.split(n_train)
    if args.params:
        params = load_model_params(args.params)
    else:
        result = fit(train, args.m, n_starts=args.starts,
                     max_evals=args.max_evals, tol=args.tol, seed=args.seed)
        params = result.params
        if args.save_params:
            write_params(
                args.save_params, params,
                info={"loglik": result.loglik, "train_rows": train.n,
                      "seed": args.seed},
            )
            print(f"wrote {args.save_params} (training fit)")
    preds = predict_one_step(params, train, test)
    out = _out_path(args, "predictions.csv", args.output)
    covered = total = 0
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["time", "channel", "observed", "predicted", "lower95", "upper95"]
        )
        for i, pred in enumerate(preds):
            for j in range(test.p):
                if test.missing[i]:
                    observed = ""
                else:
                    value = test.values[i, j]
                    observed = format_float(value)
                    total += 1
                    if pred.lower95[j] <= value <= pred.upper95[j]:
                        covered += 1
                writer.writerow([
                    format_float(pred.time), labels[j], observed,
                    format_float(pred.mean[j]), format_float(pred.lower95[j]),
                    format_float(pred.upper95[j]),
                ])
    if total:
        print(f"interval coverage: {covered}/{total} = {covered / total:.3f}")
    else:
        print("interval coverage: no observed test values")
    print(f"wrote {out} ({len(preds)} predicted times, {test.p} channels)")
    return 0


def _cmd_canonicalize(args) -> int:
    params = load_model_params(args.params_file)
    canonical, transform = to_canonical(params)
    block, block_error = _block_section(canonical)
    doc = {
        "format": CANONICAL_FORMAT,
        "version": FORMAT_VERSION,
        "source": os.path.basename(args.params_file),
        "params": params_to_dict(canonical),
        "transform": transform.tolist(),
        "block": block,
        "block_error": block_error,
    }
    out = _out_path(args, "canonical.json", args.output)
    write_json(out, doc)
    print(f"wrote {out}")
    return 0


def _cmd_experiment(args) -> int:
    suite = scenario_suite()
    if args.list:
        for scenario in suite:
            labels = scenario.labels
            print(f"{scenario.scenario_id}  p={labels['p']}  "
                  f"{labels['eigen_kind']:7s}  mag={labels['diag_magnitude']:7s}  "
                  f"sep={labels['diag_separation']:5s}  {labels['z_kind']}")
        return 0
    if args.scenario:
        scenarios = [_scenario_by_id(s) for s in args.scenario]
    else:
        scenarios = suite
    m_values = tuple(args.m_values)
    os.makedirs(args.out_dir, exist_ok=True)
    fits_path = os.path.join(args.out_dir, "experiment_fits.csv")
    reps_path = os.path.join(args.out_dir, "experiment_replicates.csv")
    summary_path = os.path.join(args.out_dir, "experiment_summary.csv")
    with open(fits_path, "w", newline="", encoding="utf-8") as fh_fits, \
            open(reps_path, "w", newline="", encoding="utf-8") as fh_reps, \
            open(summary_path, "w", newline="", encoding="utf-8") as fh_sum:
        w_fits = csv.writer(fh_fits, lineterminator="\n")
        w_reps = csv.writer(fh_reps, lineterminator="\n")
        w_sum = csv.writer(fh_sum, lineterminator="\n")
        w_fits.writerow(
            ["scenario_id", "replicate", "m", "loglik", "aic", "bic",
             "converged", "n_evals"]
        )
        w_reps.writerow(
            ["scenario_id", "replicate", "error_ratio", "aic_choice",
             "bic_choice", "error"]
        )
        w_sum.writerow(
            ["scenario_id", "eigen_kind", "diag_magnitude", "diag_separation",
             "z_kind", "p", "table_note", "n_replicates", "n_failed",
             "median_error_ratio", "median_log_error_ratio"]
            + [f"aic_m{m}" for m in m_values]
            + [f"bic_m{m}" for m in m_values]
        )
        for scenario in scenarios:
            result = run_experiment(
                scenario, n_replicates=args.replicates, n_points=args.n,
                dt=args.dt, seed=args.seed, m_values=m_values,
                noise_sd=args.noise_sd, n_starts=args.starts,
                max_evals=args.max_evals, n_jobs=args.threads,
            )
            for outcome in result.outcomes:
                for m in m_values:
                    if m in outcome.loglik:
                        w_fits.writerow([
                            scenario.scenario_id, outcome.replicate, m,
                            format_float(outcome.loglik[m]),
                            format_float(outcome.aic[m]),
                            format_float(outcome.bic[m]),
                            str(outcome.converged[m]).lower(),
                            outcome.n_evals[m],
                        ])
                w_reps.writerow([
                    scenario.scenario_id, outcome.replicate,
                    "" if outcome.error_ratio is None
                    else format_float(outcome.error_ratio),
                    "" if outcome.aic_choice is None else outcome.aic_choice,
                    "" if outcome.bic_choice is None else outcome.bic_choice,
                    outcome.error or "",
                ])
            summary = result.summary()
            labels = scenario.labels
            row = [
                scenario.scenario_id, labels["eigen_kind"],
                labels["diag_magnitude"], labels["diag_separation"],
                labels["z_kind"], labels["p"], scenario.table_note,
                summary["n_replicates"], summary["n_failed"],
                "" if summary["median_error_ratio"] is None
                else format_float(summary["median_error_ratio"]),
                "" if summary["median_log_error_ratio"] is None
                else format_float(summary["median_log_error_ratio"]),
            ]
            aic_counts = summary.get("aic_counts", {})
            bic_counts = summary.get("bic_counts", {})
            row += [aic_counts.get(str(m), 0) for m in m_values]
            row += [bic_counts.get(str(m), 0) for m in m_values]
            w_sum.writerow(row)
            note = ("" if summary["median_log_error_ratio"] is None else
                    f"  median log error ratio "
                    f"{summary['median_log_error_ratio']:+.3f}")
            print(f"{scenario.scenario_id}: {summary['n_failed']} failed of "
                  f"{summary['n_replicates']}{note}")
    print(f"wrote {fits_path}, {reps_path}, {summary_path}")
    return 0


def _cmd_preprocess(args) -> int:
    out = _out_path(args, "preprocessed.csv", args.output)
    if args.mode == "logratio":
        raw = read_counts(args.data)
        series = logratio_transform(raw, pseudocount=args.pseudocount,
                                    reference=args.reference)
        labels = logratio_labels(raw, reference=args.reference)
        write_series(out, series, labels=labels)
        print(f"wrote {out} ({series.n} rows, {series.p} log-ratio columns)")
        return 0
    dates, values, labels = read_dated_series(args.data)
    anomalies, clim = deseasonalize(dates, values)
    write_dated_series(out, dates, anomalies, labels)
    print(f"wrote {out} ({len(dates)} rows, {values.shape[1]} anomaly "
          "columns)")
    if args.climatology:
        write_climatology(args.climatology, clim, labels)
        print(f"wrote {args.climatology} ({clim.doy.size} days of year)")
    return 0


def main(argv=None) -> int:
    """Entry point; returns the process exit code."""
    parser, registry = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config:
            overrides = _apply_config(args.config, registry[args.command])
            registry[args.command].set_defaults(**overrides)
            args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return 0 if exc.code is None else int(exc.code)
    except NumericalError as exc:
        print(f"oufactor: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"oufactor: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
