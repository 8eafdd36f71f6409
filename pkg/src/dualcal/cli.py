"""Command-line front end: ``estimate``, ``calibrate`` and ``simulate``.

Exit codes: 0 success, 1 invalid input, 2 calibration failure, 3 I/O error.
Every run prints a config echo (``key = value`` lines) that can be passed
back through ``--config`` to repeat the run.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import CalibrationError
from .data import SampleValidationError, load_sample, parse_meta, read_key_values
from .estimator import DualFrameCalibration
from .estimators import base_weights, weighted_total
from .variance import (VarianceError, _make_estimate, frame_variance, jackknife_variance,
                       parse_designs)

EXIT_VALIDATION = 1
EXIT_CONVERGENCE = 2
EXIT_IO = 3

META_PREFIXES = ("N_A", "N_B", "N_ab", "totals.", "groups.", "design.", "strata.")
FLAG_KEYS = ("overlap_constraint",)


class CLIError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _list(text: str) -> list[str]:
    return [part.strip() for part in str(text).split(",") if part.strip()]


def _bounds(text: str) -> tuple[float, float]:
    parts = _list(text)
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected L,U")
    return float(parts[0]), float(parts[1])


def _eta(text: str):
    if text == "estimate":
        return text
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError("eta must lie in [0, 1]")
    return value


def _level(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError("ci level must lie in (0, 1)")
    return value


def _add_sample_options(p: argparse.ArgumentParser):
    p.add_argument("--sample", help="sample CSV with id, domain, d_A, d_B, ... columns")
    p.add_argument("--meta", help="key = value file with N_A, N_B, N_ab, totals.*, design.*")
    p.add_argument("--aux-columns", type=_list, default=[],
                   help="comma-separated CSV columns holding auxiliary variables")
    p.add_argument("--approach", choices=("dual", "single"), default="dual")
    p.add_argument("--eta", type=_eta, default="estimate",
                   help="fixed value in [0, 1] or 'estimate'")
    p.add_argument("--variable", default="y", help="response variable to estimate")
    p.add_argument("--aux-case", default=None,
                   help="1-4, xa, xa_zb, x_whole, groups_complete, groups_margins")
    p.add_argument("--distance", default="euclidean",
                   help="euclidean, raking, logit or kullback_leibler")
    p.add_argument("--x-vars", type=_list, default=[],
                   help="numeric auxiliaries used by the aux case")
    p.add_argument("--group-var", default=None)
    p.add_argument("--overlap-constraint", action="store_true",
                   help="add the common overlap-mean restriction for --variable")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--logit-bounds", type=_bounds, default=(0.3, 3.0))
    p.add_argument("--variance", choices=("none", "linearization", "jackknife", "jackknife-fpc"),
                   default="none")
    p.add_argument("--ci", type=_level, default=0.95)
    p.add_argument("--output", help="write the report here instead of stdout")
    p.add_argument("--json", help="also write the machine block to this file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualcal",
                                     description="Calibration estimators for dual-frame surveys.")
    parser.add_argument("--version", action="version", version=f"dualcal {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="point estimate with optional variance")
    _add_sample_options(est)
    est.add_argument("--config", help="key = value file supplying option defaults")

    cal = sub.add_parser("calibrate", help="calibrated weights and diagnostics")
    _add_sample_options(cal)
    cal.add_argument("--weights-out", help="weights CSV path (default: in the report)")
    cal.add_argument("--config", help="key = value file supplying option defaults")

    sim = sub.add_parser("simulate", help="Monte Carlo study on a synthetic population")
    sim.add_argument("--scenario", choices=("small", "large", "medium"), default="small")
    sim.add_argument("--na", choices=("small", "large"), default="small")
    sim.add_argument("--nb", choices=("small", "large"), default="small")
    sim.add_argument("--replicates", type=int, default=1000)
    sim.add_argument("--seed", type=int, default=1)
    sim.add_argument("--estimators", type=_list, default=["HAR", "SF", "SFRR", "CAL"])
    sim.add_argument("--distances", type=_list,
                     default=["euclidean", "raking", "logit", "kullback_leibler"])
    sim.add_argument("--aux-cases", type=_list, default=["1", "2", "3", "4"])
    sim.add_argument("--sizes", choices=("fixed", "binomial"), default="fixed")
    sim.add_argument("--overlap-constraint", action="store_true")
    sim.add_argument("--variance", type=_list, default=[],
                     help="variance methods for CAL estimators, e.g. linearization,jackknife-fpc")
    sim.add_argument("--ci", type=_level, default=0.95)
    sim.add_argument("--n-jobs", type=int, default=1)
    sim.add_argument("--output", help="report path; .csv selects CSV, anything else text")
    sim.add_argument("--config", help="key = value file supplying option defaults")
    return parser


# --------------------------------------------------------------------------
# config handling


def _option_keys(sub: argparse.ArgumentParser) -> dict[str, argparse.Action]:
    return {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}


def _subparser(parser, command) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def parse_args(argv):
    """Parse ``argv``; values from ``--config`` act as defaults that
    explicit flags override.  Returns ``(args, meta_entries)``."""
    parser = build_parser()
    args = parser.parse_args(argv)
    meta_entries = {}
    if getattr(args, "config", None):
        try:
            entries = read_key_values(args.config)
        except OSError as exc:
            raise CLIError(f"cannot read config: {exc}", EXIT_IO) from exc
        sub = _subparser(parser, args.command)
        known = _option_keys(sub)
        defaults = {}
        for key, value in entries.items():
            dest = key.replace("-", "_")
            if key.startswith(META_PREFIXES):
                meta_entries[key] = value
            elif dest == "command":
                continue
            elif dest in FLAG_KEYS:
                defaults[dest] = value.lower() in ("1", "true", "yes")
            elif dest in known:
                defaults[dest] = value
            else:
                raise CLIError(f"unknown config key {key!r}", EXIT_VALIDATION)
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args, meta_entries


def _echo_value(value) -> str:
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value).lower() if isinstance(value, bool) else str(value)


def config_echo(args) -> list[str]:
    skip = {"config", "verbose", "output", "json", "weights_out", "n_jobs"}
    lines = [f"command = {args.command}"]
    for key, value in sorted(vars(args).items()):
        if key in skip or key == "command" or value is None:
            continue
        lines.append(f"{key} = {_echo_value(value)}")
    return lines


# --------------------------------------------------------------------------
# estimate / calibrate


def _load_inputs(args, meta_entries):
    if not args.sample:
        raise CLIError("--sample is required", EXIT_VALIDATION)
    entries = dict(meta_entries)
    if args.meta:
        try:
            entries.update(read_key_values(args.meta))
        except OSError as exc:
            raise CLIError(f"cannot read metadata: {exc}", EXIT_IO) from exc
    meta = parse_meta(entries)
    try:
        sample = load_sample(args.sample, {"aux": args.aux_columns}, args.approach, meta)
    except OSError as exc:
        raise CLIError(f"cannot read sample: {exc}", EXIT_IO) from exc
    designs = parse_designs(entries, sample)
    return sample, designs


def _fit(args, sample, designs):
    est = DualFrameCalibration(
        approach=args.approach, aux_case=args.aux_case, distance=args.distance, eta=args.eta,
        x_vars=args.x_vars, group_var=args.group_var,
        overlap_variable=args.variable if args.overlap_constraint else None,
        bounds=args.logit_bounds, tol=args.tol, max_iter=args.max_iter)
    return est.fit(sample, designs)


def _uncalibrated(args, sample, designs):
    """Hartley (dual) or single-frame (single) estimate with its variance."""
    from .estimators import domain_size_estimates, estimate_eta

    eta = None
    if args.approach == "dual":
        eta = args.eta
        if eta == "estimate":
            eta = estimate_eta(sample.meta, domain_size_estimates(sample, designs))
    base = base_weights(sample, args.approach, eta)
    point = weighted_total(base, args.variable)
    variance = None
    if args.variance == "linearization":
        y = np.where(base.values != 0, sample.variable(args.variable), 0.0)
        comp = frame_variance(sample, base.values * y, designs)
        variance = _make_estimate(point, comp[0] + comp[1], "linearization", args.ci, comp)
    elif args.variance != "none":
        variance = jackknife_variance(
            sample, lambda s: weighted_total(base_weights(s, args.approach, eta), args.variable),
            designs, fpc=args.variance == "jackknife-fpc", level=args.ci, point=point)
    return base, eta, point, variance


def weights_csv(base, weights) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "base_weight", "calibrated_weight", "ratio"])
    for uid, d, w in zip(weights.sample.ids, base.values, weights.values):
        ratio = repr(float(w / d)) if d != 0 else ""
        writer.writerow([uid, repr(float(d)), repr(float(w)), ratio])
    return buf.getvalue()


def _run_sample_command(args, meta_entries) -> tuple[str, dict]:
    sample, designs = _load_inputs(args, meta_entries)
    machine = {"command": args.command, "version": __version__, "variable": args.variable,
               "approach": args.approach}
    lines = [f"dualcal {__version__} {args.command}", ""]
    counts = sample.counts
    lines.append("sample: " + ", ".join(f"n_{k} = {v}" for k, v in counts.items()))

    if args.aux_case is None:
        if args.command == "calibrate":
            raise CLIError("calibrate needs --aux-case", EXIT_VALIDATION)
        base, eta, point, variance = _uncalibrated(args, sample, designs)
        name = "Hartley" if args.approach == "dual" else "single-frame"
        machine.update(estimator=name, eta=eta, estimate=point)
        lines.append(f"estimator: {name}")
    else:
        est = _fit(args, sample, designs)
        result = est.result_
        point = est.estimate(args.variable)
        eta = est.eta_
        variance = None
        if args.variance != "none":
            variance = est.variance(args.variable, args.variance, level=args.ci)
        diag = result.diagnostics()
        machine.update(estimator=f"calibration/{result.distance.kind}/case {args.aux_case}",
                       eta=eta, estimate=point, diagnostics=diag)
        lines.append(f"estimator: calibration, distance {result.distance.kind}, "
                     f"aux case {args.aux_case}")
        lines += ["", "diagnostics:",
                  "  lambda = " + ", ".join(repr(v) for v in diag["lambda"]),
                  f"  iterations = {diag['iterations']}",
                  f"  max_constraint_residual = {diag['max_constraint_residual']!r}",
                  f"  negative_weights = {diag['negative_weights']}",
                  f"  converged = {str(diag['converged']).lower()}"]
        if diag["dropped_columns"]:
            lines.append("  dropped_columns = " + ", ".join(diag["dropped_columns"]))
        base = est.base_
    if eta is not None:
        lines.insert(3, f"eta = {eta!r}")
    lines += ["", f"total[{args.variable}] = {point!r}"]
    if variance is not None:
        machine["variance"] = {"method": variance.method, "variance": variance.variance,
                               "se": variance.se, "ci_level": variance.ci_level,
                               "lb": variance.lb, "ub": variance.ub, "length": variance.length}
        lines += [f"variance ({variance.method}) = {variance.variance!r}",
                  f"{variance.ci_level:g} interval = [{variance.lb!r}, {variance.ub!r}]"]
    if args.command == "calibrate":
        table = weights_csv(base, est.weights_)
        if args.weights_out:
            _write(args.weights_out, table)
            lines += ["", f"weights written to {args.weights_out}"]
            machine["weights_file"] = args.weights_out
        else:
            lines += ["", "weights:", table.rstrip("\n")]
    return "\n".join(lines), machine


# --------------------------------------------------------------------------
# simulate


def _run_simulate(args) -> tuple[str, dict]:
    from .simulation import (ScenarioConfig, default_estimators, render_csv, render_text,
                             run_monte_carlo)

    config = ScenarioConfig.for_scenario(args.scenario, args.na, args.nb, sizes=args.sizes)
    kinds = [k.upper() for k in args.estimators]
    unknown = set(kinds) - {"HAR", "SF", "SFRR", "CAL"}
    if unknown:
        raise CLIError(f"unknown estimator(s) {sorted(unknown)}", EXIT_VALIDATION)
    estimators = default_estimators(args.distances, args.aux_cases, kinds,
                                    args.overlap_constraint)
    methods = [m.replace("-", "_") for m in args.variance]
    report = run_monte_carlo(config, estimators, args.replicates, args.seed,
                             variance_methods=methods,
                             variance_for=lambda s: s.kind == "CAL" and not s.restricted,
                             level=args.ci, n_jobs=args.n_jobs)
    as_csv = bool(args.output) and Path(args.output).suffix.lower() == ".csv"
    text = render_csv(report, __version__) if as_csv else render_text(report, __version__)
    machine = {"command": "simulate", "version": __version__, "seed": args.seed,
               "replicates": args.replicates, "scenario": args.scenario,
               "estimators": [{"label": s.spec.label, "rb": s.rb, "rmse100": s.rmse100,
                               "ge": s.ge, "failures": s.failures} for s in report.summaries]}
    return text, machine


# --------------------------------------------------------------------------


def _write(path, text):
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise CLIError(f"cannot write {path}: {exc}", EXIT_IO) from exc


def _machine_block(machine: dict) -> str:
    return json.dumps(machine, sort_keys=True, allow_nan=True)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    machine = {}
    args = None
    try:
        args, meta_entries = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "simulate":
            body, machine = _run_simulate(args)
        else:
            body, machine = _run_sample_command(args, meta_entries)
        machine["config"] = dict(line.split(" = ", 1) for line in config_echo(args))
        if args.command == "simulate" and args.output:
            _write(args.output, body)
            text = f"report written to {args.output}\n"
        else:
            text = body.rstrip("\n") + "\n"
        text += "\nconfig:\n" + "\n".join(config_echo(args)) + "\n"
        text += "\nmachine:\n" + _machine_block(machine) + "\n"
        if args.command != "simulate" and args.output:
            _write(args.output, text)
        else:
            sys.stdout.write(text)
        if getattr(args, "json", None):
            _write(args.json, _machine_block(machine) + "\n")
        return 0
    except CLIError as exc:
        code, message = exc.code, str(exc)
    except CalibrationError as exc:
        code, message = EXIT_CONVERGENCE, str(exc)
    except (SampleValidationError, VarianceError, KeyError, ValueError) as exc:
        code, message = EXIT_VALIDATION, str(exc)
    except OSError as exc:
        code, message = EXIT_IO, str(exc)
    failure = dict(machine, status="error", exit_code=code, error=message)
    sys.stderr.write(f"error: {message}\n\nmachine:\n{_machine_block(failure)}\n")
    if args is not None and getattr(args, "json", None):
        try:
            Path(args.json).write_text(_machine_block(failure) + "\n")
        except OSError:
            pass
    return code


if __name__ == "__main__":
    sys.exit(main())
