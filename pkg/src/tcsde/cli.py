"""Command-line front end.

Subcommands: ``simulate-timechange``, ``solve``, ``converge``, ``probe``.
Values come from built-in defaults, then an optional flat JSON ``--config``
file, then command-line flags (flags win).  Every written file starts with a
comment header holding the effective configuration.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .convergence import PRESETS, ExperimentConfig, preset, run_experiment, write_report
from .duality import DEFAULT_ALPHA, sample_path_rows, solve_path
from .errors import ExtensionError, NumericalError, ParameterError, TcsdeError
from .integrators import DEFAULT_NEWTON_MAX_ITER, DEFAULT_NEWTON_TOL, DEFAULT_RHO, SCHEMES
from .models import ASSUMPTIONS, MODEL_NAMES, build_model, probe_assumption
from .output import default_output_dir, write_csv
from .streams import Substream, RngStream
from .time_change import generate_path, invert

log = logging.getLogger("tcsde")

EXIT_USAGE = 2
EXIT_NUMERICAL = 3

# CLI option -> builtin keyword, per model
MODEL_OPTIONS = {
    "quintic": {"eta": "eta", "moment_order": "moment_order"},
    "stiff2d": {"alpha_stiff": "alpha_stiff", "beta": "beta", "eta": "eta", "moment_order": "moment_order"},
    "linear": {"a": "a_coef", "b": "b_coef", "eta": "eta", "moment_order": "moment_order", "x0": "initial"},
}

_DYADIC = re.compile(r"^\s*2\s*(\^|\*\*)\s*(-?\d+)\s*$")


def parse_step(text) -> float:
    """Parse ``2^-8``, ``2**-8`` or a decimal into a float (dyadics exactly)."""
    if isinstance(text, (int, float)):
        return float(text)
    m = _DYADIC.match(str(text))
    if m:
        return math.ldexp(1.0, int(m.group(2)))
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a step size: {text!r}") from None


def parse_step_list(text) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(parse_step(v) for v in text)
    return tuple(parse_step(v) for v in str(text).split(",") if v.strip())


def parse_ladders(text) -> tuple[tuple[float, ...], ...]:
    if isinstance(text, (list, tuple)):
        return tuple(parse_step_list(v) for v in text)
    return tuple(parse_step_list(part) for part in str(text).split(";") if part.strip())


# --- argument parsing --------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat JSON file of option values")
    p.add_argument("--out", type=Path, help="output directory (default $TCSDE_OUTPUT_DIR or ./tcsde-out)")


def _model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--model", choices=MODEL_NAMES)
    g.add_argument("--alpha-stiff", dest="alpha_stiff", type=float, help="stiff2d: stiffness parameter")
    g.add_argument("--beta", type=float, help="stiff2d: noise intensity")
    g.add_argument("--a", type=float, help="linear: drift coefficient")
    g.add_argument("--b", type=float, help="linear: diffusion coefficient")
    g.add_argument("--x0", type=float, help="linear: initial value")
    g.add_argument("--eta", type=float, help="monotonicity exponent")
    g.add_argument("--moment-order", dest="moment_order", type=float, help="moment exponent p*")


def _newton_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--newton-tol", dest="newton_tol", type=float)
    p.add_argument("--newton-max-iter", dest="newton_max_iter", type=int)
    p.add_argument("--rho", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tcsde", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"tcsde {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-timechange", help="simulate D(t) and its discretized inverse E_h(t)")
    _common(p)
    p.add_argument("--alpha", type=float, help="stability index in (0, 1)")
    p.add_argument("--h", type=parse_step)
    p.add_argument("--T", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--path-index", dest="path_index", type=int)
    p.add_argument("--grid-points", dest="grid_points", type=int)

    p = sub.add_parser("solve", help="solve one time-changed path")
    _common(p)
    _model_flags(p)
    _newton_flags(p)
    p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument("--h", type=parse_step)
    p.add_argument("--T", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--path-index", dest="path_index", type=int)
    p.add_argument("--alpha", type=float, help="stability index of the subordinator")
    p.add_argument("--grid-points", dest="grid_points", type=int)

    p = sub.add_parser("converge", help="estimate strong errors and fit convergence rates")
    _common(p)
    _model_flags(p)
    _newton_flags(p)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--paper-scale", dest="paper_scale", action="store_true", default=None,
                   help="use the finer full-scale reference step instead of the desk-scale one")
    p.add_argument("--schemes", help="comma-separated, e.g. bem,pem")
    p.add_argument("--h0", type=parse_step, help="reference step")
    p.add_argument("--steps", type=parse_step_list, help="comma-separated coarse steps")
    p.add_argument("--ladders", type=parse_ladders, help="semicolon-separated step lists to fit separately")
    p.add_argument("--paths", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--path-offset", dest="path_offset", type=int)
    p.add_argument("--T", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--error-metric", dest="error_metric", choices=("rms", "sqrt-mae"))
    p.add_argument("--threads", type=int, help="worker threads (output does not depend on this)")

    p = sub.add_parser("probe", help="sample the growth/monotonicity assumptions of a model")
    _common(p)
    _model_flags(p)
    p.add_argument("--box", type=float, help="half-width of the sampling box")
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--K", dest="K", type=float, help="override the growth constant K")
    p.add_argument("--K1", dest="K1", type=float, help="override the one-sided Lipschitz constant K1")
    p.add_argument("--assumptions", help="comma-separated subset of A1,A2,A3,A4")
    return parser


DEFAULTS = {
    "simulate-timechange": {"alpha": None, "h": 2.0**-15, "T": 1.0, "seed": 0, "path_index": 0, "grid_points": 1001},
    "solve": {
        "model": "quintic", "scheme": "bem", "h": 2.0**-8, "T": 1.0, "seed": 0, "path_index": 0,
        "alpha": DEFAULT_ALPHA, "grid_points": 1001, "newton_tol": DEFAULT_NEWTON_TOL,
        "newton_max_iter": DEFAULT_NEWTON_MAX_ITER, "rho": DEFAULT_RHO,
    },
    "converge": {"threads": 1, "paper_scale": False},
    "probe": {"model": "quintic", "box": 3.0, "samples": 10_000, "seed": 0, "assumptions": "A1,A2,A3,A4"},
}

_EXECUTION_ONLY = {"out", "config", "threads", "command", "verbose"}


class UsageError(Exception):
    pass


def effective_options(command: str, args: argparse.Namespace) -> dict:
    opts = dict(DEFAULTS[command])
    if args.config is not None:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError("config file must hold a flat JSON object")
        known = set(vars(args)) - _EXECUTION_ONLY
        unknown = sorted(set(data) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        opts.update(data)
    for key, value in vars(args).items():
        if key in ("config", "command", "verbose") or value is None:
            continue
        opts[key] = value
    return opts


def provenance(opts: dict) -> dict:
    return {k: v for k, v in sorted(opts.items()) if k not in _EXECUTION_ONLY and v is not None}


def _model_from(opts: dict):
    name = opts.get("model")
    if name not in MODEL_NAMES:
        raise UsageError(f"--model must be one of {', '.join(MODEL_NAMES)}")
    allowed = MODEL_OPTIONS[name]
    overrides = {}
    for flag in ("alpha_stiff", "beta", "a", "b", "x0", "eta", "moment_order"):
        if opts.get(flag) is None:
            continue
        if flag not in allowed:
            raise UsageError(f"option --{flag.replace('_', '-')} does not apply to model {name}")
        overrides[allowed[flag]] = float(opts[flag])
    return name, overrides


def _out_dir(opts: dict) -> Path:
    out = opts.get("out")
    return Path(out) if out is not None else default_output_dir()


# --- commands --------------------------------------------------------------


def cmd_simulate_timechange(opts: dict) -> int:
    if opts.get("alpha") is None:
        raise UsageError("--alpha is required")
    alpha, h, T = float(opts["alpha"]), parse_step(opts["h"]), float(opts["T"])
    if not (0 < alpha < 1):
        raise UsageError(f"--alpha must lie in (0, 1), got {alpha}")
    if not (0 < h < 1):
        raise UsageError(f"--h must lie in (0, 1), got {h}")
    if not T > 0:
        raise UsageError(f"--T must be positive, got {T}")
    stream = RngStream(int(opts["seed"]), int(opts["path_index"]), Substream.SUBORDINATOR)
    path = generate_path(stream, alpha, h, T)
    inv = invert(path)
    out = _out_dir(opts)
    cfg = provenance(opts)
    n_last = path.terminal_index + 1
    d_rows = ((i * h, float(v)) for i, v in enumerate(path.values[: n_last + 1]))
    f1 = write_csv(out / "subordinator.csv", ["t", "D"], d_rows, cfg)
    t = np.linspace(0.0, T, int(opts["grid_points"]))
    f2 = write_csv(out / "inverse.csv", ["t", "E_h"], zip(t.tolist(), inv(t).tolist()), cfg)
    print(f"N={path.terminal_index} E_h(T)={inv.terminal_level:.17g}")
    print(f"wrote {f1} and {f2}")
    return 0


def cmd_solve(opts: dict) -> int:
    name, overrides = _model_from(opts)
    model = build_model(name, **overrides)
    h, T = parse_step(opts["h"]), float(opts["T"])
    result = solve_path(
        model, opts["scheme"], T, h, int(opts["seed"]), int(opts["path_index"]),
        alpha=float(opts["alpha"]),
        **({"newton_tol": float(opts["newton_tol"]), "newton_max_iter": int(opts["newton_max_iter"]),
            "rho": float(opts["rho"])} if opts["scheme"] == "bem" else {}),
    )
    out = _out_dir(opts)
    cfg = provenance(opts)
    cols = ["t"] + [f"x{i + 1}" for i in range(model.dim_state)]
    grid = np.linspace(0.0, T, int(opts["grid_points"]))
    f1 = write_csv(out / "path.csv", cols, sample_path_rows(result, grid), cfg)
    dual_rows = [(n * h, *map(float, y)) for n, y in enumerate(result.dual_trajectory)]
    f2 = write_csv(out / "dual.csv", ["s"] + cols[1:], dual_rows, cfg)
    print(f"X(T)={result.terminal_value.tolist()} E_h(T)={result.inverse.terminal_level:.17g} "
          f"newton_iterations={result.newton_iterations}")
    print(f"wrote {f1} and {f2}")
    return 0


def experiment_config(opts: dict) -> ExperimentConfig:
    if opts.get("preset"):
        base = preset(opts["preset"], bool(opts.get("paper_scale")))
    else:
        base = ExperimentConfig()
        if opts.get("paper_scale"):
            raise UsageError("--paper-scale requires --preset")
    changes = {}
    if opts.get("model") is not None:
        name, overrides = _model_from(opts)
        changes["model"] = name
        changes["model_overrides"] = {**(base.model_overrides if name == base.model else {}), **overrides}
    elif any(opts.get(k) is not None for k in ("alpha_stiff", "beta", "a", "b", "x0", "eta", "moment_order")):
        _, overrides = _model_from({**opts, "model": base.model})
        changes["model_overrides"] = {**base.model_overrides, **overrides}
    mapping = {
        "h0": ("fine_step", parse_step), "steps": ("steps", parse_step_list),
        "ladders": ("ladders", parse_ladders), "paths": ("n_paths", int), "seed": ("master_seed", int),
        "path_offset": ("path_offset", int), "T": ("horizon", float), "alpha": ("alpha", float),
        "error_metric": ("error_metric", str), "newton_tol": ("newton_tol", float),
        "newton_max_iter": ("newton_max_iter", int), "rho": ("rho", float),
    }
    for key, (field_name, conv) in mapping.items():
        if opts.get(key) is not None:
            changes[field_name] = conv(opts[key])
    if opts.get("schemes") is not None:
        schemes = opts["schemes"]
        schemes = schemes.split(",") if isinstance(schemes, str) else schemes
        changes["schemes"] = tuple(s.strip() for s in schemes if s.strip())
    if "steps" in changes and "ladders" not in changes:
        changes["ladders"] = ()
    return dataclasses.replace(base, **changes)


def cmd_converge(opts: dict) -> int:
    config = experiment_config(opts)
    threads = int(opts.get("threads") or 1)
    if threads < 1:
        raise UsageError("--threads must be at least 1")
    report = run_experiment(config, threads=threads)
    echo = {"tcsde_version": __version__, **config.as_dict()}
    files = write_report(report, _out_dir(opts), echo)
    sys.stdout.write((_out_dir(opts) / "summary.txt").read_text())
    for r in report.rates:
        if r.slope is None:
            print(f"note: {r.scheme} slope flagged undefined")
    print("wrote " + ", ".join(str(f) for f in files))
    return 0


def cmd_probe(opts: dict) -> int:
    name, overrides = _model_from(opts)
    model = build_model(name, **overrides)
    changes = {}
    if opts.get("K") is not None:
        changes["growth_constant"] = float(opts["K"])
    if opts.get("K1") is not None:
        changes["one_sided_lipschitz"] = float(opts["K1"])
    model = model.with_overrides(**changes) if changes else model
    which = [a.strip() for a in str(opts["assumptions"]).split(",") if a.strip()]
    bad = [a for a in which if a not in ASSUMPTIONS]
    if bad:
        raise UsageError(f"unknown assumptions: {', '.join(bad)}")
    rng = np.random.default_rng(int(opts["seed"]))
    reports = [probe_assumption(model, a, float(opts["box"]), int(opts["samples"]), rng) for a in which]
    print(f"{'assumption':<12}{'samples':>9}{'worst ratio':>16}{'fitted':>16}{'declared':>14}  result")
    for r in reports:
        print(f"{r.assumption:<12}{r.sampled_pairs:>9d}{r.worst_ratio:>16.6g}{r.fitted_constant:>16.6g}"
              f"{r.declared_constant:>14.6g}  {'pass' if r.passed else 'FAIL'}")
    if not all(r.passed for r in reports):
        print("(probe failures are advisory: the assumptions are global and sampling cannot prove them)")
    write_csv(
        _out_dir(opts) / "probe.csv",
        ["assumption", "sampled_pairs", "worst_ratio", "fitted_constant", "declared_constant", "pass"],
        [(r.assumption, r.sampled_pairs, r.worst_ratio, r.fitted_constant, r.declared_constant, int(r.passed))
         for r in reports],
        provenance(opts),
    )
    return 0


COMMANDS = {
    "simulate-timechange": cmd_simulate_timechange,
    "solve": cmd_solve,
    "converge": cmd_converge,
    "probe": cmd_probe,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        opts = effective_options(args.command, args)
        return COMMANDS[args.command](opts)
    except (UsageError, ParameterError, ExtensionError) as exc:
        print(f"tcsde {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"tcsde {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except TcsdeError as exc:
        print(f"tcsde {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
