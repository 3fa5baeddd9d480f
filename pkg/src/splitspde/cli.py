"""Command-line front door.

    splitspde check    --preset unbalanced
    splitspde simulate --config run.json --n 32 --out traj/
    splitspde converge --preset transport --paths 200 --grid 128 --out study/
    splitspde oracle   --preset transport --n 32

Summary lines meant for scripts start with ``RATE:``, ``CHECK:`` or ``ERROR:``.
Exit codes: 0 success, 1 bad input, 2 analytic assumptions fail, 3 blow-up.

The config file is a JSON object whose keys are the fields of
:class:`~splitspde.harness.StudyConfig` plus ``n`` (the step count used by
``simulate`` and ``oracle``); see :data:`CONFIG_SCHEMA`.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .harness import (
    AssumptionFailure,
    StudyBlowUp,
    StudyConfig,
    run_study,
    write_plot_script,
    write_report,
)
from .noise import generate
from .operators import check_assumptions
from .presets import PRESETS
from .solvers import NumericalBlowUp, oracle_trajectory, run_splitting
from .spectral import coeff_norm

log = logging.getLogger("splitspde")

EXIT_OK, EXIT_INPUT, EXIT_ASSUMPTION, EXIT_BLOWUP = 0, 1, 2, 3

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "preset": {"enum": list(PRESETS)},
        "model": {
            "type": "object",
            "required": ["drifts"],
            "properties": {
                "name": {"type": "string"},
                "dim": {"enum": [1, 2]},
                "drifts": {"type": "array", "minItems": 2, "items": {"type": "object"}},
                "noises": {"type": "array", "items": {"type": "object"}},
                "initial": {"oneOf": [{"type": "string"}, {"type": "object"}]},
                "oracle": {"type": "array"},
            },
        },
        "params": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dim": {"enum": [1, 2]},
                "sigma": {"type": "number"},
                "tau": {"type": "number"},
                "amplitude": {"type": "number"},
            },
        },
        "grid": {"type": "integer", "minimum": 4},
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "sobolev": {"type": "integer", "minimum": 0},
        "moment": {"type": "number", "minimum": 2},
        "steps": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
        "ref_multiplier": {"type": "integer", "minimum": 1},
        "fine_steps": {"type": ["integer", "null"], "minimum": 1},
        "paths": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "scheme": {"enum": ["lie", "strang"]},
        "use_oracle": {"type": "boolean"},
        "n": {"type": "integer", "minimum": 1},
        "out": {"type": ["string", "null"]},
    },
}


class ConfigError(ValueError):
    pass


def _error(msg: str):
    print(f"ERROR: {msg}")


def load_config(path) -> dict:
    """Parse and schema-check a JSON config; diagnostics name the line or field."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    problems = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if problems:
        lines = []
        for e in problems:
            where = "/".join(str(p) for p in e.absolute_path) or "<root>"
            lines.append(f"{path}: field '{where}': {e.message}")
        raise ConfigError("; ".join(lines))
    return data


def _parse_steps(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--steps expects comma-separated integers, got {text!r}") from None


def resolve(args) -> tuple[StudyConfig, int | None]:
    """Merge config file, flags and the SPLITSPDE_SEED fallback into a study config."""
    data = load_config(args.config) if args.config else {}
    n = data.pop("n", None)
    if args.preset:
        data.pop("model", None)
        data["preset"] = args.preset
    elif "model" in data:
        data.setdefault("preset", None)
    overrides = {
        "seed": args.seed, "paths": args.paths, "grid": args.grid, "steps": args.steps,
        "sobolev": args.sobolev, "moment": args.moment, "out": args.out, "scheme": args.scheme,
        "ref_multiplier": args.ref_multiplier, "horizon": args.horizon,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    if "seed" not in data:
        env = os.environ.get("SPLITSPDE_SEED")
        if env is not None:
            try:
                data["seed"] = int(env)
            except ValueError:
                raise ConfigError(f"SPLITSPDE_SEED must be an unsigned integer, got {env!r}") from None
    if not 0 <= int(data.get("seed", 0)) < 2**64:
        raise ConfigError("seed must fit in an unsigned 64-bit integer")
    if getattr(args, "n", None) is not None:
        n = args.n
    try:
        cfg = StudyConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg, n


# -- subcommands ---------------------------------------------------------------

def cmd_check(args) -> int:
    cfg, _ = resolve(args)
    model = cfg.build_model()
    report = check_assumptions(model)
    print(f"CHECK: model {model.name}")
    for msg in report.messages:
        print(f"CHECK: {msg}")
    print(f"CHECK: min_eigenvalue={report.min_eigenvalue:.6g}")
    print(f"CHECK: {'PASS' if report.ok else 'FAIL'}")
    return EXIT_OK if report.ok else EXIT_ASSUMPTION


def cmd_converge(args) -> int:
    cfg, _ = resolve(args)
    out = Path(cfg.out or "splitspde_study")

    def progress(done, total):
        log.info("path %d/%d", done, total)

    report = run_study(cfg, jobs=args.jobs, progress=progress)
    write_report(report, out)
    script = write_plot_script(out)
    print(f"{'n':>6} {'root_error':>14} {'std_err':>12}")
    for n, _, root, se, _ in report.rows():
        print(f"{n:>6} {root:>14.6e} {se:>12.3e}")
    if report.exact:
        print("RATE: exact (below tolerance)")
    elif report.slope is None:
        print(f"RATE: not fitted (fewer than two n above tolerance; excluded {report.excluded})")
    else:
        print(f"RATE: slope={report.slope:.4f} r_squared={report.r_squared:.4f}"
              + (f" excluded={report.excluded}" if report.excluded else ""))
    print(f"wrote {out / 'report.csv'}, {out / 'report.json'} and {script}")
    return EXIT_OK


def _one_path(cfg: StudyConfig, n: int | None):
    model = cfg.build_model()
    n = n or max(cfg.steps)
    path = generate(cfg.seed, len(model.noises), model.horizon, cfg.path_steps)
    if model.noises and cfg.path_steps % n:
        raise ValueError(f"n={n} does not divide the path resolution {cfg.path_steps}")
    return model, n, path


def cmd_simulate(args) -> int:
    cfg, n = resolve(args)
    model, n, path = _one_path(cfg, n)
    traj = run_splitting(model, n, path, cfg.scheme)
    out = Path(cfg.out or "splitspde_run")
    out.mkdir(parents=True, exist_ok=True)
    np.save(out / "times.npy", traj.times)
    np.save(out / "states.npy", traj.coeffs)
    print(f"model {model.name}, n={n}, seed={cfg.seed}, T={model.horizon:g}")
    for m in range(4):
        z0 = coeff_norm(model.grid, traj.coeffs[0], m)
        zT = coeff_norm(model.grid, traj.coeffs[-1], m)
        print(f"H^{m} norm: initial={z0:.12e} final={zT:.12e}")
    print(f"wrote {out / 'times.npy'} and {out / 'states.npy'}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg, n = resolve(args)
    model, n, path = _one_path(cfg, n)
    if model.oracle is None:
        _error(f"model {model.name} has no closed-form oracle")
        return EXIT_INPUT
    traj = run_splitting(model, n, path, cfg.scheme)
    exact = oracle_trajectory(model, path, traj.times)
    m = model.sobolev
    errs = [coeff_norm(model.grid, a - b, m) for a, b in zip(traj.coeffs, exact.coeffs)]
    for t, e in zip(traj.times, errs):
        print(f"t={t:.6f} error_H{m}={e:.6e}")
    print(f"max error_H{m}={max(errs):.6e} (n={n}, seed={cfg.seed})")
    return EXIT_OK


COMMANDS = {"check": cmd_check, "simulate": cmd_simulate, "converge": cmd_converge, "oracle": cmd_oracle}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON study/model config")
    common.add_argument("--preset", choices=PRESETS, help="named model (overrides the config's model)")
    common.add_argument("--seed", type=int, metavar="U64", help="master seed (fallback: $SPLITSPDE_SEED)")
    common.add_argument("--paths", type=int, metavar="M", help="Monte Carlo sample count")
    common.add_argument("--grid", type=int, metavar="N", help="grid points per dimension")
    common.add_argument("--steps", type=_parse_steps, metavar="n1,n2,...", help="splitting step counts")
    common.add_argument("--sobolev", type=int, metavar="m", help="Sobolev index of the error norm")
    common.add_argument("--moment", type=float, metavar="p", help="moment of the strong error")
    common.add_argument("--horizon", type=float, metavar="T")
    common.add_argument("--scheme", choices=("lie", "strang"))
    common.add_argument("--ref-multiplier", type=int, dest="ref_multiplier",
                        help="reference steps per largest n")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="splitspde", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="check stochastic parabolicity")
    p = sub.add_parser("simulate", parents=[common], help="one splitting run on one path")
    p.add_argument("--n", type=int, help="number of splitting steps (default: largest of --steps)")
    p = sub.add_parser("converge", parents=[common], help="Monte Carlo strong-convergence study")
    p.add_argument("--jobs", type=int, default=_default_jobs(), metavar="K",
                   help="worker processes (default: available cores)")
    p = sub.add_parser("oracle", parents=[common], help="splitting vs closed form on one path")
    p.add_argument("--n", type=int, help="number of splitting steps (default: largest of --steps)")
    return parser


def _default_jobs() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except AssumptionFailure as exc:
        _error(f"assumptions fail: {exc}")
        return EXIT_ASSUMPTION
    except StudyBlowUp as exc:
        _error(f"numerical blow-up on path {exc.path_index}, n={exc.n}: {exc.detail}")
        return EXIT_BLOWUP
    except NumericalBlowUp as exc:
        _error(f"numerical blow-up at n={exc.n}, t={exc.time}: {exc}")
        return EXIT_BLOWUP
    except (ValueError, OSError) as exc:
        _error(str(exc))
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
