"""``oamdiv`` command line: fig1, fig2, kinoform, petals, validate, field-dump.

Exit codes: 0 success, 1 configuration error, 2 guard failure, 3 a
numerical self-check failed.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import experiments as ex
from .errors import ConfigError, GridResolutionError, PropagationWindowError

EXIT_OK, EXIT_CONFIG, EXIT_GUARD, EXIT_TOLERANCE = 0, 1, 2, 3


def _config(args) -> ex.ExperimentConfig:
    config = ex.load_config(args.config) if args.config else ex.ExperimentConfig()
    changes = {}
    if args.out:
        changes["output"] = args.out
    if args.grid_n:
        changes["grid_n"] = args.grid_n
    if args.ell_max is not None:
        changes["ell_max"] = args.ell_max
    try:
        return replace(config, **changes)
    except ConfigError as exc:
        raise ConfigError(f"command line: {exc}") from None


def _conventions(args, allowed):
    if args.convention in (None, "both"):
        return tuple(allowed)
    if args.convention not in allowed:
        raise ConfigError(f"--convention must be one of {', '.join(allowed)} or both")
    return (args.convention,)


def _report(result: ex.RunResult) -> int:
    for path in result.files:
        print(path)
    for failure in result.failures:
        print(f"self-check failed: {failure}", file=sys.stderr)
    return EXIT_OK if result.ok else EXIT_TOLERANCE


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI experiment configuration")
    common.add_argument("--out", help="output directory (overrides [experiment] output)")
    common.add_argument("--grid-n", type=int, help="grid points per axis")
    common.add_argument("--ell-max", type=int, help="largest |ell| in the sweep")
    common.add_argument("--convention", help="fixed_w0, fixed_rms or both")

    parser = argparse.ArgumentParser(prog="oamdiv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("fig1", parents=[common], help="r(I_max) and r_rms against ell")
    sub.add_parser("fig2", parents=[common], help="divergence scaling, analytic and propagated")
    sub.add_parser("kinoform", parents=[common], help="spiral-phase beams: divergence and p-spectra")
    sub.add_parser("petals", parents=[common], help="petal count and spacing of +/-ell superpositions")
    sub.add_parser("validate", parents=[common], help="check all grid guards without running")
    dump = sub.add_parser("field-dump", parents=[common], help="write one LG field in OAMF format")
    dump.add_argument("--ell", type=int, required=True)
    dump.add_argument("--p", type=int, default=0)
    dump.add_argument("--z", type=float, default=0.0, help="plane in meters from the waist")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _config(args)
        if args.command == "fig1":
            return _report(ex.run_fig1(config))
        if args.command == "fig2":
            return _report(ex.run_fig2(config, _conventions(args, ("fixed_w0", "fixed_rms"))))
        if args.command == "kinoform":
            return _report(ex.run_kinoform(config))
        if args.command == "petals":
            return _report(ex.run_petals(config, _conventions(args, ("fixed_w0", "fixed_rms"))))
        if args.command == "validate":
            report = ex.validate(config)
            for line in report.warnings:
                print(f"warning: {line}")
            for line in report.failures:
                print(f"guard failed: {line}")
            if report.ok:
                print("all guards pass")
            return EXIT_OK if report.ok else EXIT_GUARD
        convention = _conventions(args, ("fixed_w0", "fixed_rms"))[0]
        print(ex.dump_field(config, args.ell, args.p, convention, args.z))
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GridResolutionError, PropagationWindowError) as exc:
        print(f"guard failed: {exc}", file=sys.stderr)
        return EXIT_GUARD


if __name__ == "__main__":
    sys.exit(main())
