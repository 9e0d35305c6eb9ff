"""Command line front end.

Three subcommands: ``run`` executes a single configuration, ``preset``
expands a named bundle of runs, ``summarize`` reduces run directories to
boxplot statistics. Exit codes: 0 on success, 2 for configuration errors,
3 for numeric failures (degenerate weights, audit mismatches, and the
like). Heavy imports happen inside the handlers so ``--help`` stays fast.

``run`` options may also come from a flat key=value config file
(``--config FILE``; ``#`` starts a comment, dashes and underscores in
keys are interchangeable). Explicit flags override file values.
"""
from __future__ import annotations

import argparse
import sys

__all__ = ["main"]

_RUN_TYPES = {
    "model": str, "algo": str, "d": int, "rows": int, "cols": int,
    "n": int, "t": int, "reps": int, "seed": int, "theta": int,
    "ess_target": float, "temper": bool, "out": str, "workers": int,
    "full_cap": int, "tau": float, "lam": float, "sigma_y2": float,
    "sigma_x2": float, "r_y": int, "nu": float,
    "no_theta": bool, "no_timing": bool,
}

_RUN_DEFAULTS = {
    "t": 10, "reps": 1, "seed": 0, "temper": False, "workers": 1,
    "no_theta": False, "no_timing": False,
}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dacpf",
        description="divide-and-conquer particle filtering benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute one configuration")
    run.add_argument("--config", help="key=value file with defaults for the flags below")
    run.add_argument("--model", choices=("lgssm", "spatial"))
    run.add_argument("--d", type=int, help="state dimension (lgssm)")
    run.add_argument("--rows", type=int, help="lattice rows (spatial)")
    run.add_argument("--cols", type=int, help="lattice columns (spatial)")
    run.add_argument("--algo", choices=(
        "dac-adaptive", "dac-lightweight", "dac-full", "dac-linear", "bpf", "kalman"))
    run.add_argument("--n", type=int, help="particles per node")
    run.add_argument("--t", type=int, help="number of time steps (default 10)")
    run.add_argument("--reps", type=int, help="independent repetitions (default 1)")
    run.add_argument("--seed", type=int, help="master seed (default 0)")
    run.add_argument("--theta", type=int, help="extra permutation blocks (lightweight merges)")
    run.add_argument("--ess-target", dest="ess_target", type=float,
                     help="ESS target for adaptive merges (absolute count, default N)")
    run.add_argument("--temper", type=_parse_bool, metavar="BOOL",
                     help="temper adaptive merges that hit the theta cap")
    run.add_argument("--out", help="run directory to create")
    run.add_argument("--workers", type=int, help="process pool size (default 1)")
    run.add_argument("--full-cap", dest="full_cap", type=int,
                     help="particle cap for full mixture merges")
    run.add_argument("--tau", type=float)
    run.add_argument("--lam", type=float)
    run.add_argument("--sigma-y2", dest="sigma_y2", type=float)
    run.add_argument("--sigma-x2", dest="sigma_x2", type=float)
    run.add_argument("--r-y", dest="r_y", type=int)
    run.add_argument("--nu", type=float)
    run.add_argument("--no-theta", dest="no_theta", action="store_const", const=True,
                     help="skip theta.csv")
    run.add_argument("--no-timing", dest="no_timing", action="store_const", const=True,
                     help="skip timing.csv")

    preset = sub.add_parser("preset", help="run a named bundle of configurations")
    preset.add_argument("name")
    preset.add_argument("--out", required=True, help="parent directory for the run subdirectories")
    preset.add_argument("--workers", type=int, default=1)

    summ = sub.add_parser("summarize", help="reduce run directories to quartile statistics")
    summ.add_argument("in_path", metavar="IN")
    summ.add_argument("--out", required=True, help="summary csv to write")
    return parser


def _load_config(path: str) -> dict:
    from .core import InvalidParams

    values = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise InvalidParams(f"cannot read config file {path}: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidParams(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, text = line.partition("=")
            key = key.strip().replace("-", "_")
            text = text.strip()
            if key not in _RUN_TYPES:
                raise InvalidParams(f"{path}:{lineno}: unknown key {key!r}")
            kind = _RUN_TYPES[key]
            try:
                if kind is bool:
                    values[key] = _parse_bool(text)
                else:
                    values[key] = kind(text)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise InvalidParams(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return values


def _cmd_run(args) -> int:
    from .bench import ExperimentConfig, run_experiment
    from .core import InvalidParams

    merged = dict(_RUN_DEFAULTS)
    if args.config:
        merged.update(_load_config(args.config))
    for key in _RUN_TYPES:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            merged[key] = flag_value
    for key in ("model", "algo", "n", "out"):
        if merged.get(key) is None:
            raise InvalidParams(f"missing required option --{key}")
    cfg = ExperimentConfig(
        model=merged["model"], algo=merged["algo"], n=merged["n"],
        t_max=merged["t"], reps=merged["reps"], seed=merged["seed"],
        out=merged["out"], d=merged.get("d"), rows=merged.get("rows"),
        cols=merged.get("cols"), tau=merged.get("tau"), lam=merged.get("lam"),
        sigma_y2=merged.get("sigma_y2"), sigma_x2=merged.get("sigma_x2"),
        r_y=merged.get("r_y"), nu=merged.get("nu"), theta=merged.get("theta"),
        ess_target=merged.get("ess_target"), temper=merged["temper"],
        workers=merged["workers"], theta_out=not merged["no_theta"],
        timing_out=not merged["no_timing"],
        **({"full_cap": merged["full_cap"]} if "full_cap" in merged else {}),
    )
    out = run_experiment(cfg)
    print(f"wrote {out}")
    return 0


def _cmd_preset(args) -> int:
    from .bench import run_preset

    dirs = run_preset(args.name, args.out, workers=args.workers)
    for d in dirs:
        print(f"wrote {d}")
    return 0


def _cmd_summarize(args) -> int:
    from .bench import summarize

    out = summarize(args.in_path, args.out)
    print(f"wrote {out}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    from .core import DacError, InvalidParams, SchemaMismatch

    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "preset":
            return _cmd_preset(args)
        return _cmd_summarize(args)
    except (InvalidParams, SchemaMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DacError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
