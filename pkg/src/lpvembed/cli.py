"""Command-line interface.

    lpvembed embed   --model sys.nlsys [--pf 1 --pg 0 --sched 3 ...]
    lpvembed eval    --model out/model.json --x 0.1,0.2 --u 1
    lpvembed bench   example1-s1 [--sched 1,2,3] [--out out]
    lpvembed inspect out/model.json

Exit status is 0 on success, 2 for usage errors (bad flags, malformed
values, missing files, unknown cases) and 1 when a pipeline stage fails.
Diagnostics go to stderr; results go to files and a short summary to stdout.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import bench
from .lpvcore import SchemaError, export_model, import_model, eval_lpv, true_dynamics
from .pipeline import RunConfig, prepare
from .schedpca import write_vm_csv
from .sysmodel import STRATEGIES, ModelError

__all__ = ["main", "build_parser", "parse_csv_floats", "parse_csv_ints"]

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("lpvembed")


class UsageError(Exception):
    pass


def parse_csv_floats(text: str) -> np.ndarray:
    """``"0.1, -2,3e-1"`` -> array; raises UsageError on anything else."""
    parts = [p.strip() for p in text.split(",")]
    if not parts or any(p == "" for p in parts):
        raise UsageError(f"malformed value list {text!r}")
    try:
        values = np.array([float(p) for p in parts])
    except ValueError:
        raise UsageError(f"malformed value list {text!r}") from None
    if not np.all(np.isfinite(values)):
        raise UsageError(f"non-finite value in {text!r}")
    return values


def parse_csv_ints(text: str) -> tuple[int, ...]:
    parts = [p.strip() for p in text.split(",")]
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise UsageError(f"malformed integer list {text!r}") from None


def _add_run_flags(p: argparse.ArgumentParser, sched_help: str) -> None:
    p.add_argument("--pf", type=int, help="degree of the f approximants (>= 1)")
    p.add_argument("--pg", type=int, help="degree of the g approximants (>= 0)")
    p.add_argument("--gamma", type=float, help="fixed l1 weight for every fit")
    p.add_argument("--gamma-scale", type=float, dest="gamma_scale",
                   help="default weight is SCALE*(N+1)*var(y) per function")
    p.add_argument("--samples", type=int, help="number of sample points N+1")
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--seed", type=int)
    p.add_argument("--sched", help=sched_help)
    p.add_argument("--order", help="factor order as a 1-based permutation, e.g. 2,1")
    p.add_argument("--margin", type=float, help="bound padding as a fraction of half-range")
    p.add_argument("--out", help="output directory (default: out)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lpvembed",
                                     description="LPV embedding of control-affine systems")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", help="embed a system and export the LPV model")
    p.add_argument("--model", help="system file (.nlsys)")
    p.add_argument("--config", help="JSON run configuration; flags override it")
    _add_run_flags(p, "number of PCA scheduling variables v")
    p.add_argument("--vm-target", type=float, dest="vm_target",
                   help="keep the fewest components reaching this v_m")

    p = sub.add_parser("eval", help="evaluate an exported model at one point")
    p.add_argument("--model", required=True, help="exported model (.json)")
    p.add_argument("--x", required=True, help="state, comma separated")
    p.add_argument("--u", required=True, help="input, comma separated")

    p = sub.add_parser("bench", help="run a bundled benchmark case")
    p.add_argument("case", help=f"one of {', '.join(sorted(bench.CASES))}")
    _add_run_flags(p, "comma-separated sweep of v values")

    p = sub.add_parser("inspect", help="print the summary of an exported model")
    p.add_argument("model", help="exported model (.json)")
    return parser


def _require_file(path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"file not found: {path}")
    return path


def _run_overrides(args) -> dict:
    keys = ("pf", "pg", "gamma", "gamma_scale", "samples", "strategy", "seed", "margin")
    out = {k: getattr(args, k) for k in keys}
    out["order"] = None if args.order is None else parse_csv_ints(args.order)
    return out


def _print_matrix(name: str, M: np.ndarray) -> None:
    print(f"{name} =")
    if M.size == 0:
        print(f"  (empty {M.shape[0]}x{M.shape[1]})")
        return
    for row in M:
        print("  " + " ".join(f"{v: .10e}" for v in row))


def _print_vector(name: str, v: np.ndarray) -> None:
    print(f"{name} = [" + ", ".join(f"{x:.10e}" for x in v) + "]")


def cmd_embed(args) -> int:
    overrides = _run_overrides(args)
    sched = None
    if args.sched is not None:
        values = parse_csv_ints(args.sched)
        if len(values) != 1:
            raise UsageError("embed takes a single --sched value")
        sched = values[0]
    overrides.update(model=args.model, sched=sched, vm_target=args.vm_target, out=args.out)
    try:
        if args.config is not None:
            cfg = RunConfig.from_file(_require_file(args.config), **overrides)
        else:
            cfg = RunConfig(**{k: v for k, v in overrides.items() if v is not None})
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    if cfg.model is None:
        raise UsageError("--model is required")
    _require_file(cfg.model)

    stages = prepare(cfg)
    model = stages.model()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    export_model(model, out / "model.json")
    write_vm_csv(out / "vm.csv", stages.svd.sigma)
    print(f"v = {model.v}  v_m = {model.reduction.vm:.4f}")
    print(model.summary())
    print(f"model written to {out / 'model.json'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    x = parse_csv_floats(args.x)
    u = parse_csv_floats(args.u)
    model = import_model(_require_file(args.model))
    if x.size != model.n or u.size != model.m:
        raise UsageError(f"model needs {model.n} state and {model.m} input values; "
                         f"got {x.size} and {u.size}")
    res = eval_lpv(model, x, u)
    xdot, y = true_dynamics(model.sys, x[None, :], u[None, :])
    for name in "ABCD":
        _print_matrix(name, getattr(res, name))
    if res.theta.size:
        _print_vector("theta", res.theta)
    _print_vector("xdot_hat", res.xdot)
    _print_vector("xdot", xdot[0])
    _print_vector("xdot_error", res.xdot - xdot[0])
    if model.q:
        _print_vector("y_hat", res.y)
        _print_vector("y", y[0])
        _print_vector("y_error", res.y - y[0])
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.case not in bench.CASES:
        raise UsageError(f"unknown case {args.case!r}; choose from {sorted(bench.CASES)}")
    sweep = None if args.sched is None else parse_csv_ints(args.sched)
    try:
        report = bench.run_case(args.case, args.out or "out", sweep=sweep,
                                **_run_overrides(args))
    except TypeError as exc:
        raise UsageError(str(exc)) from None
    for v, vm in report.vm.items():
        print(f"v = {v}  n_sched = {report.n_sched[v]}  v_m = {vm:.4f}")
    print(f"outputs written to {report.paths['vm'].parent}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    model = import_model(_require_file(args.model))
    print(model.summary())
    return EXIT_OK


COMMANDS = {"embed": cmd_embed, "eval": cmd_eval, "bench": cmd_bench, "inspect": cmd_inspect}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"lpvembed {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"lpvembed {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelError, SchemaError, ValueError, ArithmeticError, RuntimeError,
            OSError) as exc:
        print(f"lpvembed {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
