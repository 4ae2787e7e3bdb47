"""Command-line entry point.

Exit codes: 0 success, 1 when a declared criterion fails (experiment flags,
lemma violations), 2 for usage errors and missing or malformed inputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .experiments import (
    ConfigError,
    ExperimentConfig,
    GridNotInformative,
    InsufficientSamples,
    atomic_write,
    field_from_spec,
    run,
    system_from_spec,
)
from .hormander import DEFAULT_TOL, check_condition_34, dim_lie_W
from .lemma_suite import run_lemma_suite
from .markov_sampler import EllipticityError, SamplerConfig, sample_path
from .nilpotent_group import GroupElement
from .path_tools import GroupPath, LinearPath, PathFormatError, lift_signature
from .rde_solver import solution_to_csv, solve
from .translation import DEFAULT_SUBSTEPS, translate
from .vector_fields import VectorFieldFormatError

EXPERIMENTS = ("support", "scaling-fit", "conditions", "density")


class UsageError(Exception):
    pass


def _emit(text: str, out: str | None) -> None:
    if out:
        atomic_write(out, text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _json_arg(value: str | None, name: str):
    if value is None:
        return None
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        path = Path(value)
        if not path.exists():
            raise UsageError(f"--{name}: not valid JSON and no such file: {value}")
        try:
            return json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"--{name}: {value} is not valid JSON ({exc.msg})") from exc


def _read_group_path(path: str) -> GroupPath:
    try:
        return GroupPath.from_json(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read path file {path}: {exc.strerror}") from exc
    except (KeyError, ValueError, TypeError) as exc:
        raise UsageError(f"malformed group path in {path}: {exc}") from exc


def _read_linear_path(path: str) -> LinearPath:
    try:
        return LinearPath.from_csv(path)
    except OSError as exc:
        raise UsageError(f"cannot read CSV {path}: {exc.strerror}") from exc


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    spec = _json_arg(args.field, "field") or {"kind": "identity"}
    a = field_from_spec(spec, args.d)
    cfg = SamplerConfig(steps_per_unit=args.steps, seed=args.seed)
    x = sample_path(a, GroupElement.identity(args.d, args.N), args.T, cfg, index=args.index)
    _emit(x.to_json(), args.out)
    return 0


def cmd_lift(args) -> int:
    h = _read_linear_path(args.h)
    _emit(lift_signature(h, args.N).to_json(), args.out)
    return 0


def cmd_translate(args) -> int:
    x = _read_group_path(args.path)
    h = _read_linear_path(args.h)
    substeps = None if args.exact else args.substeps
    _emit(translate(x, h, substeps).to_json(), args.out)
    return 0


def cmd_rde(args) -> int:
    V = system_from_spec(args.fields)
    X = _read_group_path(args.driver)
    y0 = np.zeros(V.e) if args.y0 is None else np.asarray(args.y0, dtype=float)
    states = solve(V, y0, X)
    _emit(solution_to_csv(X.times, states), args.out)
    return 0


def cmd_hormander(args) -> int:
    V = system_from_spec(args.fields)
    y0 = np.zeros(V.e) if args.y0 is None else np.asarray(args.y0, dtype=float)
    if y0.size != V.e:
        raise UsageError(f"--y0: expected {V.e} coordinates, got {y0.size}")
    verdict = check_condition_34(V, args.N, y0, args.depth, args.n_points, args.seed, args.tol)
    payload = verdict.to_dict()
    payload["dim_lie_W"] = dim_lie_W(V, args.N, y0, args.depth, args.tol)
    _emit(json.dumps(payload, sort_keys=True), args.out)
    return 0


def cmd_experiment(args) -> int:
    overrides = {
        "kind": args.command, "M": args.M, "seed": args.seed, "workers": args.workers, "T": args.T,
        "alphas": args.alpha, "steps_per_unit": args.steps, "V": args.fields,
        "output_json": args.out_json, "output_csv": args.out_csv,
    }
    if args.config:
        cfg = ExperimentConfig.from_file(args.config, overrides)
    else:
        cfg = ExperimentConfig.from_dict({}, overrides)
    report = run(cfg)
    if cfg.output_json or cfg.output_csv:
        report.write()
    if not cfg.output_json:
        sys.stdout.write(report.to_json())
    failed = [k for k, v in report.flags.items() if not v]
    for k in failed:
        print(f"criterion not met: {k}", file=sys.stderr)
    return 1 if failed else 0


def cmd_lemma_suite(args) -> int:
    report = run_lemma_suite(args.cases, args.seed)
    _emit(json.dumps(report.to_dict(), sort_keys=True, indent=2), args.out)
    return 1 if report.violations else 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="markovrp", description="Rough paths on free nilpotent groups: "
                                "simulation, translation, RDEs, bracket checks and experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate one diffusion path and print it as JSON")
    s.add_argument("--field", help='matrix field spec as JSON or file, e.g. {"kind": "identity"}')
    s.add_argument("--d", type=int, default=2)
    s.add_argument("--N", type=int, default=2)
    s.add_argument("--T", type=float, default=1.0)
    s.add_argument("--steps", type=int, default=256, help="steps per unit time")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--index", type=int, default=0, help="path substream index")
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("lift", help="level-N lift of a piecewise-linear CSV path")
    s.add_argument("--h", required=True, help="CSV with header t,v1..vd")
    s.add_argument("--N", type=int, required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_lift)

    s = sub.add_parser("translate", help="translate a group path by a piecewise-linear path")
    s.add_argument("--path", required=True, help="group path JSON")
    s.add_argument("--h", required=True, help="CSV with header t,v1..vd")
    s.add_argument("--substeps", type=int, default=DEFAULT_SUBSTEPS)
    s.add_argument("--exact", action="store_true", help="use the refinement limit instead of sub-steps")
    s.add_argument("--out")
    s.set_defaults(func=cmd_translate)

    s = sub.add_parser("rde", help="step-N Euler solution of dY = V(Y) dX")
    s.add_argument("--fields", required=True, help="vector-field JSON file or builtin name")
    s.add_argument("--driver", required=True, help="group path JSON")
    s.add_argument("--y0", type=float, nargs="+")
    s.add_argument("--out")
    s.set_defaults(func=cmd_rde)

    s = sub.add_parser("hormander-check", help="bracket-rank constancy verdict on the orbit of y0")
    s.add_argument("--fields", required=True, help="vector-field JSON file or builtin name")
    s.add_argument("--N", type=int, required=True)
    s.add_argument("--depth", type=int, required=True)
    s.add_argument("--y0", type=float, nargs="+")
    s.add_argument("--n-points", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tol", type=float, default=DEFAULT_TOL)
    s.add_argument("--out")
    s.set_defaults(func=cmd_hormander)

    for name in EXPERIMENTS:
        s = sub.add_parser(name, help=f"run the {name} experiment")
        s.add_argument("--config", help="experiment config JSON; flags override its fields")
        s.add_argument("--M", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--workers", type=int)
        s.add_argument("--T", type=float)
        s.add_argument("--alpha", type=float, action="append")
        s.add_argument("--steps", type=int, help="steps per unit time")
        s.add_argument("--fields", help="vector-field JSON file or builtin name (density)")
        s.add_argument("--out-json")
        s.add_argument("--out-csv")
        s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("lemma-suite", help="randomized checks of the restricted-Hoelder lemmas")
    s.add_argument("--cases", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_lemma_suite)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except (UsageError, ConfigError, PathFormatError, VectorFieldFormatError, GridNotInformative,
            InsufficientSamples, EllipticityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
