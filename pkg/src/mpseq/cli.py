"""Command-line front end: train, regen, join, eval.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
Every output file is written atomically (temp file + rename).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    AdjustmentSet,
    DynamicsParams,
    InitialCondition,
    LibraryFormatError,
    MPLibrary,
    TrajectoryFormatError,
    UnknownPrimitiveError,
    atomic_write,
    load_library,
    read_trajectory_csv,
    save_library,
    validate_library,
    write_trajectory_csv,
)
from .evalbench import ConfigError, run_benchmark
from .learning import train_type
from .rollout import default_adjustment, regenerate, sweep
from .sequencer import generate_sequence, simple_join
from .synth import KINDS, SynthSpec, synth_demos

log = logging.getLogger("mpseq")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad flags or input files; maps to exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _json_bytes(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {value}")
    return value


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (value > 0 and math.isfinite(value)):
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def _float_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values or not all(math.isfinite(v) for v in values):
        raise argparse.ArgumentTypeError(f"expected finite numbers, got {text!r}")
    return values


def _add_dynamics(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("dynamics (use the same values for training and generation)")
    g.add_argument("--alpha-m", type=_positive_float, default=25.0, help="spring-damper gain (default 25)")
    g.add_argument("--alpha-z", type=_positive_float, default=8.0, help="phase gain (default 8)")
    g.add_argument("--steps", type=_positive_int, default=100, help="integration steps per primitive (default 100)")


def _params(args) -> DynamicsParams:
    try:
        return DynamicsParams(alpha_m=args.alpha_m, alpha_z=args.alpha_z, steps=args.steps)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load(path: str) -> MPLibrary:
    try:
        return load_library(path)
    except FileNotFoundError:
        raise UsageError(f"library file not found: {path}") from None
    except LibraryFormatError as exc:
        raise UsageError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# train


def cmd_train(args) -> int:
    params = _params(args)
    if args.synth:
        try:
            spec = SynthSpec(kind=args.synth, Q=args.q, seed=args.seed, noise_sd=args.noise_sd)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        demos = synth_demos(spec)
        mp_id = args.id or args.synth
    else:
        folder = Path(args.demos)
        if not folder.is_dir():
            raise UsageError(f"demo directory not found: {folder}")
        files = sorted(folder.glob("*.csv"))
        if not files:
            raise UsageError(f"no .csv demos in {folder}")
        try:
            demos = [read_trajectory_csv(f) for f in files]
        except TrajectoryFormatError as exc:
            raise UsageError(str(exc)) from None
        mp_id = args.id or folder.name
    if args.j > len(demos):
        raise UsageError(f"--j {args.j} exceeds the number of demos ({len(demos)})")

    mp = train_type(demos, N=args.n, J=args.j, params=params, mp_id=mp_id)
    out = Path(args.output)
    lib = _load(str(out)) if out.exists() else MPLibrary()
    lib = lib.with_mp(mp)
    problems = validate_library(lib)
    if problems:
        for v in problems:
            print(f"invalid: {v}", file=sys.stderr)
        return EXIT_FAILURE
    save_library(lib, out)
    np.set_printoptions(precision=4, suppress=False)
    print(f"{mp_id}: Q={mp.Q} N={mp.N} J={mp.J} T_mean={mp.mean_duration:.3f}s -> {out}")
    print(f"  singular values x: {mp.singular_values_x}")
    print(f"  singular values y: {mp.singular_values_y}")
    print(f"  basis fit rms x: {mp.fit_rms_x}")
    print(f"  basis fit rms y: {mp.fit_rms_y}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# regen


def _parse_goal(text: str) -> np.ndarray:
    vals = _float_list(text.replace(":", ","))
    if len(vals) != 2:
        raise UsageError(f"goal must be x,y, got {text!r}")
    return np.array(vals)


def cmd_regen(args) -> int:
    params = _params(args)
    lib = _load(args.library)
    mp = lib[args.id]
    adj = default_adjustment(mp, b=args.start)
    changes = {}
    if args.goal is not None:
        changes["g"] = np.asarray(args.goal, dtype=float)
    if args.duration is not None:
        changes["T"] = args.duration
    if args.tau is not None:
        changes["tau"] = args.tau
    for axis in ("x", "y"):
        s = getattr(args, f"s_{axis}")
        if s is not None:
            if len(s) != mp.J:
                raise UsageError(f"--s-{axis} needs {mp.J} values for {mp.id!r}, got {len(s)}")
            changes[f"s_{axis}"] = np.array(s)
    adj = adj.replace(**changes)

    out_dir = Path(args.out_dir)
    entries = []
    if args.sweep is None:
        trajs = [regenerate(mp, adj, params)]
        labels = [None]
    else:
        if not args.values:
            raise UsageError("--sweep needs --values")
        if args.sweep == "goal":
            values = [_parse_goal(v) for v in args.values]
        else:
            try:
                values = [float(v) for v in args.values]
            except ValueError:
                raise UsageError("--values must be numbers for this sweep") from None
            if args.sweep == "duration" and any(not (v > 0 and math.isfinite(v)) for v in values):
                raise UsageError("durations must be positive")
        trajs = sweep(mp, adj, args.sweep, values, params, axis=args.axis, index=args.index)
        labels = values
    for i, (traj, value) in enumerate(zip(trajs, labels)):
        name = f"{args.id}.csv" if value is None else f"{args.id}_{args.sweep}_{i:03d}.csv"
        write_trajectory_csv(out_dir / name, traj)
        entry = {"file": name, "samples": len(traj), "end": traj.end.tolist()}
        if value is not None:
            entry["value"] = np.asarray(value, dtype=float).tolist()
        entries.append(entry)
    manifest = {
        "id": args.id,
        "sweep": args.sweep,
        "axis": args.axis if args.sweep == "s" else None,
        "index": args.index if args.sweep == "s" else None,
        "base": {
            "b": adj.b.tolist(),
            "g": adj.g.tolist(),
            "T": adj.T,
            "tau": adj.tau,
            "s_x": adj.s_x.tolist(),
            "s_y": adj.s_y.tolist(),
        },
        "params": {"alpha_m": params.alpha_m, "alpha_z": params.alpha_z, "steps": params.steps},
        "files": entries,
    }
    atomic_write(out_dir / "manifest.json", _json_bytes(manifest))
    print(f"wrote {len(entries)} trajectory file(s) and manifest.json to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# join

CONDITION_FIELDS = ["id", "T", "x_init", "y_init", "x_g", "y_g"]


def parse_conditions(text: str, source: str = "<conditions>") -> list[InitialCondition]:
    """Read ``id,T,x_init,y_init,x_g,y_g`` rows in execution order."""
    rows = list(csv.reader(io.StringIO(text)))
    lines = [(n, r) for n, r in enumerate(rows, start=1) if r and any(c.strip() for c in r)]
    lines = [(n, r) for n, r in lines if not r[0].lstrip().startswith("#")]
    if not lines:
        raise UsageError(f"{source}: no initial conditions")
    n, header = lines[0]
    if [c.strip() for c in header] != CONDITION_FIELDS:
        raise UsageError(f"{source}:{n}: header must be {','.join(CONDITION_FIELDS)}")
    out = []
    for n, row in lines[1:]:
        if len(row) != len(CONDITION_FIELDS):
            raise UsageError(f"{source}:{n}: expected {len(CONDITION_FIELDS)} fields, got {len(row)}")
        mp_id = row[0].strip()
        if not mp_id:
            raise UsageError(f"{source}:{n}: empty id")
        try:
            vals = [float(c) for c in row[1:]]
        except ValueError:
            raise UsageError(f"{source}:{n}: non-numeric field") from None
        try:
            out.append(InitialCondition(mp_id, *vals))
        except ValueError as exc:
            raise UsageError(f"{source}:{n}: {exc}") from None
    if not out:
        raise UsageError(f"{source}: no initial conditions")
    return out


def cmd_join(args) -> int:
    params = _params(args)
    lib = _load(args.library)
    path = Path(args.conditions)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise UsageError(f"conditions file not found: {path}") from None
    conds = parse_conditions(text, str(path))
    for c in conds:
        if c.id not in lib:
            raise UnknownPrimitiveError(c.id)
    out_dir = Path(args.out_dir)
    methods = ["proposed", "simple"] if args.method == "both" else [args.method]
    report = {"conditions": [dict(zip(CONDITION_FIELDS, [c.id, c.T, c.x_init, c.y_init, c.x_g, c.y_g])) for c in conds]}
    for method in methods:
        fn = generate_sequence if method == "proposed" else simple_join
        try:
            res = fn(lib, conds, params=params, tau=args.tau, strict=args.strict)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        write_trajectory_csv(out_dir / f"{method}.csv", res.trajectory)
        report[method] = res.report.to_dict()
        r = res.report
        jumps = ", ".join(f"{j:.4g}" for j in r.velocity_jumps) or "-"
        misses = ", ".join(f"{m:.4g}" for m in r.misses)
        print(f"{method}: a_max {r.a_max:.4g} m/s^2, velocity jumps [{jumps}] m/s, misses [{misses}] m")
    if len(methods) == 2 and report["simple"]["a_max"] > 0:
        report["accel_ratio"] = report["proposed"]["a_max"] / report["simple"]["a_max"]
    atomic_write(out_dir / "join_report.json", _json_bytes(report))
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    config = None
    if args.config:
        try:
            config = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise UsageError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"{args.config}:{exc.lineno}: malformed JSON ({exc.msg})") from None
    try:
        report = run_benchmark(config, seed=args.seed)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    out_dir = Path(args.out_dir)
    for name, traj in sorted(report.trajectories.items()):
        write_trajectory_csv(out_dir / name, traj)
    atomic_write(out_dir / "report.json", report.to_json())
    for gate in report.data["gates"]:
        print(f"{'PASS' if gate['passed'] else 'FAIL'}  {gate['name']}: {gate['detail']}")
    print(f"report written to {out_dir / 'report.json'}")
    return EXIT_OK if report.passed else EXIT_FAILURE


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mpseq", description="Learn, regenerate and join 2-D motion primitives.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("train", help="learn one primitive type into a library file")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--synth", choices=[k for k in KINDS if k != "custom_forcing"], help="synthetic corpus kind")
    src.add_argument("--demos", help="directory of t,x,y CSV demos of one type")
    p.add_argument("--id", help="primitive id (default: corpus kind or directory name)")
    p.add_argument("--q", type=_positive_int, default=10, help="synthetic demo count (default 10)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-sd", type=float, default=0.0, help="synthetic position noise, metres")
    p.add_argument("--n", type=_positive_int, default=20, help="kernels per basis row (default 20)")
    p.add_argument("--j", type=_positive_int, default=5, help="fine-tuning coefficients per axis (default 5)")
    p.add_argument("-o", "--output", required=True, help="library file to create or update")
    _add_dynamics(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("regen", help="regenerate one primitive, optionally sweeping a parameter")
    p.add_argument("--library", required=True)
    p.add_argument("--id", required=True)
    p.add_argument("--start", type=float, nargs=2, default=(0.0, 0.0), metavar=("X", "Y"))
    p.add_argument("--goal", type=float, nargs=2, metavar=("X", "Y"), help="goal position in the same frame as --start (default: start + mean displacement)")
    p.add_argument("--duration", type=_positive_float)
    p.add_argument("--tau", type=_positive_float)
    p.add_argument("--s-x", type=_float_list, help="comma-separated coefficients")
    p.add_argument("--s-y", type=_float_list)
    p.add_argument("--sweep", choices=["goal", "duration", "s"])
    p.add_argument("--values", nargs="+", help="sweep values; goals as x,y")
    p.add_argument("--axis", choices=["x", "y"], default="y", help="axis for an s sweep")
    p.add_argument("--index", type=int, default=0, help="coefficient index for an s sweep")
    p.add_argument("--out-dir", default=".")
    _add_dynamics(p)
    p.set_defaults(func=cmd_regen)

    p = sub.add_parser("join", help="generate a primitive sequence from initial conditions")
    p.add_argument("--library", required=True)
    p.add_argument("--conditions", required=True, help="CSV with header id,T,x_init,y_init,x_g,y_g")
    p.add_argument("--method", choices=["proposed", "simple", "both"], default="both")
    p.add_argument("--tau", type=_positive_float, default=1.0)
    p.add_argument("--strict", action="store_true", help="reject starts more than 1 cm from the previous goal")
    p.add_argument("--out-dir", default=".")
    _add_dynamics(p)
    p.set_defaults(func=cmd_join)

    p = sub.add_parser("eval", help="run the benchmark; exit 0 only if every gate passes")
    p.add_argument("--config", help="benchmark config JSON (default: built-in)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UnknownPrimitiveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
