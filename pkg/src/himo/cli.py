"""Command-line entry point.

Exit codes:

    0   run converged / check within tolerance
    1   check outside tolerance
    2   run stopped at --max-iters
    3   run found no admissible step
    64  bad flags
    65  oracle guard refused the request
    66  environment or manifest unreadable
    73  output directory not writable
"""

from __future__ import annotations

import argparse
import datetime as _dt
import sys
import time
from pathlib import Path

from . import __version__
from .analysis import compute_measures
from .checks import GRADCHECK_TOL, MOMENTS_TOL, compare_vi, gradcheck, moments_check
from .environments import LayoutError, load_environment
from .mdp import OMEGA_RULES, ModelError
from .optimizer import HimoConfig, StepFailure, run_himo
from .oracles import OracleGuardError
from .outputs import OutputError, RunManifest, emit_outputs

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_MAX_ITERS = 2
EXIT_STEP_FAILURE = 3
EXIT_USAGE = 64
EXIT_GUARD = 65
EXIT_NO_INPUT = 66
EXIT_CANT_CREATE = 73


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _open_unit(text: str) -> float:
    x = float(text)
    if not 0.0 < x < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text}")
    return x


def _step_scale(text: str) -> float:
    x = float(text)
    if not 0.0 < x <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1], got {text}")
    return x


def _positive_int(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return n


def _non_negative_int(text: str) -> int:
    n = int(text)
    if n < 0:
        raise argparse.ArgumentTypeError(f"must be a non-negative integer, got {text}")
    return n


def _non_negative(text: str) -> float:
    x = float(text)
    if not x >= 0.0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text}")
    return x


def _positive(text: str) -> float:
    x = float(text)
    if not x > 0.0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return x


def _add_optimizer_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--env", help="builtin:NAME, a .grid layout or a JSON model file")
    p.add_argument("--lambda", dest="lam", type=_open_unit, default=0.95, help="foresight in (0, 1)")
    p.add_argument("--max-iters", type=_non_negative_int, default=1000)
    p.add_argument("--value-tol", type=_positive, default=1e-10)
    p.add_argument("--step-tol", type=_positive, default=1e-9)
    p.add_argument("--damping", type=_non_negative, default=1e-9)
    p.add_argument("--eta", type=_step_scale, default=1.0, help="initial step scale in (0, 1]")
    p.add_argument("--omega-rule", choices=OMEGA_RULES, default="last")
    p.add_argument("--fixed-omega", action="store_true", help="keep the initial dependent actions for the whole run")
    p.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="himo", description="Natural path gradient planning on tabular MDPs.")
    parser.add_argument("--version", action="version", version=f"himo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="optimize a policy and write traces")
    _add_optimizer_flags(run)
    run.add_argument("--out-dir", default="out")
    run.add_argument("--plots", action="store_true", help="write one SVG per measure panel")
    run.add_argument("--smoothing", type=_positive_int, default=1, help="moving-average window for velocities")
    run.add_argument("--manifest", help="rerun the environment and config recorded in a run.json")

    check = sub.add_parser("check", help="verify against the oracles")
    checks = check.add_subparsers(dest="check", required=True, parser_class=_Parser)

    gc = checks.add_parser("gradcheck", help="analytic gradient vs finite differences")
    gc.add_argument("--trials", type=_positive_int, default=100)
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--lambda", dest="lam", type=_open_unit, default=None, help="fixed foresight (default cycles 0.3, 0.5, 0.9)")
    gc.add_argument("--eps", type=_positive, default=1e-5, help="finite-difference step (about the cube root of machine epsilon)")

    mo = checks.add_parser("moments", help="counter correlations vs path enumeration")
    mo.add_argument("--env", required=True)
    mo.add_argument("--horizon", type=_positive_int, default=25)
    mo.add_argument("--lambda", dest="lam", type=_open_unit, default=0.5)

    cv = checks.add_parser("compare-vi", help="greedy HIMO policy vs value iteration")
    _add_optimizer_flags(cv)
    return parser


def _config(args) -> HimoConfig:
    return HimoConfig(
        lam=args.lam,
        max_iters=args.max_iters,
        value_tol=args.value_tol,
        step_tol=args.step_tol,
        damping=args.damping,
        step_scale=args.eta,
        omega_rule=args.omega_rule,
        rebase_omega=not args.fixed_omega,
    )


def _load(ref: str):
    try:
        return load_environment(ref)
    except (OSError, UnicodeDecodeError, ModelError, LayoutError, KeyError) as exc:
        print(f"himo: cannot load environment {ref!r}: {exc}", file=sys.stderr)
        return None


def _highlight(env) -> tuple[int, ...]:
    marks = [] if env.goal is None else [env.goal]
    for key in ("doorways", "wormhole"):
        marks += list(env.landmarks.get(key, ()))
    return tuple(dict.fromkeys(marks))


def cmd_run(args, parser) -> int:
    smoothing, seed = args.smoothing, args.seed
    if args.manifest:
        try:
            recorded = RunManifest.from_json(Path(args.manifest).read_text(encoding="utf-8"))
        except (OSError, ValueError, TypeError, KeyError) as exc:
            print(f"himo: cannot read manifest {args.manifest!r}: {exc}", file=sys.stderr)
            return EXIT_NO_INPUT
        env_ref, config = recorded.env, recorded.config
        smoothing, seed = recorded.smoothing, recorded.seed
    else:
        if not args.env:
            parser.error("run: --env is required (or --manifest)")
        env_ref, config = args.env, _config(args)

    env = _load(env_ref)
    if env is None:
        return EXIT_NO_INPUT

    started = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    try:
        trace = run_himo(env.model, config)
        code = EXIT_OK if trace.converged else EXIT_MAX_ITERS
    except StepFailure as exc:
        print(f"himo: {exc}", file=sys.stderr)
        trace, code = exc.trace, EXIT_STEP_FAILURE
    duration = time.perf_counter() - t0

    manifest = RunManifest(
        env=env_ref,
        config=config,
        tool_version=__version__,
        duration_s=duration,
        reason=trace.reason,
        final_value=trace.values[-1],
        n_iters=trace.n_iters,
        seed=seed,
        smoothing=smoothing,
        started_at=started,
    )
    try:
        emit_outputs(args.out_dir, manifest, trace, compute_measures(trace, smoothing), env.model, args.plots, _highlight(env))
    except OutputError as exc:
        print(f"himo: {exc}", file=sys.stderr)
        return EXIT_CANT_CREATE
    print(f"{env_ref}: {trace.reason} after {trace.n_iters} iterations, value {trace.values[-1]!r} ({duration:.2f} s)")
    return code


def cmd_check(args, parser) -> int:
    if args.check == "gradcheck":
        report = gradcheck(args.trials, args.seed, args.lam, args.eps)
        print(f"max rel err {report.max_rel_err:.2e} over {report.trials} trials (tolerance {GRADCHECK_TOL:g})")
        return EXIT_OK if report.ok else EXIT_CHECK_FAILED

    env = _load(args.env) if args.env else None
    if env is None:
        if not args.env:
            parser.error(f"check {args.check}: --env is required")
        return EXIT_NO_INPUT

    if args.check == "moments":
        try:
            report = moments_check(env, args.horizon, args.lam)
        except OracleGuardError as exc:
            print(f"himo: oracle guard: {exc}", file=sys.stderr)
            return EXIT_GUARD
        print(
            f"max C deviation {report.max_deviation:.2e} at horizon {report.horizon} "
            f"(truncation bound {report.truncation_bound:.2e}, tolerance {MOMENTS_TOL:g})"
        )
        return EXIT_OK if report.ok else EXIT_CHECK_FAILED

    try:
        report = compare_vi(env, _config(args))
    except StepFailure as exc:
        print(f"himo: {exc}", file=sys.stderr)
        return EXIT_STEP_FAILURE
    print(f"agreement: {100 * report.agreement:.0f}% on optimal path ({report.agree}/{report.path_states} states)")
    print(f"value gap {report.value_gap:.2e} (HIMO {report.himo_value!r}, value iteration {report.vi_value!r}); {report.reason}")
    return EXIT_OK if report.ok else EXIT_CHECK_FAILED


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args, parser)
    return cmd_check(args, parser)


if __name__ == "__main__":
    sys.exit(main())
