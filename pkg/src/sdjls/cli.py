"""Command-line front end: validate, analyze, synthesize, simulate, energy.

Exit codes are a stable contract: 0 success/feasible, 1 IO or parse failure,
2 validation or usage error, 3 undetermined verdict, 4 numeric failure.
Every run prints exactly one JSON report to stdout echoing the options used;
randomized commands without --seed generate one and report it.
"""

from __future__ import annotations

import argparse
import json
import secrets
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import certify_stability, default_margin
from .errors import (
    ModelValidationError,
    NoInputError,
    SdjlsError,
)
from .model import load_model
from .sdpcore import DEFAULT_MAX_ITERS
from .simulate import (
    estimate_energy,
    simulate_path,
    write_events_csv,
    write_trajectory_csv,
)
from .synthesis import gains_to_report, synthesize

EXIT_OK = 0
EXIT_IO = 1
EXIT_VALIDATION = 2
EXIT_UNDETERMINED = 3
EXIT_NUMERIC = 4


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _emit(report: dict, report_path: str | None = None) -> None:
    text = json.dumps(report, indent=2)
    print(text)
    if report_path:
        Path(report_path).write_text(text + "\n", encoding="utf-8")


def _base_report(command: str, model_path: str, options: dict, seed: int | None) -> dict:
    return {
        "command": command,
        "model": model_path,
        "options": options,
        "seed": seed,
        "version": __version__,
        "outcome": {},
        "duration_s": None,
    }


def _resolve_seed(seed: int | None) -> int:
    return secrets.randbits(63) if seed is None else seed


def _load(path: str):
    try:
        return load_model(path), None
    except ModelValidationError as exc:
        return None, ("validation", exc)
    except (OSError, json.JSONDecodeError) as exc:
        return None, ("io", exc)


def _fail_load(report: dict, error, started: float) -> int:
    kind, exc = error
    if kind == "validation":
        report["outcome"] = {
            "valid": False,
            "violations": [
                {"kind": v.kind, "message": v.message, "details": v.details}
                for v in exc.violations
            ],
        }
        code = EXIT_VALIDATION
    else:
        report["outcome"] = {"error": str(exc)}
        code = EXIT_IO
    report["duration_s"] = time.perf_counter() - started
    _emit(report)
    return code


def _cmd_validate(args) -> int:
    started = time.perf_counter()
    report = _base_report("validate", args.model, {}, None)
    model, error = _load(args.model)
    if error is not None:
        return _fail_load(report, error, started)
    report["outcome"] = {
        "valid": True,
        "state_dim": model.state_dim,
        "input_dim": model.input_dim,
        "num_modes": model.num_modes,
        "num_regions": model.num_regions,
    }
    report["duration_s"] = time.perf_counter() - started
    _emit(report)
    return EXIT_OK


def _cmd_analyze(args) -> int:
    started = time.perf_counter()
    options = {"eps": args.eps, "max_iters": args.max_iters, "tol_check": args.tol_check}
    seed = _resolve_seed(args.seed)
    report = _base_report("analyze", args.model, options, seed)
    model, error = _load(args.model)
    if error is not None:
        return _fail_load(report, error, started)
    eps = args.eps if args.eps is not None else default_margin(model)
    report["options"]["eps"] = eps
    result = certify_stability(
        model, eps=eps, max_iters=args.max_iters, tol_check=args.tol_check, seed=seed
    )
    if result.feasible:
        report["outcome"] = result.certificate.to_report()
        code = EXIT_OK
    else:
        report["outcome"] = {
            "verdict": "undetermined",
            "epsilon": eps,
            "iterations": result.solver.iterations,
            "residual": result.solver.residual,
        }
        code = EXIT_UNDETERMINED
    report["duration_s"] = time.perf_counter() - started
    _emit(report, args.report)
    return code


def _cmd_synthesize(args) -> int:
    started = time.perf_counter()
    options = {"eps": args.eps, "max_iters": args.max_iters, "tol_check": args.tol_check,
               "out": args.out}
    seed = _resolve_seed(args.seed)
    report = _base_report("synthesize", args.model, options, seed)
    model, error = _load(args.model)
    if error is not None:
        return _fail_load(report, error, started)
    if model.input_dim == 0:
        report["outcome"] = {"error": "model has no control inputs (input_dim = 0)"}
        report["duration_s"] = time.perf_counter() - started
        _emit(report)
        return EXIT_VALIDATION
    eps = args.eps if args.eps is not None else default_margin(model)
    report["options"]["eps"] = eps
    result = synthesize(
        model, eps=eps, max_iters=args.max_iters, tol_check=args.tol_check, seed=seed
    )
    if result.feasible:
        gains_doc = gains_to_report(result.gains)
        if args.out:
            Path(args.out).write_text(json.dumps(gains_doc, indent=2) + "\n", encoding="utf-8")
        report["outcome"] = {
            "verdict": "feasible",
            "verified": result.gains.verified,
            "K": gains_doc["K"],
            "gains_file": args.out,
        }
        code = EXIT_OK
    else:
        report["outcome"] = {
            "verdict": "undetermined",
            "epsilon": eps,
            "iterations": result.solver.iterations,
            "residual": result.solver.residual,
        }
        code = EXIT_UNDETERMINED
    report["duration_s"] = time.perf_counter() - started
    _emit(report, args.report)
    return code


def _load_gains(path: str) -> list[np.ndarray]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return [np.asarray(Ki, dtype=float) for Ki in doc["K"]]


def _cmd_simulate(args) -> int:
    started = time.perf_counter()
    options = {
        "t_final": args.t_final,
        "paths": args.paths,
        "gains": args.gains,
        "out_dir": args.out_dir,
        "sample_dt": args.sample_dt,
        "h_scan": args.h_scan,
    }
    seed = _resolve_seed(args.seed)
    report = _base_report("simulate", args.model, options, seed)
    model, error = _load(args.model)
    if error is not None:
        return _fail_load(report, error, started)
    try:
        gains = _load_gains(args.gains) if args.gains else None
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        report["outcome"] = {"error": f"cannot read gains file: {exc}"}
        report["duration_s"] = time.perf_counter() - started
        _emit(report)
        return EXIT_IO

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    divergent = 0
    for k in range(args.paths):
        traj = simulate_path(
            model,
            gains,
            t_final=args.t_final,
            seed=seed,
            stream=k,
            sample_dt=args.sample_dt,
            h_scan=args.h_scan,
        )
        traj_file = out_dir / f"traj_{k:04d}.csv"
        ev_file = out_dir / f"events_{k:04d}.csv"
        write_trajectory_csv(traj, traj_file)
        write_events_csv(traj, ev_file)
        files.append({"trajectory": str(traj_file), "events": str(ev_file)})
        divergent += int(traj.diverged)
    report["outcome"] = {"paths_written": files, "divergent_paths": divergent}
    report["duration_s"] = time.perf_counter() - started
    _emit(report, args.report)
    return EXIT_OK


def _cmd_energy(args) -> int:
    started = time.perf_counter()
    options = {
        "t_final": args.t_final,
        "paths": args.paths,
        "gains": args.gains,
        "threads": args.threads,
    }
    seed = _resolve_seed(args.seed)
    report = _base_report("energy", args.model, options, seed)
    model, error = _load(args.model)
    if error is not None:
        return _fail_load(report, error, started)
    try:
        gains = _load_gains(args.gains) if args.gains else None
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        report["outcome"] = {"error": f"cannot read gains file: {exc}"}
        report["duration_s"] = time.perf_counter() - started
        _emit(report)
        return EXIT_IO
    est = estimate_energy(
        model,
        gains,
        t_final=args.t_final,
        n_paths=args.paths,
        seed=seed,
        threads=args.threads,
    )
    mean = None if np.isnan(est.mean) else est.mean
    std_error = None if est.std_error is None or np.isnan(est.std_error) else est.std_error
    report["outcome"] = {
        "mean": mean,
        "std_error": std_error,
        "n_paths": est.n_paths,
        "divergent_paths": est.divergent,
    }
    report["duration_s"] = time.perf_counter() - started
    _emit(report, args.report)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdjls",
        description="State-dependent jump linear systems: validation, simulation, "
        "stability certification, and controller synthesis.",
    )
    parser.add_argument("--version", action="version", version=f"sdjls {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a model file")
    p.add_argument("model")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("analyze", help="certify stochastic stability")
    p.add_argument("model")
    p.add_argument("--eps", type=_positive_float, default=None,
                   help="strictness margin (default scales with the dynamics)")
    p.add_argument("--max-iters", type=_positive_int, default=DEFAULT_MAX_ITERS)
    p.add_argument("--tol-check", type=_positive_float, default=1e-7)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--report", default=None, help="also write the JSON report here")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("synthesize", help="synthesize stabilizing state feedback")
    p.add_argument("model")
    p.add_argument("--eps", type=_positive_float, default=None)
    p.add_argument("--max-iters", type=_positive_int, default=DEFAULT_MAX_ITERS)
    p.add_argument("--tol-check", type=_positive_float, default=1e-7)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="write the gains JSON file here")
    p.add_argument("--report", default=None)
    p.set_defaults(func=_cmd_synthesize)

    p = sub.add_parser("simulate", help="simulate sample paths to CSV")
    p.add_argument("model")
    p.add_argument("--t-final", type=_positive_float, required=True)
    p.add_argument("--paths", type=_positive_int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--gains", default=None, help="gains JSON file for closed-loop runs")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--sample-dt", type=_positive_float, default=None)
    p.add_argument("--h-scan", type=_positive_float, default=1e-3)
    p.add_argument("--report", default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("energy", help="Monte Carlo estimate of the path energy")
    p.add_argument("model")
    p.add_argument("--t-final", type=_positive_float, required=True)
    p.add_argument("--paths", type=_positive_int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--gains", default=None)
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--report", default=None)
    p.set_defaults(func=_cmd_energy)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NoInputError as exc:
        print(json.dumps({"error": str(exc)}))
        return EXIT_VALIDATION
    except SdjlsError as exc:
        print(json.dumps({"error": str(exc)}))
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
