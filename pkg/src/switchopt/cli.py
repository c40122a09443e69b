"""Command-line entry point.

Exit codes: 0 success, 1 gradient check failed, 2 usage error,
3 configuration error, 4 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .adjoint import solve_adjoint
from .config import RunConfig, load_config, with_overrides
from .errors import ConfigError, SwitchingError
from .forward import cost_breakdown, solve_forward
from .gradients import compare_gradients, insertion_scan, switching_gradient
from .model import check_chain_property
from .optimize import optimize_sequence, optimize_times

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3, 4
SCHEMA = 1
COMMANDS = ("simulate", "gradient", "check-grad", "insert-scan", "optimize", "full-opt")


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if np.isfinite(v) else str(v)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def write_table(path: Path, name: str, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# schema: switchopt.{name}/{SCHEMA}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                             for v in row])


def _settings(config: RunConfig) -> dict:
    T = config.system.horizon
    return {
        "solver": asdict(config.solver) | {"h_max_effective": config.solver.step_size(T)},
        "optimizer": asdict(config.optimizer),
        "check": asdict(config.check) | {
            "fd_step_effective": config.check.fd_step if config.check.fd_step else 1e-5 * T},
        "seed": config.seed,
    }


def _base(command: str, config: RunConfig) -> dict:
    return {
        "schema": f"switchopt.report/{SCHEMA}",
        "command": command,
        "modes": list(config.modes),
        "times": list(config.schedule.times),
        "horizon": config.system.horizon,
        "settings": _settings(config),
    }


def _report_dict(report) -> dict:
    return {
        "method": report.method,
        "gradient": report.gradient,
        "backward_sums": report.backward_sums,
        "forward_sums": report.forward_sums,
        "a": report.a,
        "b": report.b,
        "residuals": report.residuals,
        "kkt_residual": report.kkt_residual,
        "eps": report.eps,
    }


def cmd_simulate(config: RunConfig, out: Path) -> int:
    traj = solve_forward(config.system, config.modes, config.schedule, config.solver)
    n = config.system.state_dim
    N = config.schedule.N
    rows = []
    for idx, seg in enumerate(traj.pieces):
        last = len(seg.knots) - 1
        for i, t in enumerate(seg.knots):
            side = ""
            if i == 0 and idx > 0:
                side = "right"
            if i == last and idx < N:
                side = "left" if not side else "point"
            rows.append([float(t), idx, seg.mode, side, *seg.values[i]])
    write_table(out / "trajectory.csv", "trajectory",
                ["t", "segment", "mode", "side"] + [f"z{i}" for i in range(n)], rows)
    breakdown = cost_breakdown(config.system, traj)
    payload = _base("simulate", config) | {
        "status": "ok",
        "cost": {"running": breakdown.running, "switching": breakdown.switching,
                 "terminal": breakdown.terminal, "total": breakdown.total},
        "final_state": traj.final_state,
    }
    write_json(out / "cost.json", payload)
    return EXIT_OK


def cmd_gradient(config: RunConfig, out: Path) -> int:
    traj = solve_forward(config.system, config.modes, config.schedule, config.solver)
    report = switching_gradient(config.system, traj, solve_adjoint(config.system, traj))
    write_json(out / "gradient.json", _base("gradient", config) | {
        "status": "ok", "report": _report_dict(report)})
    return EXIT_OK


def _chain_defects(config: RunConfig) -> list[dict]:
    """Chain-property defects of every reset triple on seeded random states."""
    system = config.system
    rng = np.random.default_rng(config.seed)
    z0 = system.initial_state
    samples = z0 + rng.standard_normal((8, z0.size)) * (1.0 + np.abs(z0))
    out = []
    M = system.n_modes
    for i in range(M):
        for k in range(M):
            for j in range(M):
                if len({i, k, j}) < 3:
                    continue
                if not all(system.has_reset(a, b) for a, b in ((i, j), (i, k), (k, j))):
                    continue
                rep = check_chain_property(system, (i, k, j), samples)
                out.append({"triple": [i, k, j], "defect": rep.defect, "passed": rep.passed})
    return out


def cmd_check_grad(config: RunConfig, out: Path) -> int:
    chk = config.check
    cmp = compare_gradients(config.system, config.modes, config.schedule, config.solver,
                            chk.fd_step, chk.var_tol, chk.fd_tol, chk.abs_tol, chk.abs_floor)
    passed = cmp.passed
    rows = []
    for k in range(config.schedule.N):
        rows.append([k + 1, cmp.adjoint[k], cmp.variational[k], cmp.finite_difference[k],
                     cmp.var_error[k], cmp.fd_error[k], cmp.fd_schemes[k],
                     bool(cmp.fd_reliable[k]), "pass" if passed[k] else "fail"])
    write_table(out / "check_grad.csv", "check-grad",
                ["k", "adjoint", "variational", "finite_difference", "var_error", "fd_error",
                 "fd_scheme", "fd_reliable", "result"], rows)
    ok = bool(np.all(passed))
    write_json(out / "check_grad.json", _base("check-grad", config) | {
        "status": "ok" if ok else "fail",
        "adjoint": cmp.adjoint, "variational": cmp.variational,
        "finite_difference": cmp.finite_difference, "var_error": cmp.var_error,
        "fd_error": cmp.fd_error, "passed": passed,
        "chain_property": _chain_defects(config),
    })
    return EXIT_OK if ok else EXIT_CHECK


def cmd_insert_scan(config: RunConfig, out: Path) -> int:
    scan = insertion_scan(config.system, config.modes, config.schedule, config.scan_times(),
                          config.scan_candidates(), config.solver)
    rows = [[e.time, e.mode, e.value, e.feasible, e.reason] for e in scan.entries]
    write_table(out / "insertion_scan.csv", "insertion-scan",
                ["time", "mode", "gradient", "feasible", "reason"], rows)
    best = scan.best()
    write_json(out / "insertion_scan.json", _base("insert-scan", config) | {
        "status": "ok",
        "scan_times": config.scan_times(), "candidates": list(config.scan_candidates()),
        "best": None if best is None else {"time": best.time, "mode": best.mode,
                                           "gradient": best.value},
    })
    return EXIT_OK


def _write_trace(command: str, config: RunConfig, out: Path, trace) -> int:
    rows = []
    for it, e in enumerate(trace.entries):
        rows.append([it, e.action, e.cost, e.step, e.report.kkt_residual,
                     " ".join(str(m) for m in e.modes),
                     " ".join(repr(float(t)) for t in e.schedule.times),
                     " ".join(repr(float(g)) for g in e.report.gradient)])
    write_table(out / "trace.csv", "trace",
                ["iteration", "action", "cost", "step", "kkt_residual", "modes", "times",
                 "gradient"], rows)
    final = trace.final
    write_json(out / "result.json", _base(command, config) | {
        "status": trace.status(),
        "converged": trace.converged,
        "stalled": trace.stalled,
        "final": {"modes": list(final.modes), "times": list(final.schedule.times),
                  "cost": final.cost, "report": _report_dict(final.report)},
        "iterations": trace.iterations,
    })
    return EXIT_OK


def cmd_optimize(config: RunConfig, out: Path) -> int:
    trace = optimize_times(config.system, config.modes, config.schedule, config.optimizer,
                           config.solver)
    return _write_trace("optimize", config, out, trace)


def cmd_full_opt(config: RunConfig, out: Path) -> int:
    trace = optimize_sequence(config.system, config.modes, config.schedule, config.optimizer,
                              config.solver, config.scan_candidates())
    return _write_trace("full-opt", config, out, trace)


HANDLERS = {
    "simulate": cmd_simulate,
    "gradient": cmd_gradient,
    "check-grad": cmd_check_grad,
    "insert-scan": cmd_insert_scan,
    "optimize": cmd_optimize,
    "full-opt": cmd_full_opt,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="switchopt",
        description="Simulate switched systems and optimize their switching times and modes.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "simulate": "forward solve; trajectory table and cost breakdown",
        "gradient": "adjoint switching-time gradient with grouped KKT sums",
        "check-grad": "compare adjoint, variational and finite-difference gradients",
        "insert-scan": "mode-insertion gradients over a time grid",
        "optimize": "optimize switching times for the configured sequence",
        "full-opt": "optimize switching times and insert modes",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", required=True, type=Path, help="INI run configuration")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--h-max", type=float, default=None, help="largest integrator step")
        p.add_argument("--fd-step", type=float, default=None, help="finite-difference step")
        p.add_argument("--kkt-tol", type=float, default=None, help="optimizer KKT tolerance")
        p.add_argument("--seed", type=int, default=None, help="seed for sampled checks")
    return parser


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    out: Path = args.out
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        _error_report(out, args.command, exc, EXIT_CONFIG)
        return EXIT_CONFIG
    try:
        config = with_overrides(config, args.h_max, args.fd_step, args.kkt_tol, args.seed)
    except ValueError as exc:
        parser.print_usage(sys.stderr)
        print(f"switchopt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        out.mkdir(parents=True, exist_ok=True)
        return HANDLERS[args.command](config, out)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        _error_report(out, args.command, exc, EXIT_NUMERICAL)
        return EXIT_NUMERICAL
    except SwitchingError as exc:
        print(f"invalid input: {type(exc).__name__}: {exc}", file=sys.stderr)
        _error_report(out, args.command, exc, EXIT_CONFIG)
        return EXIT_CONFIG


def _error_report(out: Path, command: str, exc: Exception, code: int) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        payload = {"schema": f"switchopt.report/{SCHEMA}", "command": command,
                   "status": "error", "error": type(exc).__name__, "message": str(exc),
                   "exit_code": code}
        if isinstance(exc, ConfigError):
            payload |= {"key": exc.key, "line": exc.line}
        write_json(out / "error.json", payload)
    except OSError:
        pass


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
