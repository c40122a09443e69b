"""Projected-gradient switching-time optimization and the insertion outer loop."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .adjoint import solve_adjoint
from .forward import evaluate_cost, reduced_cost, solve_forward
from .gradients import (
    GradientReport,
    insert_mode,
    insertion_scan,
    split_schedule,
    switching_gradient,
)
from .model import HybridSystemSpec, SwitchingSchedule, default_eps
from .steppers import SolverOptions


def _pav(y: np.ndarray) -> np.ndarray:
    """Least-squares non-decreasing fit (pool adjacent violators, unit weights)."""
    means: list[float] = []
    sizes: list[int] = []
    for v in y:
        means.append(float(v))
        sizes.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            n = sizes[-2] + sizes[-1]
            m = (means[-2] * sizes[-2] + means[-1] * sizes[-1]) / n
            means[-2:] = [m]
            sizes[-2:] = [n]
    return np.repeat(means, sizes)


def project_schedule(raw, horizon: float) -> SwitchingSchedule:
    """Euclidean projection onto {0 <= tau_1 <= ... <= tau_N <= T}."""
    x = np.asarray(raw, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("projection input must be finite")
    if x.size == 0:
        return SwitchingSchedule((), float(horizon))
    p = np.clip(_pav(x), 0.0, horizon)
    return SwitchingSchedule(tuple(float(v) for v in p), float(horizon))


@dataclass(frozen=True)
class OptimizerOptions:
    """Settings for :func:`optimize_times` and :func:`optimize_sequence`.

    initial_step: first trial step; ``None`` means T / (10 max(1, ||g||)).
    insertion_threshold: ``None`` means -1e-3 (1 + |Phi|).
    """

    max_iters: int = 200
    sigma: float = 1e-4
    beta: float = 0.5
    initial_step: float | None = None
    kkt_tol: float = 1e-5
    insertion_threshold: float | None = None
    grid_size: int = 16
    max_backtracks: int = 60
    max_insertions: int = 5
    removal_tol: float = 1e-9

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not 0.0 < self.sigma < 1.0:
            raise ValueError("sigma must lie in (0, 1)")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.initial_step is not None and not self.initial_step > 0:
            raise ValueError("initial_step must be positive")
        if not self.kkt_tol > 0:
            raise ValueError("kkt_tol must be positive")
        if self.insertion_threshold is not None and not self.insertion_threshold < 0:
            raise ValueError("insertion_threshold must be negative")
        if self.grid_size < 1:
            raise ValueError("grid_size must be at least 1")

    def threshold(self, cost: float) -> float:
        if self.insertion_threshold is not None:
            return self.insertion_threshold
        return -1e-3 * (1.0 + abs(cost))


@dataclass(frozen=True)
class TraceEntry:
    modes: tuple[int, ...]
    schedule: SwitchingSchedule
    cost: float
    report: GradientReport
    step: float
    action: str


@dataclass
class OptimizationTrace:
    """Accepted iterates in order; the last entry is the returned point.

    ``converged`` means the scaled KKT residual met the tolerance;
    ``stalled`` means the line search found no acceptable step.
    """

    entries: list[TraceEntry] = field(default_factory=list)
    converged: bool = False
    stalled: bool = False
    kkt_tol: float = 1e-5

    @property
    def final(self) -> TraceEntry:
        return self.entries[-1]

    @property
    def costs(self) -> np.ndarray:
        return np.array([e.cost for e in self.entries])

    @property
    def iterations(self) -> int:
        return sum(1 for e in self.entries if e.action == "descent")

    def status(self) -> str:
        if self.converged:
            return "converged"
        if self.stalled:
            return "stalled"
        return "max-iters"


def _evaluate(system, modes, schedule, solver):
    traj = solve_forward(system, modes, schedule, solver)
    cost = evaluate_cost(system, traj)
    report = switching_gradient(system, traj, solve_adjoint(system, traj))
    return cost, report


def _stationary(report: GradientReport, tol: float) -> bool:
    return report.kkt_residual <= tol * max(1.0, report.norm)


def optimize_times(system: HybridSystemSpec, modes: Sequence[int], schedule0: SwitchingSchedule,
                   options: OptimizerOptions | None = None,
                   solver: SolverOptions | None = None) -> OptimizationTrace:
    """Projected gradient descent with Armijo backtracking on the reduced cost.

    The first trial step is T / (10 max(1, ||g||)); later iterations start
    from a safeguarded Barzilai-Borwein step.  Acceptance requires
    Phi(new) <= Phi(old) - sigma g.(tau_old - tau_new).
    """
    options = options or OptimizerOptions()
    modes = system.check_modes(modes)
    T = schedule0.horizon
    schedule = project_schedule(schedule0.times, T)
    cost, report = _evaluate(system, modes, schedule, solver)
    trace = OptimizationTrace([TraceEntry(modes, schedule, cost, report, 0.0, "start")],
                              kkt_tol=options.kkt_tol)
    if schedule.N == 0 or _stationary(report, options.kkt_tol):
        trace.converged = True
        return trace
    floor = 1e-14 * max(1.0, T)
    prev_x = prev_g = None
    for _ in range(options.max_iters):
        x = schedule.interior
        g = report.gradient
        if options.initial_step is not None and prev_x is None:
            alpha = options.initial_step
        elif prev_x is None:
            alpha = T / (10.0 * max(1.0, report.norm))
        else:
            s, y = x - prev_x, g - prev_g
            sy = float(s @ y)
            alpha = float(s @ s) / sy if sy > 0 else T / (10.0 * max(1.0, report.norm))
            alpha = min(max(alpha, 1e-10 * T), 1e10 * T)
        accepted = False
        for _ in range(options.max_backtracks):
            trial = project_schedule(x - alpha * g, T)
            moved = x - trial.interior
            if float(np.max(np.abs(moved))) <= floor:
                break
            trial_cost, trial_report = _evaluate(system, modes, trial, solver)
            if trial_cost <= cost - options.sigma * float(g @ moved):
                accepted = True
                break
            alpha *= options.beta
        if not accepted:
            trace.stalled = True
            break
        prev_x, prev_g = x, g
        schedule, cost, report = trial, trial_cost, trial_report
        trace.entries.append(TraceEntry(modes, schedule, cost, report, alpha, "descent"))
        if _stationary(report, options.kkt_tol):
            trace.converged = True
            break
    return trace


def _prune(system, modes, schedule, cost, solver, tol, eps):
    """Drop zero-length segments and merge equal neighbours while the cost
    does not increase by more than ``tol`` (relative)."""
    changed = True
    while changed:
        changed = False
        full = schedule.full
        N = schedule.N
        for n in range(N + 1):
            duplicate = n > 0 and modes[n - 1] == modes[n]
            empty = full[n + 1] - full[n] <= eps
            if not (duplicate or empty) or len(modes) == 1:
                continue
            new_modes = modes[:n] + modes[n + 1:]
            if duplicate:
                new_times = schedule.times[:n - 1] + schedule.times[n:]
            elif n < N:
                new_times = schedule.times[:n] + schedule.times[n + 1:]
            else:
                new_times = schedule.times[:n - 1]
            try:
                system.check_modes(new_modes)
            except Exception:
                continue
            candidate = SwitchingSchedule(new_times, schedule.horizon)
            new_cost = reduced_cost(system, new_modes, candidate, solver)
            if new_cost <= cost + tol * (1.0 + abs(cost)):
                modes, schedule, cost = tuple(new_modes), candidate, new_cost
                changed = True
                break
    return modes, schedule, cost


def optimize_sequence(system: HybridSystemSpec, modes0: Sequence[int],
                      schedule0: SwitchingSchedule, options: OptimizerOptions | None = None,
                      solver: SolverOptions | None = None,
                      candidates: Sequence[int] | None = None) -> OptimizationTrace:
    """Alternate switching-time descent with mode insertion.

    After each descent phase an insertion scan runs over an equispaced grid
    on [0, T).  The most negative gradient below the threshold is inserted
    as a zero-length segment, after which descent resumes.  Zero-length
    segments and repeated modes are removed whenever that does not raise
    the cost.
    """
    options = options or OptimizerOptions()
    modes = system.check_modes(modes0)
    if candidates is None:
        candidates = range(system.n_modes)
    candidates = list(candidates)
    T = schedule0.horizon
    eps = default_eps(T)
    grid = np.linspace(0.0, T, options.grid_size, endpoint=False)
    trace = OptimizationTrace(kkt_tol=options.kkt_tol)
    schedule = schedule0
    for round_ in range(options.max_insertions + 1):
        inner = optimize_times(system, modes, schedule, options, solver)
        start = 0 if round_ == 0 else 1
        trace.entries.extend(inner.entries[start:])
        trace.converged, trace.stalled = inner.converged, inner.stalled
        schedule, cost = inner.final.schedule, inner.final.cost
        pruned_modes, pruned, pruned_cost = _prune(system, modes, schedule, cost, solver,
                                                   options.removal_tol, eps)
        if pruned_modes != modes:
            modes, schedule, cost = pruned_modes, pruned, pruned_cost
            _, report = _evaluate(system, modes, schedule, solver)
            trace.entries.append(TraceEntry(modes, schedule, cost, report, 0.0, "remove"))
        if round_ == options.max_insertions:
            break
        scan = insertion_scan(system, modes, schedule, grid, candidates, solver,
                              skip_ambient=True)
        best = scan.best()
        if best is None or not best.value < options.threshold(cost):
            break
        modes, schedule = _insert_at(modes, schedule, best.time, best.mode)
        cost, report = _evaluate(system, modes, schedule, solver)
        trace.entries.append(TraceEntry(modes, schedule, cost, report, 0.0, "insert"))
    return trace


def _insert_at(modes, schedule, t, jhat):
    m2, s2, k = split_schedule(modes, schedule, t)
    return insert_mode(m2, s2, k, jhat)
