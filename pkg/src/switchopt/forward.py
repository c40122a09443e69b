"""Forward simulation of the hybrid evolution and evaluation of the cost."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .errors import BlowUp, OutOfDomain, ScheduleMismatch
from .model import HybridSystemSpec, ModeSpec, SwitchingSchedule
from .steppers import DenseSegment, SolverOptions, choose_stepper, integrate, mesh, propagators


@dataclass(frozen=True)
class HybridTrajectory:
    """Piecewise forward solution.

    ``pieces[n]`` is z^n on [tau_n, tau_{n+1}] (a single knot when the
    interval is empty).  ``left_limits[n]`` is z^-(tau_n) = z^{n-1}(tau_n)
    for n = 1..N+1, with row 0 holding z0; ``right_values[n]`` is
    z^n(tau_n) for n = 0..N.
    """

    modes: tuple[int, ...]
    schedule: SwitchingSchedule
    pieces: tuple[DenseSegment, ...]
    left_limits: np.ndarray
    right_values: np.ndarray
    options: SolverOptions
    h_max: float

    @property
    def segments(self) -> tuple[DenseSegment, ...]:
        """Non-degenerate pieces only."""
        return tuple(p for p in self.pieces if not p.degenerate)

    @property
    def final_state(self) -> np.ndarray:
        return self.left_limits[-1]

    def z_minus(self, n: int) -> np.ndarray:
        return self.left_limits[n]

    def z_plus(self, n: int) -> np.ndarray:
        return self.right_values[n]


def _check_lengths(system: HybridSystemSpec, modes, schedule: SwitchingSchedule):
    modes = system.check_modes(modes)
    if len(modes) != schedule.N + 1:
        raise ScheduleMismatch(
            f"{len(modes)} modes need {len(modes) - 1} switching times, got {schedule.N}"
        )
    if schedule.horizon != system.horizon:
        raise ScheduleMismatch(
            f"schedule horizon {schedule.horizon} differs from system horizon {system.horizon}"
        )
    return modes


def step_segment(mode: ModeSpec, z_init, t_start: float, t_end: float,
                 options: SolverOptions | None = None, h_max: float | None = None,
                 bound: float = np.inf, mode_index: int = 0) -> DenseSegment:
    """Integrate dz/dt = A z + f(t, z) over [t_start, t_end] on an equispaced mesh."""
    options = options or SolverOptions()
    if t_end < t_start:
        raise ValueError("t_end must not precede t_start")
    z_init = np.asarray(z_init, dtype=float)
    if not np.all(np.isfinite(z_init)):
        raise ValueError("initial state must be finite")
    if h_max is None:
        h_max = options.h_max if options.h_max is not None else max(t_end - t_start, 1.0) / 1000.0
    knots = mesh(t_start, t_end, h_max)
    if len(knots) == 1:
        D = mode.rhs(t_start, z_init)[None, :]
        return DenseSegment(mode_index, knots, z_init[None, :].copy(), D, "")
    h = knots[1] - knots[0]
    method = choose_stepper(mode, h, options)
    props = propagators(mode, h) if method == "expm" else None
    Y, D = integrate(mode.generator, mode.nonlinearity, z_init, knots, method, props, bound)
    return DenseSegment(mode_index, knots, Y, D, method)


def solve_forward(system: HybridSystemSpec, modes: Sequence[int], schedule: SwitchingSchedule,
                  options: SolverOptions | None = None) -> HybridTrajectory:
    """Solve the hybrid evolution; resets are applied exactly at every switch,
    and coincident switching times compose their resets in sequence order."""
    options = options or SolverOptions()
    modes = _check_lengths(system, modes, schedule)
    h_max = options.step_size(system.horizon)
    full = schedule.full
    z0 = system.initial_state
    bound = options.blowup_factor * (1.0 + float(np.linalg.norm(z0)))
    N = schedule.N
    n = system.state_dim
    left = np.empty((N + 2, n))
    right = np.empty((N + 1, n))
    left[0] = z0
    pieces = []
    z = z0
    for idx in range(N + 1):
        if idx > 0:
            left[idx] = z
            z = system.reset(modes[idx - 1], modes[idx])(z)
        right[idx] = z
        try:
            seg = step_segment(system.modes[modes[idx]], z, full[idx], full[idx + 1],
                               options, h_max, bound, mode_index=modes[idx])
        except BlowUp as exc:
            exc.segment = idx
            raise
        pieces.append(seg)
        z = seg.end
    left[N + 1] = z
    return HybridTrajectory(modes, schedule, tuple(pieces), left, right, options, h_max)


def eval_trajectory(traj: HybridTrajectory, t: float, side: str = "right") -> np.ndarray:
    """State at time t.  At a switching time, ``left`` gives z^-(tau_n) and
    ``right`` the value after every reset at that instant."""
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    T = traj.schedule.horizon
    if not 0.0 <= t <= T:
        raise OutOfDomain(f"t = {t} outside [0, {T}]")
    full = traj.schedule.full
    N = traj.schedule.N
    hits = [n for n in range(N + 2) if full[n] == t]
    if side == "right" and hits:
        last = hits[-1]
        if last == N + 1:
            return traj.left_limits[N + 1].copy()
        return traj.right_values[last].copy()
    if side == "left" and hits:
        first = hits[0]
        return traj.left_limits[first].copy()
    n = int(np.searchsorted(full, t, side="right")) - 1
    return traj.pieces[n](t)


@dataclass(frozen=True)
class CostBreakdown:
    running: float
    switching: tuple[float, ...]
    terminal: float

    @property
    def total(self) -> float:
        return self.running + float(sum(self.switching)) + self.terminal


def integrate_on_knots(values: np.ndarray, knots: np.ndarray) -> float:
    """Composite Simpson on the stepper knots (trapezoid for a single step)."""
    if len(knots) < 2:
        return 0.0
    if len(knots) == 2:
        return float(0.5 * (knots[1] - knots[0]) * (values[0] + values[1]))
    return float(simpson(values, x=knots))


def cost_breakdown(system: HybridSystemSpec, traj: HybridTrajectory) -> CostBreakdown:
    cost = system.cost
    running = 0.0
    for seg in traj.segments:
        running += integrate_on_knots(cost.running.value(seg.knots, seg.values), seg.knots)
    switching = []
    full = traj.schedule.full
    for n in range(1, traj.schedule.N + 1):
        term = cost.switch(traj.modes[n - 1], traj.modes[n])
        switching.append(float(term.value(full[n], traj.left_limits[n])))
    terminal = float(cost.terminal.value(traj.schedule.horizon, traj.final_state))
    return CostBreakdown(running, tuple(switching), terminal)


def evaluate_cost(system: HybridSystemSpec, traj: HybridTrajectory) -> float:
    return cost_breakdown(system, traj).total


def reduced_cost(system: HybridSystemSpec, modes: Sequence[int], schedule: SwitchingSchedule,
                 options: SolverOptions | None = None) -> float:
    """Phi(j, tau): cost of the trajectory induced by a sequence and schedule."""
    return evaluate_cost(system, solve_forward(system, modes, schedule, options))

