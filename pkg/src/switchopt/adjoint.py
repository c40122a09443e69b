"""Backward adjoint solve aligned with a forward trajectory.

Sign convention (the one under which the switching-time gradient reads
dPhi/dtau_k = ... - <p+(tau_k), z_k(tau_k)>):

    dp/dt     = -A^T p - f_z(t, z)^T p + l_z(t, z)
    p(tau_n)  = g_z(z^-(tau_n))^T p+(tau_n) - l^{j_{n-1},j_n}_z(tau_n, z^-(tau_n))
    p(T)      = -phi_z(z(T))

With this convention d/dt <p, z_k> = <l_z, z_k> on every segment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import HybridTrajectory
from .model import HybridSystemSpec
from .steppers import DenseSegment, choose_stepper, integrate, propagators


@dataclass(frozen=True)
class AdjointTrajectory:
    """``pieces[n]`` is p^n on [tau_n, tau_{n+1}] (increasing knots).

    ``right_limits[n]`` = p+(tau_n) = p^n(tau_n) for n = 0..N and
    ``left_values[n]`` = p(tau_n) = p^{n-1}(tau_n) for n = 1..N+1
    (row 0 repeats p(0)).  ``left_values[N+1]`` is the terminal value.
    """

    modes: tuple[int, ...]
    schedule: object
    pieces: tuple[DenseSegment, ...]
    right_limits: np.ndarray
    left_values: np.ndarray

    @property
    def terminal(self) -> np.ndarray:
        return self.left_values[-1]

    @property
    def initial(self) -> np.ndarray:
        return self.right_limits[0]

    @property
    def segments(self) -> tuple[DenseSegment, ...]:
        return tuple(p for p in self.pieces if not p.degenerate)

    def p_plus(self, n: int) -> np.ndarray:
        return self.right_limits[n]

    def p_minus(self, n: int) -> np.ndarray:
        return self.left_values[n]


def solve_adjoint(system: HybridSystemSpec, traj: HybridTrajectory) -> AdjointTrajectory:
    """Integrate the adjoint backward from T on the forward mesh.

    z(t) between knots comes from the Hermite interpolant of the forward
    piece; coincident switching times compose their jumps in reverse order.
    """
    cost = system.cost
    schedule = traj.schedule
    N = schedule.N
    full = schedule.full
    n_state = system.state_dim
    right = np.empty((N + 1, n_state))
    left = np.empty((N + 2, n_state))
    pieces: list[DenseSegment] = [None] * (N + 1)  # type: ignore[list-item]
    p = -cost.terminal.grad(schedule.horizon, traj.final_state)
    left[N + 1] = p
    running = cost.running
    for idx in range(N, -1, -1):
        seg = traj.pieces[idx]
        mode = system.modes[traj.modes[idx]]
        if seg.degenerate:
            pieces[idx] = DenseSegment(seg.mode, seg.knots.copy(), p[None, :].copy(),
                                       np.zeros((1, n_state)), "")
        else:
            knots = seg.knots[::-1]
            h = knots[1] - knots[0]
            method = choose_stepper(mode, h, traj.options)
            props = propagators(mode, h, transpose=True) if method == "expm" else None
            f = mode.nonlinearity

            def rhs(t, q, seg=seg, f=f):
                z = seg(t)
                return running.grad(t, z) - f.vjp(t, z, q)

            linear = -mode.generator.T
            Y, D = integrate(linear, rhs, p, knots, method, props)
            pieces[idx] = DenseSegment(seg.mode, seg.knots, Y[::-1].copy(), D[::-1].copy(), method)
            p = Y[-1]
        right[idx] = p
        if idx > 0:
            i, j = traj.modes[idx - 1], traj.modes[idx]
            z_minus = traj.left_limits[idx]
            G = system.reset(i, j).jac(z_minus)
            p = G.T @ p - cost.switch(i, j).grad(full[idx], z_minus)
            left[idx] = p
    left[0] = right[0]
    return AdjointTrajectory(traj.modes, schedule, tuple(pieces), right, left)
