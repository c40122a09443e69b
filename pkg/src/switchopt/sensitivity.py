"""Independent gradient oracles: the forward variational equation and finite
differences of the reduced cost."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .forward import HybridTrajectory, reduced_cost
from .model import HybridSystemSpec, SwitchingSchedule, default_eps
from .steppers import DenseSegment, SolverOptions, choose_stepper, integrate, propagators


def seed_variation(system: HybridSystemSpec, traj: HybridTrajectory, k: int) -> np.ndarray:
    """z_k(tau_k) = g_z(z^-) (A^{j_{k-1}} z^- + f^{j_{k-1}}(tau_k, z^-))
                   - (A^{j_k} z^k(tau_k) + f^{j_k}(tau_k, z^k(tau_k)))."""
    N = traj.schedule.N
    if not 1 <= k <= N:
        raise IndexError(f"switch index {k} outside 1..{N}")
    tau = traj.schedule.tau(k)
    i, j = traj.modes[k - 1], traj.modes[k]
    z_minus = traj.left_limits[k]
    z_plus = traj.right_values[k]
    G = system.reset(i, j).jac(z_minus)
    before = system.modes[i].rhs(tau, z_minus)
    after = system.modes[j].rhs(tau, z_plus)
    return G @ before - after


@dataclass(frozen=True)
class VariationalTrajectory:
    """z_k = dz/dtau_k on [tau_k, T]; ``pieces[n - k]`` covers [tau_n, tau_{n+1}].

    ``left_limits[n - k]`` holds z_k^-(tau_n) for n = k+1..N+1 (index 0 is
    the seed) and ``right_values[n - k]`` holds z_k(tau_n) for n = k..N.
    """

    k: int
    pieces: tuple[DenseSegment, ...]
    left_limits: np.ndarray
    right_values: np.ndarray

    @property
    def seed(self) -> np.ndarray:
        return self.right_values[0]

    @property
    def final(self) -> np.ndarray:
        return self.left_limits[-1]

    def minus(self, n: int) -> np.ndarray:
        return self.left_limits[n - self.k]

    def plus(self, n: int) -> np.ndarray:
        return self.right_values[n - self.k]


def solve_variational(system: HybridSystemSpec, traj: HybridTrajectory, k: int,
                      seed: np.ndarray | None = None) -> VariationalTrajectory:
    """Integrate dz_k/dt = A z_k + f_z(t, z(t)) z_k forward from tau_k on the
    forward mesh, applying g_z jumps at later switches."""
    if seed is None:
        seed = seed_variation(system, traj, k)
    N = traj.schedule.N
    v = np.array(seed, dtype=float)
    n_state = v.size
    left = np.empty((N + 2 - k, n_state))
    right = np.empty((N + 1 - k, n_state))
    left[0] = v
    pieces = []
    for idx in range(k, N + 1):
        if idx > k:
            left[idx - k] = v
            i, j = traj.modes[idx - 1], traj.modes[idx]
            v = system.reset(i, j).jac(traj.left_limits[idx]) @ v
        right[idx - k] = v
        seg = traj.pieces[idx]
        mode = system.modes[traj.modes[idx]]
        if seg.degenerate:
            pieces.append(DenseSegment(seg.mode, seg.knots.copy(), v[None, :].copy(),
                                       np.zeros((1, n_state)), ""))
            continue
        h = seg.knots[1] - seg.knots[0]
        method = choose_stepper(mode, h, traj.options)
        props = propagators(mode, h) if method == "expm" else None
        f = mode.nonlinearity

        def rhs(t, y, seg=seg, f=f):
            return f.jvp(t, seg(t), y)

        Y, D = integrate(mode.generator, rhs, v, seg.knots, method, props)
        pieces.append(DenseSegment(seg.mode, seg.knots, Y, D, method))
        v = Y[-1]
    left[N + 1 - k] = v
    return VariationalTrajectory(k, tuple(pieces), left, right)


@dataclass(frozen=True)
class FDResult:
    """Finite-difference derivative of Phi in tau_k.

    scheme: ``central``, ``forward``/``backward`` (second-order one-sided
    stencils used at active order constraints) or ``pinned`` when tau_k can
    move in neither direction.  ``richardson`` is the same estimate at half
    the step; ``reliable`` is False when the two disagree by more than ten
    times ``tolerance`` (relative to max(1, |value|)).
    """

    value: float
    step: float
    scheme: str
    clipped: bool
    richardson: float
    tolerance: float

    @property
    def one_sided(self) -> bool:
        return self.scheme in ("forward", "backward")

    @property
    def reliable(self) -> bool:
        if not np.isfinite(self.value):
            return False
        gap = abs(self.value - self.richardson)
        return gap <= 10.0 * self.tolerance * max(1.0, abs(self.value))


def _shifted(schedule: SwitchingSchedule, k: int, delta: float) -> SwitchingSchedule:
    times = list(schedule.times)
    times[k - 1] = times[k - 1] + delta
    return SwitchingSchedule(tuple(times), schedule.horizon)


def _difference(phi, schedule, k, h, scheme):
    if scheme == "central":
        return (phi(_shifted(schedule, k, h)) - phi(_shifted(schedule, k, -h))) / (2.0 * h)
    sign = 1.0 if scheme == "forward" else -1.0
    f0 = phi(schedule)
    f1 = phi(_shifted(schedule, k, sign * h))
    f2 = phi(_shifted(schedule, k, sign * 2.0 * h))
    return sign * (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h)


def fd_gradient(system: HybridSystemSpec, modes: Sequence[int], schedule: SwitchingSchedule,
                k: int, h: float | None = None, options: SolverOptions | None = None,
                tolerance: float = 1e-3) -> FDResult:
    """Finite difference of the reduced cost in tau_k using full forward solves.

    Central where tau_k +- h stays admissible; the step is clipped to the
    available room otherwise, and a one-sided stencil is used when tau_k
    touches a neighbour (one-sided derivative at the constraint).
    """
    T = schedule.horizon
    if h is None:
        h = 1e-5 * T
    full = schedule.full
    eps = default_eps(T)
    room_left = full[k] - full[k - 1]
    room_right = full[k + 1] - full[k]

    def phi(s):
        return reduced_cost(system, modes, s, options)

    clipped = False
    if room_left > eps and room_right > eps:
        scheme = "central"
        if min(room_left, room_right) < h:
            h = min(room_left, room_right)
            clipped = True
    elif room_right > eps:
        scheme = "forward"
        if room_right < 2.0 * h:
            h = 0.5 * room_right
            clipped = True
    elif room_left > eps:
        scheme = "backward"
        if room_left < 2.0 * h:
            h = 0.5 * room_left
            clipped = True
    else:
        return FDResult(float("nan"), 0.0, "pinned", False, float("nan"), tolerance)
    value = _difference(phi, schedule, k, h, scheme)
    half = _difference(phi, schedule, k, 0.5 * h, scheme)
    return FDResult(float(value), float(h), scheme, clipped, float(half), tolerance)


def fd_gradient_vector(system, modes, schedule, h=None, options=None, tolerance=1e-3):
    return [fd_gradient(system, modes, schedule, k, h, options, tolerance)
            for k in range(1, schedule.N + 1)]
