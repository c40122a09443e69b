"""Switching-time gradient, grouped optimality conditions and the
mode-insertion gradient."""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .adjoint import AdjointTrajectory, solve_adjoint
from .errors import ChainPropertyViolation, ScheduleMismatch, SwitchingError
from .forward import HybridTrajectory, integrate_on_knots, reduced_cost, solve_forward
from .model import (
    HybridSystemSpec,
    SwitchingSchedule,
    check_chain_property,
    coincidence_groups,
    default_eps,
)
from .sensitivity import VariationalTrajectory, fd_gradient, seed_variation, solve_variational
from .steppers import SolverOptions

METHODS = ("adjoint", "variational", "finite-difference")


@dataclass(frozen=True)
class GradientReport:
    """Gradient of Phi in the switching times plus the grouped sums.

    ``backward_sums[k-1]`` is sum_{j=a..k} g_j and ``forward_sums[k-1]`` is
    sum_{j=k..b} g_j, with the group limits a, b clipped to 1..N.
    ``residuals[k-1]`` is the KKT violation attributed to index k.
    """

    gradient: np.ndarray
    backward_sums: np.ndarray
    forward_sums: np.ndarray
    a: np.ndarray
    b: np.ndarray
    residuals: np.ndarray
    method: str
    eps: float

    @property
    def N(self) -> int:
        return self.gradient.size

    @property
    def kkt_residual(self) -> float:
        return float(self.residuals.max()) if self.residuals.size else 0.0

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.gradient))

    def scaled_residual(self) -> float:
        """Residual divided by max(1, ||g||)."""
        return self.kkt_residual / max(1.0, self.norm)


def kkt_residual(gradient, schedule: SwitchingSchedule, eps: float | None = None):
    """Grouped first-order conditions at a schedule.

    For every k: sum_{j=a..k} g_j <= 0 unless the group reaches tau_0 = 0,
    and sum_{j=k..b} g_j >= 0 unless the group reaches tau_{N+1} = T.  A
    group touching an end point of [0, T] cannot move past it, so the
    corresponding condition is void.

    Returns (residual, per-index residuals, backward sums, forward sums, a, b).
    """
    g = np.asarray(gradient, dtype=float)
    N = schedule.N
    if g.size != N:
        raise ScheduleMismatch(f"gradient has {g.size} entries, schedule has {N}")
    if eps is None:
        eps = default_eps(schedule.horizon)
    a, b = coincidence_groups(schedule, eps)
    back = np.empty(N)
    fwd = np.empty(N)
    res = np.zeros(N)
    for k in range(1, N + 1):
        lo = max(int(a[k - 1]), 1)
        hi = min(int(b[k - 1]), N)
        back[k - 1] = g[lo - 1:k].sum()
        fwd[k - 1] = g[k - 1:hi].sum()
        if a[k - 1] >= 1:
            res[k - 1] += max(back[k - 1], 0.0)
        if b[k - 1] <= N:
            res[k - 1] += max(-fwd[k - 1], 0.0)
    residual = float(res.max()) if N else 0.0
    return residual, res, back, fwd, a, b


def make_report(gradient, schedule: SwitchingSchedule, method: str,
                eps: float | None = None) -> GradientReport:
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if eps is None:
        eps = default_eps(schedule.horizon)
    g = np.asarray(gradient, dtype=float)
    _, res, back, fwd, a, b = kkt_residual(g, schedule, eps)
    return GradientReport(g, back, fwd, a, b, res, method, eps)


def _aligned(traj: HybridTrajectory, adj: AdjointTrajectory) -> None:
    if adj.schedule != traj.schedule or tuple(adj.modes) != tuple(traj.modes):
        raise ScheduleMismatch("adjoint was computed for a different sequence or schedule")
    for zp, pp in zip(traj.pieces, adj.pieces):
        if zp.knots.shape != pp.knots.shape or not np.array_equal(zp.knots, pp.knots):
            raise ScheduleMismatch("adjoint and forward meshes differ")


def _switch_terms(system: HybridSystemSpec, traj: HybridTrajectory, k: int) -> float:
    """Local part of g_k at tau_k.

    l(tau_k, z^-) - l(tau_k, z(tau_k)) plus the total time derivative of
    the switching cost along the incoming mode,
    l^{ij}_tau(tau_k, z^-) + <l^{ij}_z(tau_k, z^-), A^i z^- + f^i(tau_k, z^-)>,
    since z^-(tau_k) itself moves with tau_k.
    """
    tau = traj.schedule.tau(k)
    running = system.cost.running
    z_minus = traj.left_limits[k]
    z_plus = traj.right_values[k]
    i, j = traj.modes[k - 1], traj.modes[k]
    sw = system.cost.switch(i, j)
    drift = float(sw.grad(tau, z_minus) @ system.modes[i].rhs(tau, z_minus))
    return float(running.value(tau, z_minus) - running.value(tau, z_plus)
                 + sw.dt(tau, z_minus)) + drift


def switching_gradient(system: HybridSystemSpec, traj: HybridTrajectory,
                       adj: AdjointTrajectory, eps: float | None = None) -> GradientReport:
    """All N components of dPhi/dtau from one forward and one adjoint solve:

        g_k = l(tau_k, z^-) - l(tau_k, z(tau_k)) + l^{ij}_tau(tau_k, z^-)
              + <l^{ij}_z(tau_k, z^-), A^i z^- + f^i> - <p+(tau_k), z_k(tau_k)>

    with z_k(tau_k) from :func:`seed_variation`.
    """
    _aligned(traj, adj)
    N = traj.schedule.N
    g = np.empty(N)
    for k in range(1, N + 1):
        seed = seed_variation(system, traj, k)
        g[k - 1] = _switch_terms(system, traj, k) - float(adj.p_plus(k) @ seed)
    return make_report(g, traj.schedule, "adjoint", eps)


def sensitivity_integral(system: HybridSystemSpec, traj: HybridTrajectory,
                         var: VariationalTrajectory) -> float:
    """int_{tau_k}^T <l_z(t, z), z_k> dt + sum_{n>k} <l^n_z, z_k^-(tau_n)> + <phi_z, z_k(T)>."""
    k = var.k
    running = system.cost.running
    full = traj.schedule.full
    N = traj.schedule.N
    total = 0.0
    for idx in range(k, N + 1):
        zseg = traj.pieces[idx]
        vseg = var.pieces[idx - k]
        if zseg.degenerate:
            continue
        grads = running.grad(zseg.knots, zseg.values)
        integrand = np.einsum("ij,ij->i", grads, vseg.values)
        total += integrate_on_knots(integrand, zseg.knots)
    for n in range(k + 1, N + 1):
        sw = system.cost.switch(traj.modes[n - 1], traj.modes[n])
        total += float(sw.grad(full[n], traj.left_limits[n]) @ var.minus(n))
    total += float(system.cost.terminal.grad(traj.schedule.horizon, traj.final_state) @ var.final)
    return total


def variational_gradient(system: HybridSystemSpec, traj: HybridTrajectory, k: int,
                         var: VariationalTrajectory | None = None) -> float:
    """g_k through the forward sensitivity z_k instead of the adjoint."""
    if var is None:
        var = solve_variational(system, traj, k)
    if var.k != k:
        raise ValueError(f"variational trajectory is for index {var.k}, not {k}")
    return _switch_terms(system, traj, k) + sensitivity_integral(system, traj, var)


def pairing_defect(system: HybridSystemSpec, traj: HybridTrajectory, adj: AdjointTrajectory,
                   var: VariationalTrajectory) -> np.ndarray:
    """Per-piece defect of <p, z_k>(end) - <p, z_k>(start) = int <l_z, z_k> dt.

    Returns one relative defect per piece n >= k, normalised by
    max(1, |<p, z_k>(start)|, |<p, z_k>(end)|).
    """
    k = var.k
    running = system.cost.running
    out = []
    for idx in range(k, traj.schedule.N + 1):
        zseg = traj.pieces[idx]
        if zseg.degenerate:
            out.append(0.0)
            continue
        pseg = adj.pieces[idx]
        vseg = var.pieces[idx - k]
        start = float(pseg.values[0] @ vseg.values[0])
        end = float(pseg.values[-1] @ vseg.values[-1])
        grads = running.grad(zseg.knots, zseg.values)
        integral = integrate_on_knots(np.einsum("ij,ij->i", grads, vseg.values), zseg.knots)
        scale = max(1.0, abs(start), abs(end))
        out.append(abs(end - start - integral) / scale)
    return np.array(out)


def compute_gradient(system: HybridSystemSpec, modes: Sequence[int], schedule: SwitchingSchedule,
                     options: SolverOptions | None = None, method: str = "adjoint",
                     eps: float | None = None, fd_step: float | None = None) -> GradientReport:
    """Gradient of the reduced cost by the chosen method."""
    if method == "finite-difference":
        values = [fd_gradient(system, modes, schedule, k, fd_step, options).value
                  for k in range(1, schedule.N + 1)]
        return make_report(values, schedule, method, eps)
    traj = solve_forward(system, modes, schedule, options)
    if method == "adjoint":
        return switching_gradient(system, traj, solve_adjoint(system, traj), eps)
    if method == "variational":
        values = [variational_gradient(system, traj, k) for k in range(1, schedule.N + 1)]
        return make_report(values, schedule, method, eps)
    raise ValueError(f"unknown method {method!r}")


def agreement(value, reference, rel_tol: float, abs_tol: float = 1e-6,
              floor: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
    """Component-wise error and pass flag of ``value`` against ``reference``.

    The error is relative, |x - r| / |r|, where |r| >= ``floor`` and
    absolute below it; the absolute branch passes at ``abs_tol``.
    """
    x = np.asarray(value, dtype=float)
    r = np.asarray(reference, dtype=float)
    diff = np.abs(x - r)
    small = np.abs(r) < floor
    err = np.where(small, diff, diff / np.where(small, 1.0, np.abs(r)))
    ok = np.where(small, diff <= abs_tol, err <= rel_tol)
    return err, ok


@dataclass(frozen=True)
class GradientComparison:
    """Side-by-side adjoint, variational and finite-difference gradients."""

    adjoint: np.ndarray
    variational: np.ndarray
    finite_difference: np.ndarray
    fd_reliable: np.ndarray
    fd_schemes: tuple[str, ...]
    var_tol: float = 1e-4
    fd_tol: float = 1e-3
    abs_tol: float = 1e-6
    floor: float = 1e-3

    @property
    def var_error(self) -> np.ndarray:
        return agreement(self.variational, self.adjoint, self.var_tol, self.abs_tol, self.floor)[0]

    @property
    def fd_error(self) -> np.ndarray:
        return agreement(self.finite_difference, self.adjoint, self.fd_tol, self.abs_tol,
                         self.floor)[0]

    @property
    def passed(self) -> np.ndarray:
        var_ok = agreement(self.variational, self.adjoint, self.var_tol, self.abs_tol,
                           self.floor)[1]
        fd_ok = agreement(self.finite_difference, self.adjoint, self.fd_tol, self.abs_tol,
                          self.floor)[1]
        return var_ok & fd_ok


def compare_gradients(system, modes, schedule, options=None, fd_step=None,
                      var_tol: float = 1e-4, fd_tol: float = 1e-3, abs_tol: float = 1e-6,
                      floor: float = 1e-3) -> GradientComparison:
    traj = solve_forward(system, modes, schedule, options)
    adj = solve_adjoint(system, traj)
    g_adj = switching_gradient(system, traj, adj).gradient
    g_var = np.array([variational_gradient(system, traj, k) for k in range(1, schedule.N + 1)])
    fds = [fd_gradient(system, modes, schedule, k, fd_step, options)
           for k in range(1, schedule.N + 1)]
    return GradientComparison(
        g_adj, g_var, np.array([r.value for r in fds]), np.array([r.reliable for r in fds]),
        tuple(r.scheme for r in fds), var_tol, fd_tol, abs_tol, floor,
    )


# ---------------------------------------------------------------------------
# Mode insertion


def split_schedule(modes: Sequence[int], schedule: SwitchingSchedule, t: float):
    """Make t a switching time of the schedule.

    If t equals existing switching times the largest such index k is
    returned unchanged.  Otherwise the owning mode is split into a
    coincident self-transition at t (identity, zero cost).  t = 0 maps to
    k = 0.  Returns (modes, schedule, k) with modes[k] the ambient mode
    active right after t.
    """
    T = schedule.horizon
    if not 0.0 <= t <= T:
        raise ValueError(f"insertion time {t} outside [0, {T}]")
    modes = tuple(modes)
    times = schedule.times
    hits = [n for n, tau in enumerate(times, start=1) if tau == t]
    if hits:
        return modes, schedule, hits[-1]
    if t == 0.0:
        return modes, schedule, 0
    n = int(np.searchsorted(np.asarray(times, dtype=float), t, side="right"))
    new_modes = modes[: n + 1] + (modes[n],) + modes[n + 1:]
    new_times = times[:n] + (float(t),) + times[n:]
    return new_modes, SwitchingSchedule(new_times, T), n + 1


def insert_mode(modes: Sequence[int], schedule: SwitchingSchedule, k: int, jhat: int,
                dwell: float = 0.0):
    """Insert ``jhat`` on [tau_k, tau_k + dwell] ahead of the mode active after tau_k."""
    modes = tuple(modes)
    times = schedule.times
    start = schedule.tau(k)
    new_modes = modes[:k] + (int(jhat),) + modes[k:]
    new_times = times[:k] + (start + dwell,) + times[k:]
    return new_modes, SwitchingSchedule(tuple(new_times), schedule.horizon)


def _insertion_chain_check(system: HybridSystemSpec, modes, traj: HybridTrajectory, k: int,
                           jhat: int, tol: float) -> None:
    if k == 0:
        system.reset(jhat, modes[0])
        return
    before, after = modes[k - 1], modes[k]
    system.reset(before, jhat)
    system.reset(jhat, after)
    z = traj.left_limits[k]
    scale = 1.0 + float(np.linalg.norm(z))
    report = check_chain_property(system, (before, jhat, after), z[None, :], tol * scale)
    if not report.passed:
        raise ChainPropertyViolation(report.triple, report.defect)


def insertion_gradient(system: HybridSystemSpec, modes: Sequence[int],
                       schedule: SwitchingSchedule, k: int, jhat: int,
                       options: SolverOptions | None = None, chain_tol: float = 1e-10) -> float:
    """One-sided derivative of the cost in the dwell time of ``jhat`` inserted
    at tau_k, right before the mode j_k resumes.

    The expanded sequence carries a zero-length ``jhat`` segment at tau_k;
    the value is the switching-time gradient of the expanded system in the
    time at which ``jhat`` hands back to j_k:

        l(tau, z'^-) - l(tau, z) + l^{jhat,j_k}_tau + <l^{jhat,j_k}_z, A^jhat z'^- + f^jhat>
        - <p+(tau), g^{jhat,j_k}_z(z'^-)(A^jhat z'^- + f^jhat) - (A^{j_k} z + f^{j_k})>

    where z'^- is the state entering ``jhat`` and z = z(tau_k).
    """
    modes = system.check_modes(modes)
    if not 0 <= k <= schedule.N:
        raise IndexError(f"insertion position {k} outside 0..{schedule.N}")
    traj = solve_forward(system, modes, schedule, options)
    _insertion_chain_check(system, modes, traj, k, jhat, chain_tol)
    new_modes, new_schedule = insert_mode(modes, schedule, k, jhat)
    expanded = solve_forward(system, new_modes, new_schedule, options)
    adj = solve_adjoint(system, expanded)
    kk = k + 1
    seed = seed_variation(system, expanded, kk)
    return _switch_terms(system, expanded, kk) - float(adj.p_plus(kk) @ seed)


def insertion_fd(system: HybridSystemSpec, modes: Sequence[int], schedule: SwitchingSchedule,
                 k: int, jhat: int, h: float = 1e-5,
                 options: SolverOptions | None = None) -> float:
    """(Phi(jhat on [tau_k, tau_k + h]) - Phi(jhat on [tau_k, tau_k])) / h.

    Both costs include any switching costs of the inserted transitions.
    """
    m0, s0 = insert_mode(modes, schedule, k, jhat, 0.0)
    m1, s1 = insert_mode(modes, schedule, k, jhat, h)
    room = schedule.full[k + 1] - schedule.tau(k)
    if h > room:
        raise ValueError(f"step {h} exceeds the room {room} after tau_{k}")
    return (reduced_cost(system, m1, s1, options) - reduced_cost(system, m0, s0, options)) / h


@dataclass(frozen=True)
class InsertionEntry:
    time: float
    mode: int
    value: float
    feasible: bool
    reason: str = ""


@dataclass(frozen=True)
class InsertionScan:
    """Entries sorted by gradient value (ascending); infeasible ones last with NaN."""

    entries: tuple[InsertionEntry, ...] = field(default_factory=tuple)

    def best(self) -> InsertionEntry | None:
        for e in self.entries:
            if e.feasible:
                return e
        return None

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def insertion_scan(system: HybridSystemSpec, modes: Sequence[int], schedule: SwitchingSchedule,
                   times: Iterable[float], candidates: Iterable[int],
                   options: SolverOptions | None = None, chain_tol: float = 1e-10,
                   skip_ambient: bool = False) -> InsertionScan:
    """Insertion gradient for every (time, candidate) pair.

    Interior times are first made switching times by splitting the owning
    segment.  Pairs whose transitions are missing or violate the chain
    property, and insertions at T, are kept with ``feasible=False``.
    """
    modes = system.check_modes(modes)
    candidates = [int(c) for c in candidates]
    entries = []
    T = schedule.horizon
    for t in times:
        t = float(t)
        if t >= T:
            for c in candidates:
                entries.append(InsertionEntry(t, c, float("nan"), False, "at horizon"))
            continue
        m2, s2, k = split_schedule(modes, schedule, t)
        for c in candidates:
            if skip_ambient and c == m2[k]:
                continue
            try:
                value = insertion_gradient(system, m2, s2, k, c, options, chain_tol)
            except SwitchingError as exc:
                entries.append(InsertionEntry(t, c, float("nan"), False, type(exc).__name__))
                continue
            entries.append(InsertionEntry(t, c, float(value), True))
    feasible = sorted((e for e in entries if e.feasible), key=lambda e: (e.value, e.time, e.mode))
    rest = [e for e in entries if not e.feasible]
    return InsertionScan(tuple(feasible + rest))
