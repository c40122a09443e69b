"""Fixed-step integrators for dy/dt = L y + r(t, y) on an equispaced mesh.

Two schemes share one driver:

* ``rk4``  classical four-stage Runge-Kutta, order 4.
* ``expm`` Lawson midpoint: explicit midpoint applied in the frame
  u = exp(-t L) y.  Exact when r = 0 and second order otherwise; uses only
  exp(h L) and exp(h L / 2), so stiff generators cost nothing extra.

The mesh may run backwards in time (negative step), which is how the
adjoint pass uses it.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import BlowUp, NonFiniteState

STEPPERS = ("auto", "rk4", "expm")


@dataclass(frozen=True)
class SolverOptions:
    """Mesh and stepper settings.

    h_max: largest step; ``None`` means T / 1000.
    stepper: ``auto`` picks ``expm`` when h * ||A||_1 exceeds ``stiff_threshold``.
    blowup_factor: bound on ||z|| relative to (1 + ||z0||).
    """

    h_max: float | None = None
    stepper: str = "auto"
    stiff_threshold: float = 0.25
    blowup_factor: float = 1e12

    def __post_init__(self):
        if self.stepper not in STEPPERS:
            raise ValueError(f"unknown stepper {self.stepper!r}; choose from {STEPPERS}")
        if self.h_max is not None and not self.h_max > 0:
            raise ValueError("h_max must be positive")

    def step_size(self, horizon: float) -> float:
        return self.h_max if self.h_max is not None else horizon / 1000.0


def mesh(t_start: float, t_end: float, h_max: float) -> np.ndarray:
    """Equal-sized steps, count = ceil((t_end - t_start) / h_max)."""
    length = t_end - t_start
    if length <= 0.0:
        return np.array([t_start])
    n = max(1, int(np.ceil(length / h_max * (1.0 - 1e-12))))
    knots = np.linspace(t_start, t_end, n + 1)
    knots[-1] = t_end
    return knots


def choose_stepper(mode, h: float, options: SolverOptions) -> str:
    if options.stepper != "auto":
        return options.stepper
    return "expm" if abs(h) * mode.generator_norm() > options.stiff_threshold else "rk4"


def propagators(mode, h: float, transpose: bool = False):
    """exp(h A) and exp(h A / 2) for a mode, cached per step size."""
    key = ("expm", float(abs(h)))
    cache = mode._cache
    if key not in cache:
        A = mode.generator
        cache[key] = (expm(abs(h) * A), expm(0.5 * abs(h) * A))
        if len(cache) > 64:
            for stale in [k for k in cache if k[0] == "expm" and k != key][:32]:
                del cache[stale]
    E, Eh = cache[key]
    if transpose:
        return E.T, Eh.T
    return E, Eh


def integrate(linear: np.ndarray, rhs: Callable[[float, np.ndarray], np.ndarray],
              y0: np.ndarray, knots: np.ndarray, method: str, props=None,
              bound: float = np.inf):
    """Integrate over ``knots``; returns (values, derivatives) at every knot.

    ``props`` must hold (exp(h L), exp(h L / 2)) for the signed step h when
    ``method == "expm"``.
    """
    K = len(knots)
    n = y0.size
    Y = np.empty((K, n))
    D = np.empty((K, n))
    y = np.array(y0, dtype=float)
    Y[0] = y
    if K == 1:
        D[0] = linear @ y + rhs(knots[0], y)
        return Y, D
    h = knots[1] - knots[0]
    half = 0.5 * h
    if method == "rk4":
        for i in range(K - 1):
            t = knots[i]
            tm = t + half
            k1 = linear @ y + rhs(t, y)
            y2 = y + half * k1
            k2 = linear @ y2 + rhs(tm, y2)
            y3 = y + half * k2
            k3 = linear @ y3 + rhs(tm, y3)
            y4 = y + h * k3
            k4 = linear @ y4 + rhs(knots[i + 1], y4)
            D[i] = k1
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            _guard(y, bound, knots[i + 1])
            Y[i + 1] = y
    elif method == "expm":
        E, Eh = props
        for i in range(K - 1):
            t = knots[i]
            r0 = rhs(t, y)
            D[i] = linear @ y + r0
            y_mid = Eh @ (y + half * r0)
            y = E @ y + h * (Eh @ rhs(t + half, y_mid))
            _guard(y, bound, knots[i + 1])
            Y[i + 1] = y
    else:
        raise ValueError(f"unknown method {method!r}")
    D[-1] = linear @ y + rhs(knots[-1], y)
    return Y, D


def _guard(y: np.ndarray, bound: float, t: float) -> None:
    size = float(np.linalg.norm(y))
    if not np.isfinite(size):
        raise NonFiniteState(f"non-finite state at t = {t:.6g}", time=t)
    if size > bound:
        raise BlowUp(f"state norm {size:.3e} exceeds bound {bound:.3e} at t = {t:.6g}", time=t)


class DenseSegment:
    """Knot values and time derivatives of one smooth piece, with cubic Hermite
    interpolation in between.  Knots are stored in increasing time order.
    """

    def __init__(self, mode: int, knots: np.ndarray, values: np.ndarray,
                 derivatives: np.ndarray, method: str = ""):
        self.mode = mode
        self.knots = knots
        self.values = values
        self.derivatives = derivatives
        self.method = method

    @property
    def t_start(self) -> float:
        return float(self.knots[0])

    @property
    def t_end(self) -> float:
        return float(self.knots[-1])

    @property
    def degenerate(self) -> bool:
        return len(self.knots) == 1

    @property
    def start(self) -> np.ndarray:
        return self.values[0]

    @property
    def end(self) -> np.ndarray:
        return self.values[-1]

    def __call__(self, t: float) -> np.ndarray:
        knots = self.knots
        if len(knots) == 1:
            return self.values[0].copy()
        i = int(np.searchsorted(knots, t, side="right")) - 1
        i = min(max(i, 0), len(knots) - 2)
        h = knots[i + 1] - knots[i]
        s = (t - knots[i]) / h
        if s == 0.0:
            return self.values[i].copy()
        s2 = s * s
        h00 = (1.0 + 2.0 * s) * (1.0 - s) ** 2
        h10 = s * (1.0 - s) ** 2
        h01 = s2 * (3.0 - 2.0 * s)
        h11 = s2 * (s - 1.0)
        return (h00 * self.values[i] + (h10 * h) * self.derivatives[i]
                + h01 * self.values[i + 1] + (h11 * h) * self.derivatives[i + 1])

    def __repr__(self) -> str:
        return (f"DenseSegment(mode={self.mode}, t=[{self.t_start:.6g}, {self.t_end:.6g}], "
                f"knots={len(self.knots)}, method={self.method!r})")
