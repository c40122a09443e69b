"""Built-in problem families.

scalar-linear
    dz/dt = a_j z, l = z^2 / 2.  Closed forms for everything.
ode-planar
    Two 2-D modes (rotation-dominant and contraction-dominant) with a cubic
    damping term, affine resets, switching and terminal costs.  With
    ``split="nonlinearity"`` the generators are zero and the linear part
    lives in f instead.
dde-chain
    dz/dt = C_j z(t) + B_j z(t - r) with the point delay replaced by a chain
    of c first-order compartments at rate c / r (linear chain trick).
transport-diffusion
    Periodic grid of n points on [0, L): transport dz/dt = -z_x + g z
    followed by heat flow dz/dt = nu z_xx, with terminal cost
    h |z(T)|^2 / 2.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import BadParams, UnknownScenario
from .model import (
    AffineReset,
    CostSpec,
    CubicNonlinearity,
    HybridSystemSpec,
    IdentityReset,
    LinearNonlinearity,
    ModeSpec,
    QuadraticCost,
    SwitchingSchedule,
    ZeroCost,
    identity_resets,
    validate_schedule,
)

SCENARIOS = ("scalar-linear", "ode-planar", "dde-chain", "transport-diffusion")


@dataclass(frozen=True)
class ScenarioParams:
    """Scenario selector and parameters; ``None`` picks the family default.

    Attributes:
        name: one of ``SCENARIOS``.
        horizon: final time T.
        modes: mode sequence overriding the recommended one.
        times: switching times overriding the recommended ones.
        rates: scalar-linear mode rates a_j.
        initial: scalar-linear initial value.
        reset_scale: scalar-linear reset g(z) = s z between distinct modes.
        split: ode-planar, ``generator`` or ``nonlinearity``.
        delay: dde-chain delay r.
        chain: dde-chain compartment count c (>= 4).
        direct: dde-chain coefficients C_j on z(t).
        delayed: dde-chain coefficients B_j on z(t - r).
        history: dde-chain constant history value.
        grid: transport-diffusion grid size n (>= 16).
        length: transport-diffusion domain length L.
        diffusivity: transport-diffusion heat coefficient nu.
        growth: transport-diffusion reaction rate g in f = g z.
        profile: transport-diffusion initial profile, ``gaussian`` or ``bump``.
    """

    name: str
    horizon: float | None = None
    modes: tuple[int, ...] | None = None
    times: tuple[float, ...] | None = None
    rates: tuple[float, ...] = (1.0, -2.0)
    initial: float = 1.0
    reset_scale: float | None = None
    split: str = "generator"
    delay: float = 0.5
    chain: int = 16
    direct: tuple[float, ...] = (0.0, -1.5)
    delayed: tuple[float, ...] = (-1.0, 0.5)
    history: float = 1.0
    grid: int = 128
    length: float = 20.0
    diffusivity: float = 1.0
    growth: float = 1.0
    profile: str = "gaussian"

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))


@dataclass(frozen=True)
class Scenario:
    system: HybridSystemSpec
    modes: tuple[int, ...]
    schedule: SwitchingSchedule
    params: ScenarioParams


def build_scenario(params: ScenarioParams | str, **overrides) -> Scenario:
    """Build a system plus recommended sequence and schedule."""
    if isinstance(params, str):
        params = ScenarioParams(params, **overrides)
    elif overrides:
        raise TypeError("overrides only apply when a scenario name is given")
    try:
        builder = _BUILDERS[params.name]
    except KeyError:
        raise UnknownScenario(
            f"unknown scenario {params.name!r}; choose from {', '.join(SCENARIOS)}"
        ) from None
    if params.horizon is not None and not params.horizon > 0:
        raise BadParams("horizon must be positive")
    system, modes, times = builder(params)
    if params.modes is not None:
        modes = tuple(int(m) for m in params.modes)
    if params.times is not None:
        times = tuple(float(t) for t in params.times)
    schedule = validate_schedule(times, system.horizon)
    modes = system.check_modes(modes)
    if len(modes) != schedule.N + 1:
        raise BadParams(f"{len(modes)} modes do not match {schedule.N} switching times")
    return Scenario(system, modes, schedule, params)


def _scalar_linear(p: ScenarioParams):
    T = 1.0 if p.horizon is None else p.horizon
    rates = tuple(float(a) for a in p.rates)
    if len(rates) < 1:
        raise BadParams("scalar-linear needs at least one rate")
    modes = tuple(ModeSpec(np.array([[a]])) for a in rates)
    n = len(modes)
    if p.reset_scale is None:
        resets = identity_resets(n)
    else:
        resets = {(i, j): AffineReset([[p.reset_scale]])
                  for i in range(n) for j in range(n) if i != j}
    cost = CostSpec(running=QuadraticCost(1.0))
    system = HybridSystemSpec(modes, resets, cost, T, [p.initial])
    if n == 1:
        return system, (0,), ()
    return system, (0, 1), (0.5 * T,)


PLANAR_A0 = np.array([[-0.2, 1.5], [-1.5, -0.2]])
PLANAR_A1 = np.array([[-1.0, 0.2], [0.1, -0.6]])
PLANAR_CUBIC = -0.1


def _ode_planar(p: ScenarioParams):
    T = 2.0 if p.horizon is None else p.horizon
    if p.split == "generator":
        modes = tuple(ModeSpec(A, CubicNonlinearity(PLANAR_CUBIC)) for A in (PLANAR_A0, PLANAR_A1))
    elif p.split == "nonlinearity":
        modes = tuple(ModeSpec(np.zeros((2, 2)), CubicNonlinearity(PLANAR_CUBIC, matrix=A))
                      for A in (PLANAR_A0, PLANAR_A1))
    else:
        raise BadParams(f"split must be 'generator' or 'nonlinearity', got {p.split!r}")
    resets = {
        (0, 1): AffineReset([[1.0, 0.1], [0.0, 0.9]], [0.05, 0.0]),
        (1, 0): AffineReset([[0.95, 0.0], [0.05, 1.0]], [0.0, -0.05]),
    }
    cost = CostSpec(
        running=QuadraticCost([1.0, 0.5], target=[0.5, 0.0]),
        switching={
            (0, 1): QuadraticCost(0.0, linear=[0.1, -0.05], constant=0.05, time_slope=0.1),
            (1, 0): QuadraticCost(0.2, constant=0.05, time_slope=-0.05),
        },
        terminal=QuadraticCost(2.0),
    )
    system = HybridSystemSpec(modes, resets, cost, T, [1.0, 0.5])
    times = tuple(T * f for f in (0.2, 0.45, 0.7))
    return system, (0, 1, 0, 1), times


def dde_chain_generator(direct: float, delayed: float, delay: float, chain: int) -> np.ndarray:
    """Generator of (z, x_1, ..., x_c) for dz/dt = C z + B x_c, dx_1/dt = k (z - x_1),
    dx_i/dt = k (x_{i-1} - x_i), k = c / r."""
    n = chain + 1
    A = np.zeros((n, n))
    k = chain / delay
    A[0, 0] = direct
    A[0, chain] += delayed
    for i in range(1, n):
        A[i, i - 1] = k
        A[i, i] = -k
    return A


def _dde_chain(p: ScenarioParams):
    T = 2.0 if p.horizon is None else p.horizon
    c = int(p.chain)
    if c < 4:
        raise BadParams(f"chain length must be at least 4, got {c}")
    if not p.delay > 0:
        raise BadParams("delay must be positive")
    if len(p.direct) != len(p.delayed) or not p.direct:
        raise BadParams("direct and delayed coefficient lists must match in length")
    modes = tuple(ModeSpec(dde_chain_generator(cj, bj, p.delay, c))
                  for cj, bj in zip(p.direct, p.delayed))
    n = c + 1
    weight = np.zeros(n)
    weight[0] = 1.0
    cost = CostSpec(running=QuadraticCost(weight))
    # x_i(0) = phi(-i r / c); a constant history fills every compartment.
    z0 = np.full(n, float(p.history))
    system = HybridSystemSpec(modes, identity_resets(len(modes)), cost, T, z0)
    if len(modes) == 1:
        return system, (0,), ()
    return system, (0, 1), (0.5 * T,)


def periodic_first_difference(n: int, h: float) -> np.ndarray:
    """Central difference (z_{i+1} - z_{i-1}) / (2h) on a periodic grid."""
    D = np.zeros((n, n))
    idx = np.arange(n)
    D[idx, (idx + 1) % n] = 0.5 / h
    D[idx, (idx - 1) % n] = -0.5 / h
    return D


def periodic_second_difference(n: int, h: float) -> np.ndarray:
    D = np.zeros((n, n))
    idx = np.arange(n)
    D[idx, idx] = -2.0 / h**2
    D[idx, (idx + 1) % n] += 1.0 / h**2
    D[idx, (idx - 1) % n] += 1.0 / h**2
    return D


def transport_grid(p: ScenarioParams):
    n = int(p.grid)
    h = p.length / n
    return np.arange(n) * h, h


def _transport_diffusion(p: ScenarioParams):
    T = 1.0 if p.horizon is None else p.horizon
    n = int(p.grid)
    if n < 16:
        raise BadParams(f"grid size must be at least 16, got {n}")
    if not p.length > 0 or not p.diffusivity > 0:
        raise BadParams("length and diffusivity must be positive")
    x, h = transport_grid(p)
    centre = 0.5 * p.length
    if p.profile == "gaussian":
        z0 = np.exp(-((x - centre) ** 2))
    elif p.profile == "bump":
        r = np.abs(x - centre)
        z0 = np.where(r < 1.0, np.exp(-1.0 / np.maximum(1.0 - r**2, 1e-300)), 0.0) * np.e
    else:
        raise BadParams(f"unknown profile {p.profile!r}")
    transport = ModeSpec(-periodic_first_difference(n, h),
                         LinearNonlinearity(p.growth * np.eye(n)))
    heat = ModeSpec(p.diffusivity * periodic_second_difference(n, h))
    resets = {(0, 1): IdentityReset(), (1, 0): IdentityReset()}
    cost = CostSpec(running=ZeroCost(), terminal=QuadraticCost(h))
    system = HybridSystemSpec((transport, heat), resets, cost, T, z0)
    return system, (0, 1), (0.5 * T,)


_BUILDERS = {
    "scalar-linear": _scalar_linear,
    "ode-planar": _ode_planar,
    "dde-chain": _dde_chain,
    "transport-diffusion": _transport_diffusion,
}
