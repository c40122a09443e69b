"""Problem definition: modes, reset maps, costs, schedules.

All maps come from a closed registry of parametric forms so that every
Jacobian is available in closed form and every system can be written to and
read back from a config file.  States are 1-D float arrays; the dual pairing
is the Euclidean dot product, so any quadrature weights of an underlying
function space must be folded into the cost parameters.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any, ClassVar

import numpy as np

from .errors import BadParams, MissingReset, MonotonicityViolation, OutOfHorizon

Array = np.ndarray


def _as_float_array(value: Any, ndim: int | None = None) -> Array:
    arr = np.array(value, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise BadParams(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _weight_apply(weight: Array, v: Array) -> Array:
    """Apply a weight given as scalar (times identity), diagonal or full matrix."""
    if weight.ndim == 0:
        return weight * v
    if weight.ndim == 1:
        return weight * v
    return v @ weight.T if v.ndim == 2 else weight @ v


class _Registered:
    """Parametric form with a registry name and a parameter schema.

    ``schema`` maps constructor argument names to one of ``"scalar"``,
    ``"vector"``, ``"matrix"`` or ``"array"`` (scalar, vector or matrix).
    """

    kind: ClassVar[str]
    schema: ClassVar[dict[str, str]] = {}

    def params(self) -> dict[str, Any]:
        out = {}
        for name in self.schema:
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out

    def __eq__(self, other: object) -> bool:
        if type(self) is not type(other):
            return NotImplemented
        mine, theirs = self.params(), other.params()  # type: ignore[attr-defined]
        if mine.keys() != theirs.keys():
            return False
        return all(np.array_equal(mine[k], theirs[k]) for k in mine)

    def __hash__(self) -> int:
        return hash((self.kind, tuple(self.params())))

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}={np.asarray(v).tolist()!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({inner})"


# ---------------------------------------------------------------------------
# Nonlinearities f(t, z)


class Nonlinearity(_Registered):
    def __call__(self, t: float, z: Array) -> Array:
        raise NotImplementedError

    def jac(self, t: float, z: Array) -> Array:
        raise NotImplementedError

    def jvp(self, t: float, z: Array, v: Array) -> Array:
        return self.jac(t, z) @ v

    def vjp(self, t: float, z: Array, w: Array) -> Array:
        return self.jac(t, z).T @ w


class ZeroNonlinearity(Nonlinearity):
    kind = "zero"

    def __call__(self, t, z):
        return np.zeros_like(z)

    def jac(self, t, z):
        return np.zeros((z.size, z.size))

    def jvp(self, t, z, v):
        return np.zeros_like(v)

    def vjp(self, t, z, w):
        return np.zeros_like(w)


class LinearNonlinearity(Nonlinearity):
    """f(t, z) = M z + b + c sin(w t)."""

    kind = "linear"
    schema = {"matrix": "matrix", "offset": "vector", "forcing": "vector", "frequency": "scalar"}

    def __init__(self, matrix, offset=None, forcing=None, frequency: float = 0.0):
        self.matrix = _as_float_array(matrix, 2)
        n = self.matrix.shape[0]
        if self.matrix.shape != (n, n):
            raise BadParams("linear nonlinearity matrix must be square")
        self.offset = None if offset is None else _as_float_array(offset, 1)
        self.forcing = None if forcing is None else _as_float_array(forcing, 1)
        self.frequency = float(frequency)

    def params(self):
        out = super().params()
        if self.frequency == 0.0:
            out.pop("frequency")
        return out

    def __call__(self, t, z):
        out = self.matrix @ z
        if self.offset is not None:
            out = out + self.offset
        if self.forcing is not None:
            out = out + self.forcing * np.sin(self.frequency * t)
        return out

    def jac(self, t, z):
        return np.array(self.matrix)

    def jvp(self, t, z, v):
        return self.matrix @ v

    def vjp(self, t, z, w):
        return self.matrix.T @ w


class CubicNonlinearity(Nonlinearity):
    """f(t, z) = M z + c * z**3 (elementwise cubic, optional linear part)."""

    kind = "cubic"
    schema = {"cubic": "array", "matrix": "matrix"}

    def __init__(self, cubic, matrix=None):
        self.cubic = _as_float_array(cubic)
        if self.cubic.ndim > 1:
            raise BadParams("cubic coefficient must be a scalar or a vector")
        self.matrix = None if matrix is None else _as_float_array(matrix, 2)

    def __call__(self, t, z):
        out = self.cubic * z**3
        if self.matrix is not None:
            out = self.matrix @ z + out
        return out

    def _diag(self, z):
        return 3.0 * self.cubic * z**2

    def jac(self, t, z):
        out = np.diag(self._diag(z) * np.ones_like(z))
        if self.matrix is not None:
            out = out + self.matrix
        return out

    def jvp(self, t, z, v):
        out = self._diag(z) * v
        if self.matrix is not None:
            out = self.matrix @ v + out
        return out

    def vjp(self, t, z, w):
        out = self._diag(z) * w
        if self.matrix is not None:
            out = self.matrix.T @ w + out
        return out


class LogisticNonlinearity(Nonlinearity):
    """f(t, z) = r z (1 - z / K), elementwise."""

    kind = "logistic"
    schema = {"rate": "array", "capacity": "array"}

    def __init__(self, rate, capacity):
        self.rate = _as_float_array(rate)
        self.capacity = _as_float_array(capacity)
        if np.any(self.capacity == 0):
            raise BadParams("logistic capacity must be nonzero")

    def __call__(self, t, z):
        return self.rate * z * (1.0 - z / self.capacity)

    def _diag(self, z):
        return self.rate * (1.0 - 2.0 * z / self.capacity)

    def jac(self, t, z):
        return np.diag(self._diag(z) * np.ones_like(z))

    def jvp(self, t, z, v):
        return self._diag(z) * v

    def vjp(self, t, z, w):
        return self._diag(z) * w


NONLINEARITIES: dict[str, type[Nonlinearity]] = {
    cls.kind: cls
    for cls in (ZeroNonlinearity, LinearNonlinearity, CubicNonlinearity, LogisticNonlinearity)
}


# ---------------------------------------------------------------------------
# Reset maps g(z)


class ResetMap(_Registered):
    def __call__(self, z: Array) -> Array:
        raise NotImplementedError

    def jac(self, z: Array) -> Array:
        raise NotImplementedError


class IdentityReset(ResetMap):
    kind = "identity"

    def __call__(self, z):
        return np.array(z, dtype=float)

    def jac(self, z):
        return np.eye(z.size)


class AffineReset(ResetMap):
    """g(z) = M z + b."""

    kind = "affine"
    schema = {"matrix": "matrix", "offset": "vector"}

    def __init__(self, matrix, offset=None):
        self.matrix = _as_float_array(matrix, 2)
        self.offset = None if offset is None else _as_float_array(offset, 1)

    def __call__(self, z):
        out = self.matrix @ z
        return out if self.offset is None else out + self.offset

    def jac(self, z):
        return np.array(self.matrix)


class SaturationReset(ResetMap):
    """g(z) = s tanh(z / s), elementwise soft clipping."""

    kind = "saturation"
    schema = {"scale": "array"}

    def __init__(self, scale):
        self.scale = _as_float_array(scale)
        if np.any(self.scale <= 0):
            raise BadParams("saturation scale must be positive")

    def __call__(self, z):
        return self.scale * np.tanh(z / self.scale)

    def jac(self, z):
        return np.diag(1.0 - np.tanh(z / self.scale) ** 2)


RESETS: dict[str, type[ResetMap]] = {
    cls.kind: cls for cls in (IdentityReset, AffineReset, SaturationReset)
}


# ---------------------------------------------------------------------------
# Cost terms


class CostTerm(_Registered):
    """Scalar map c(t, z) with gradient in z and partial derivative in t.

    ``value`` and ``grad`` also accept a stack of states (rows) together with
    a vector of times, which the quadrature uses.
    """

    def value(self, t, z):
        raise NotImplementedError

    def grad(self, t, z):
        raise NotImplementedError

    def dt(self, t, z) -> float:
        raise NotImplementedError


class ZeroCost(CostTerm):
    kind = "zero"

    def value(self, t, z):
        z = np.asarray(z)
        return np.zeros(z.shape[0]) if z.ndim == 2 else 0.0

    def grad(self, t, z):
        return np.zeros_like(np.asarray(z, dtype=float))

    def dt(self, t, z):
        return 0.0


class QuadraticCost(CostTerm):
    """c(t, z) = c0 + c1 t + w.z + 1/2 (z - r)^T Q (z - r).

    ``weight`` Q may be a scalar (times identity), a diagonal vector or a
    full matrix; a full matrix is symmetrised on construction.
    """

    kind = "quadratic"
    schema = {
        "weight": "array",
        "target": "vector",
        "linear": "vector",
        "constant": "scalar",
        "time_slope": "scalar",
    }

    def __init__(self, weight=0.0, target=None, linear=None, constant: float = 0.0,
                 time_slope: float = 0.0):
        w = _as_float_array(weight)
        if w.ndim == 2:
            w = _as_float_array(0.5 * (w + w.T))
        self.weight = w
        self.target = None if target is None else _as_float_array(target, 1)
        self.linear = None if linear is None else _as_float_array(linear, 1)
        self.constant = float(constant)
        self.time_slope = float(time_slope)

    def params(self):
        out = super().params()
        for key in ("constant", "time_slope"):
            if out[key] == 0.0:
                out.pop(key)
        return out

    def _shift(self, z):
        return z if self.target is None else z - self.target

    def value(self, t, z):
        z = np.asarray(z, dtype=float)
        d = self._shift(z)
        quad = 0.5 * np.sum(d * _weight_apply(self.weight, d), axis=-1)
        out = self.constant + self.time_slope * np.asarray(t, dtype=float) + quad
        if self.linear is not None:
            out = out + z @ self.linear
        return out if np.ndim(out) else float(out)

    def grad(self, t, z):
        z = np.asarray(z, dtype=float)
        out = _weight_apply(self.weight, self._shift(z))
        if self.linear is not None:
            out = out + self.linear
        return np.broadcast_to(out, z.shape).astype(float)

    def dt(self, t, z):
        return self.time_slope


COSTS: dict[str, type[CostTerm]] = {cls.kind: cls for cls in (ZeroCost, QuadraticCost)}


# ---------------------------------------------------------------------------
# System


@dataclass(frozen=True, eq=False)
class ModeSpec:
    """One mode: generator matrix A and nonlinearity f, dz/dt = A z + f(t, z)."""

    generator: Array
    nonlinearity: Nonlinearity = field(default_factory=ZeroNonlinearity)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        A = _as_float_array(self.generator, 2)
        if A.shape[0] != A.shape[1]:
            raise BadParams(f"generator must be square, got {A.shape}")
        object.__setattr__(self, "generator", A)

    @property
    def dim(self) -> int:
        return self.generator.shape[0]

    def rhs(self, t: float, z: Array) -> Array:
        return self.generator @ z + self.nonlinearity(t, z)

    def generator_norm(self) -> float:
        if "norm" not in self._cache:
            self._cache["norm"] = float(np.linalg.norm(self.generator, 1))
        return self._cache["norm"]

    def __eq__(self, other):
        if not isinstance(other, ModeSpec):
            return NotImplemented
        return np.array_equal(self.generator, other.generator) and (
            self.nonlinearity == other.nonlinearity
        )

    __hash__ = object.__hash__


@dataclass(frozen=True, eq=False)
class CostSpec:
    """Running cost l, switching costs l^{i,j} and terminal cost phi.

    Transitions absent from ``switching`` carry zero cost.
    """

    running: CostTerm = field(default_factory=ZeroCost)
    switching: Mapping[tuple[int, int], CostTerm] = field(default_factory=dict)
    terminal: CostTerm = field(default_factory=ZeroCost)

    def switch(self, i: int, j: int) -> CostTerm:
        if i == j:
            return _ZERO_COST
        return self.switching.get((i, j), _ZERO_COST)

    def __eq__(self, other):
        if not isinstance(other, CostSpec):
            return NotImplemented
        return (
            self.running == other.running
            and self.terminal == other.terminal
            and dict(self.switching) == dict(other.switching)
        )

    __hash__ = object.__hash__


_ZERO_COST = ZeroCost()
_IDENTITY = IdentityReset()


@dataclass(frozen=True, eq=False)
class HybridSystemSpec:
    """Full problem datum: modes, reset table, cost, horizon and initial state.

    The reset table is keyed by ordered pairs (i, j) with i != j; a
    self-transition (i, i) is always the identity with zero switching cost.
    """

    modes: tuple[ModeSpec, ...]
    resets: Mapping[tuple[int, int], ResetMap]
    cost: CostSpec
    horizon: float
    initial_state: Array

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "resets", dict(self.resets))
        z0 = _as_float_array(self.initial_state, 1)
        object.__setattr__(self, "initial_state", z0)
        if not self.horizon > 0:
            raise BadParams(f"horizon must be positive, got {self.horizon}")
        if not self.modes:
            raise BadParams("at least one mode is required")
        n = z0.size
        for idx, mode in enumerate(self.modes):
            if mode.dim != n:
                raise BadParams(f"mode {idx} generator has dim {mode.dim}, state has {n}")
        for i, j in self.resets:
            if not (0 <= i < len(self.modes) and 0 <= j < len(self.modes)) or i == j:
                raise BadParams(f"invalid reset key {(i, j)}")
        for i, j in self.cost.switching:
            if not (0 <= i < len(self.modes) and 0 <= j < len(self.modes)):
                raise BadParams(f"invalid switching-cost key {(i, j)}")

    @property
    def state_dim(self) -> int:
        return self.initial_state.size

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    def reset(self, i: int, j: int) -> ResetMap:
        if i == j:
            return _IDENTITY
        try:
            return self.resets[(i, j)]
        except KeyError:
            raise MissingReset(i, j) from None

    def has_reset(self, i: int, j: int) -> bool:
        return i == j or (i, j) in self.resets

    def check_modes(self, modes: Sequence[int]) -> tuple[int, ...]:
        modes = tuple(int(m) for m in modes)
        for m in modes:
            if not 0 <= m < self.n_modes:
                raise BadParams(f"mode index {m} out of range (have {self.n_modes} modes)")
        for a, b in zip(modes[:-1], modes[1:]):
            self.reset(a, b)
        return modes

    def __eq__(self, other):
        if not isinstance(other, HybridSystemSpec):
            return NotImplemented
        return (
            self.modes == other.modes
            and self.resets == other.resets
            and self.cost == other.cost
            and self.horizon == other.horizon
            and np.array_equal(self.initial_state, other.initial_state)
        )

    __hash__ = object.__hash__


def identity_resets(n_modes: int) -> dict[tuple[int, int], ResetMap]:
    return {(i, j): IdentityReset() for i in range(n_modes) for j in range(n_modes) if i != j}


# ---------------------------------------------------------------------------
# Schedules


@dataclass(frozen=True)
class SwitchingSchedule:
    """Admissible switching times 0 <= tau_1 <= ... <= tau_N <= T.

    Index n of ``full`` is tau_n, with tau_0 = 0 and tau_{N+1} = T.
    """

    times: tuple[float, ...]
    horizon: float

    @property
    def N(self) -> int:
        return len(self.times)

    @property
    def interior(self) -> Array:
        return np.array(self.times, dtype=float)

    @property
    def full(self) -> Array:
        return np.concatenate(([0.0], self.times, [self.horizon]))

    def tau(self, n: int) -> float:
        return float(self.full[n])


def validate_schedule(raw: Sequence[float], horizon: float) -> SwitchingSchedule:
    """Return the schedule if ``raw`` lies exactly in T(0, T).

    Raises MonotonicityViolation (1-based index of the first offending entry)
    or OutOfHorizon.
    """
    if not horizon > 0:
        raise BadParams(f"horizon must be positive, got {horizon}")
    times = tuple(float(x) for x in np.asarray(raw, dtype=float).ravel())
    for n, t in enumerate(times, start=1):
        if not np.isfinite(t) or t < 0.0 or t > horizon:
            raise OutOfHorizon(f"switching time tau_{n} = {t} outside [0, {horizon}]", n)
        if n > 1 and t < times[n - 2]:
            raise MonotonicityViolation(
                f"tau_{n} = {t} < tau_{n - 1} = {times[n - 2]}", n
            )
    return SwitchingSchedule(times, float(horizon))


def default_eps(horizon: float) -> float:
    return 1e-9 * horizon


def coincidence_groups(schedule: SwitchingSchedule, eps: float | None = None):
    """Return arrays (a, b) with a[k-1] = a(tau, k), b[k-1] = b(tau, k), k = 1..N.

    Equality tau_m = tau_n is |tau_m - tau_n| <= eps, chained through
    neighbouring indices so that groups are maximal runs including tau_0 = 0
    and tau_{N+1} = T.
    """
    if eps is None:
        eps = default_eps(schedule.horizon)
    full = schedule.full
    N = schedule.N
    a = np.empty(N, dtype=int)
    b = np.empty(N, dtype=int)
    for k in range(1, N + 1):
        m = k
        while m > 0 and full[m] - full[m - 1] <= eps:
            m -= 1
        a[k - 1] = m
        m = k
        while m < N + 1 and full[m + 1] - full[m] <= eps:
            m += 1
        b[k - 1] = m
    return a, b


@dataclass(frozen=True)
class ChainReport:
    triple: tuple[int, int, int]
    defect: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.defect <= self.tolerance


def check_chain_property(system: HybridSystemSpec, triple: tuple[int, int, int],
                         samples, tol: float = 1e-10) -> ChainReport:
    """Max over samples of ||g^{i,j}(z) - g^{k,j}(g^{i,k}(z))||."""
    i, k, j = triple
    g_ij = system.reset(i, j)
    g_ik = system.reset(i, k)
    g_kj = system.reset(k, j)
    defect = 0.0
    for z in np.atleast_2d(np.asarray(samples, dtype=float)):
        defect = max(defect, float(np.linalg.norm(g_ij(z) - g_kj(g_ik(z)))))
    return ChainReport((i, k, j), defect, tol)
