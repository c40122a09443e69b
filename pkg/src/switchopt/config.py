"""INI run configuration: parsing, validation and emission.

Layout::

    [run]            modes, times, seed
    [scenario]       name plus ScenarioParams fields (alternative to inline)
    [system]         horizon, initial_state
    [mode.N]         generator, generator_shape, nonlinearity, <params>
    [reset.I.J]      kind, <params>
    [cost.running]   kind, <params>
    [cost.switch.I.J]
    [cost.terminal]
    [solver]         h_max, stepper, stiff_threshold, blowup_factor
    [optimizer]      OptimizerOptions fields
    [check]          fd_step, var_tol, fd_tol, abs_tol
    [scan]           times, grid_size, candidates

Arrays are written as number lists; ``<key>_shape`` gives the dimensions
of anything that is not a scalar.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, fields, replace
from typing import Any

import numpy as np

from .errors import BadParams, ConfigError, SwitchingError
from .model import (
    COSTS,
    NONLINEARITIES,
    RESETS,
    CostSpec,
    HybridSystemSpec,
    ModeSpec,
    SwitchingSchedule,
    ZeroCost,
    validate_schedule,
)
from .optimize import OptimizerOptions
from .scenarios import ScenarioParams, build_scenario
from .steppers import SolverOptions


@dataclass(frozen=True)
class CheckOptions:
    """Tolerances of the gradient cross-check.

    fd_step ``None`` means 1e-5 T.  Components with |g| below ``abs_floor``
    are judged on the absolute error ``abs_tol`` instead.
    """

    fd_step: float | None = None
    var_tol: float = 1e-4
    fd_tol: float = 1e-3
    abs_tol: float = 1e-6
    abs_floor: float = 1e-3


@dataclass(frozen=True)
class ScanOptions:
    times: tuple[float, ...] | None = None
    grid_size: int = 16
    candidates: tuple[int, ...] | None = None


@dataclass(frozen=True)
class RunConfig:
    system: HybridSystemSpec
    modes: tuple[int, ...]
    schedule: SwitchingSchedule
    scenario: ScenarioParams | None = None
    solver: SolverOptions = field(default_factory=SolverOptions)
    optimizer: OptimizerOptions = field(default_factory=OptimizerOptions)
    check: CheckOptions = field(default_factory=CheckOptions)
    scan: ScanOptions = field(default_factory=ScanOptions)
    seed: int = 0

    def scan_times(self) -> np.ndarray:
        if self.scan.times is not None:
            return np.array(self.scan.times, dtype=float)
        return np.linspace(0.0, self.system.horizon, self.scan.grid_size, endpoint=False)

    def scan_candidates(self) -> tuple[int, ...]:
        if self.scan.candidates is not None:
            return self.scan.candidates
        return tuple(range(self.system.n_modes))


# ---------------------------------------------------------------------------
# Value parsing


_SPLIT = re.compile(r"[,\s]+")


def _numbers(text: str) -> list[float]:
    parts = [p for p in _SPLIT.split(text.strip()) if p]
    return [float(p) for p in parts]


def _ints(text: str) -> list[int]:
    parts = [p for p in _SPLIT.split(text.strip()) if p]
    return [int(p) for p in parts]


def _fmt(x: float) -> str:
    return repr(float(x))


def _fmt_list(values) -> str:
    return " ".join(_fmt(v) for v in np.asarray(values, dtype=float).ravel())


class _Section:
    """Key access that records consumption so that leftovers can be rejected."""

    def __init__(self, cfg: "_Parser", name: str):
        self.cfg = cfg
        self.name = name
        self.items = dict(cfg.parser.items(name)) if cfg.parser.has_section(name) else {}
        self.used: set[str] = set()

    def has(self, key: str) -> bool:
        return key in self.items

    def raw(self, key: str, default=None):
        if key not in self.items:
            return default
        self.used.add(key)
        return self.items[key]

    def error(self, key: str, message: str) -> ConfigError:
        return ConfigError(f"[{self.name}] {message}", key, self.cfg.line_of(self.name, key))

    def get(self, key: str, convert, default=None):
        text = self.raw(key)
        if text is None:
            return default
        try:
            return convert(text)
        except (ValueError, TypeError) as exc:
            raise self.error(key, f"cannot parse {text!r}: {exc}") from None

    def require(self, key: str, convert):
        if key not in self.items:
            raise ConfigError(f"[{self.name}] missing required key", key,
                              self.cfg.line_of(self.name))
        return self.get(key, convert)

    def array(self, key: str, kind: str = "array"):
        """Parse ``key`` with optional ``key_shape``; ``kind`` as in the registry schemas."""
        values = self.get(key, _numbers)
        if values is None:
            return None
        shape = self.get(key + "_shape", _ints)
        try:
            if shape is not None:
                arr = np.array(values).reshape(shape)
            elif kind == "matrix":
                n = int(round(np.sqrt(len(values))))
                if n * n != len(values):
                    raise ValueError("matrix needs a _shape key unless it is square")
                arr = np.array(values).reshape(n, n)
            elif kind == "scalar" or (kind == "array" and len(values) == 1):
                if len(values) != 1:
                    raise ValueError("expected a single number")
                arr = np.array(values[0])
            else:
                arr = np.array(values)
        except ValueError as exc:
            raise self.error(key, str(exc)) from None
        if kind == "scalar" and arr.ndim != 0:
            raise self.error(key, "expected a scalar")
        if kind == "vector" and arr.ndim != 1:
            raise self.error(key, "expected a vector")
        if kind == "matrix" and arr.ndim != 2:
            raise self.error(key, "expected a matrix")
        return arr

    def finish(self) -> None:
        for key in self.items:
            if key not in self.used:
                raise self.error(key, "unknown key")


class _Parser:
    def __init__(self, text: str, source: str = "<config>"):
        self.text = text
        self.source = source
        self.parser = configparser.ConfigParser(
            interpolation=None, default_section="\0none", inline_comment_prefixes=("#", ";")
        )
        self.parser.optionxform = str  # type: ignore[assignment]
        try:
            self.parser.read_string(text, source=source)
        except configparser.Error as exc:
            line = getattr(exc, "lineno", None)
            raise ConfigError(f"malformed config: {exc.message if hasattr(exc, 'message') else exc}",
                              None, line) from None
        self.lines = text.splitlines()

    def line_of(self, section: str, key: str | None = None) -> int | None:
        current = None
        header = re.compile(r"^\s*\[([^\]]+)\]")
        for number, line in enumerate(self.lines, start=1):
            m = header.match(line)
            if m:
                current = m.group(1).strip()
                if key is None and current == section:
                    return number
                continue
            if current == section and key is not None:
                stripped = line.strip()
                if re.match(rf"^{re.escape(key)}\s*[=:]", stripped):
                    return number
        return None

    def section(self, name: str) -> _Section:
        return _Section(self, name)


# ---------------------------------------------------------------------------
# Registry objects


def _registered(sec: _Section, registry: dict, kind_key: str, default_kind: str | None,
                reserved: tuple[str, ...] = ()):
    kind = sec.get(kind_key, str, default_kind)
    if kind is None:
        raise ConfigError(f"[{sec.name}] missing required key", kind_key, sec.cfg.line_of(sec.name))
    kind = kind.strip()
    if kind not in registry:
        raise sec.error(kind_key, f"unknown kind {kind!r}; choose from {sorted(registry)}")
    cls = registry[kind]
    kwargs = {}
    for name, typ in cls.schema.items():
        if name in reserved:
            continue
        value = sec.array(name, typ)
        if value is not None:
            kwargs[name] = float(value) if typ == "scalar" else value
    try:
        return cls(**kwargs)
    except (BadParams, TypeError, ValueError) as exc:
        raise sec.error(kind_key, f"invalid parameters for {kind!r}: {exc}") from None


def _indices(name: str, prefix: str, count: int) -> tuple[int, ...] | None:
    parts = name.split(".")
    head = prefix.split(".")
    if parts[: len(head)] != head or len(parts) != len(head) + count:
        return None
    try:
        return tuple(int(p) for p in parts[len(head):])
    except ValueError:
        return None


_KNOWN_SECTIONS = ("run", "scenario", "system", "cost.running", "cost.terminal", "solver",
                   "optimizer", "check", "scan")


def _inline_system(cfg: _Parser) -> HybridSystemSpec:
    sys_sec = cfg.section("system")
    if not cfg.parser.has_section("system"):
        raise ConfigError("either [scenario] or [system] is required", "system", None)
    horizon = sys_sec.require("horizon", float)
    z0 = sys_sec.array("initial_state", "vector")
    if z0 is None:
        raise ConfigError("[system] missing required key", "initial_state",
                          cfg.line_of("system"))
    sys_sec.finish()
    modes: dict[int, ModeSpec] = {}
    resets = {}
    switching = {}
    for name in cfg.parser.sections():
        if (idx := _indices(name, "mode", 1)) is not None:
            sec = cfg.section(name)
            A = sec.array("generator", "matrix")
            if A is None:
                raise ConfigError(f"[{name}] missing required key", "generator", cfg.line_of(name))
            f = _registered(sec, NONLINEARITIES, "nonlinearity", "zero")
            sec.finish()
            try:
                modes[idx[0]] = ModeSpec(A, f)
            except BadParams as exc:
                raise sec.error("generator", str(exc)) from None
        elif (idx := _indices(name, "reset", 2)) is not None:
            sec = cfg.section(name)
            resets[idx] = _registered(sec, RESETS, "kind", None)
            sec.finish()
        elif (idx := _indices(name, "cost.switch", 2)) is not None:
            sec = cfg.section(name)
            switching[idx] = _registered(sec, COSTS, "kind", None)
            sec.finish()
        elif name not in _KNOWN_SECTIONS:
            raise ConfigError(f"unknown section [{name}]", name, cfg.line_of(name))
    if sorted(modes) != list(range(len(modes))) or not modes:
        raise ConfigError("mode sections must be numbered 0..M-1", "mode", None)
    costs = {}
    for part in ("running", "terminal"):
        name = f"cost.{part}"
        if cfg.parser.has_section(name):
            sec = cfg.section(name)
            costs[part] = _registered(sec, COSTS, "kind", None)
            sec.finish()
        else:
            costs[part] = ZeroCost()
    try:
        return HybridSystemSpec(
            tuple(modes[i] for i in range(len(modes))), resets,
            CostSpec(costs["running"], switching, costs["terminal"]), horizon, z0,
        )
    except BadParams as exc:
        raise ConfigError(f"invalid system: {exc}", "system", cfg.line_of("system")) from None


_SCENARIO_TYPES: dict[str, Any] = {
    "name": str, "horizon": float, "rates": "floats", "initial": float, "reset_scale": float,
    "split": str, "delay": float, "chain": int, "direct": "floats", "delayed": "floats",
    "history": float, "grid": int, "length": float, "diffusivity": float, "growth": float,
    "profile": str,
}


def _scenario_params(sec: _Section) -> ScenarioParams:
    kwargs = {}
    for key in list(sec.items):
        if key not in _SCENARIO_TYPES:
            raise sec.error(key, "unknown key")
        typ = _SCENARIO_TYPES[key]
        if typ == "floats":
            kwargs[key] = tuple(sec.get(key, _numbers))
        else:
            kwargs[key] = sec.get(key, lambda s, t=typ: t(s.strip()))
    if "name" not in kwargs:
        raise ConfigError("[scenario] missing required key", "name", sec.cfg.line_of("scenario"))
    return ScenarioParams(**kwargs)


def _options(sec: _Section, cls, types: dict[str, Any]):
    kwargs = {}
    for key in list(sec.items):
        if key not in types:
            raise sec.error(key, "unknown key")
        typ = types[key]
        if typ == "floats":
            kwargs[key] = tuple(sec.get(key, _numbers))
        elif typ == "ints":
            kwargs[key] = tuple(sec.get(key, _ints))
        else:
            kwargs[key] = sec.get(key, lambda s, t=typ: t(s.strip()))
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        key = next(iter(kwargs), None)
        raise ConfigError(f"[{sec.name}] {exc}", key, sec.cfg.line_of(sec.name, key)) from None


_SOLVER_TYPES = {"h_max": float, "stepper": str, "stiff_threshold": float, "blowup_factor": float}
_OPTIMIZER_TYPES = {
    "max_iters": int, "sigma": float, "beta": float, "initial_step": float, "kkt_tol": float,
    "insertion_threshold": float, "grid_size": int, "max_backtracks": int,
    "max_insertions": int, "removal_tol": float,
}
_CHECK_TYPES = {"fd_step": float, "var_tol": float, "fd_tol": float, "abs_tol": float,
                "abs_floor": float}
_SCAN_TYPES = {"times": "floats", "grid_size": int, "candidates": "ints"}


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse and validate a run configuration; raises ConfigError."""
    cfg = _Parser(text, source)
    run = cfg.section("run")
    scenario = None
    if cfg.parser.has_section("scenario"):
        inline = [s for s in cfg.parser.sections()
                  if s == "system" or s.startswith(("mode.", "reset.", "cost."))]
        if inline:
            raise ConfigError("[scenario] cannot be combined with inline system sections",
                              inline[0], cfg.line_of(inline[0]))
        sec = cfg.section("scenario")
        scenario = _scenario_params(sec)
        try:
            built = build_scenario(scenario)
        except SwitchingError as exc:
            raise ConfigError(f"invalid scenario: {exc}", "name",
                              cfg.line_of("scenario", "name")) from None
        for name in cfg.parser.sections():
            if name not in _KNOWN_SECTIONS:
                raise ConfigError(f"unknown section [{name}]", name, cfg.line_of(name))
        system = built.system
        modes, times = built.modes, built.schedule.times
    else:
        system = _inline_system(cfg)
        modes, times = (0,), ()
    modes = run.get("modes", _ints, list(modes))
    times = run.get("times", _numbers, list(times))
    seed = run.get("seed", int, 0)
    run.finish()
    try:
        schedule = validate_schedule(times, system.horizon)
        modes = system.check_modes(modes)
    except SwitchingError as exc:
        key = "times" if "tau" in str(exc) else "modes"
        raise ConfigError(f"[run] {exc}", key, cfg.line_of("run", key)) from None
    if len(modes) != schedule.N + 1:
        raise ConfigError(f"[run] {len(modes)} modes need {len(modes) - 1} switching times, "
                          f"got {schedule.N}", "times", cfg.line_of("run", "times"))
    solver = _options(cfg.section("solver"), SolverOptions, _SOLVER_TYPES)
    optimizer = _options(cfg.section("optimizer"), OptimizerOptions, _OPTIMIZER_TYPES)
    check = _options(cfg.section("check"), CheckOptions, _CHECK_TYPES)
    scan = _options(cfg.section("scan"), ScanOptions, _SCAN_TYPES)
    return RunConfig(system, tuple(modes), schedule, scenario, solver, optimizer, check, scan,
                     seed)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", None, None) from None
    return parse_config(text, str(path))


# ---------------------------------------------------------------------------
# Emission


def _emit_params(lines: list[str], obj) -> None:
    for name, value in obj.params().items():
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 0:
            lines.append(f"{name} = {_fmt(arr)}")
        else:
            lines.append(f"{name} = {_fmt_list(arr)}")
            lines.append(f"{name}_shape = {' '.join(str(d) for d in arr.shape)}")


def _emit_options(lines: list[str], section: str, obj, default) -> None:
    body = []
    for f in fields(obj):
        value = getattr(obj, f.name)
        if value == getattr(default, f.name) or value is None:
            continue
        if isinstance(value, tuple):
            body.append(f"{f.name} = " + " ".join(str(v) if isinstance(v, int) else _fmt(v)
                                                  for v in value))
        elif isinstance(value, float):
            body.append(f"{f.name} = {_fmt(value)}")
        else:
            body.append(f"{f.name} = {value}")
    if body:
        lines.append(f"[{section}]")
        lines.extend(body)
        lines.append("")


def emit_config(config: RunConfig, inline: bool | None = None) -> str:
    """Write a configuration that parses back to an equal RunConfig.

    With ``inline`` (default when no scenario is attached) the full system
    is written out section by section instead of the scenario reference.
    """
    if inline is None:
        inline = config.scenario is None
    lines = ["[run]",
             "modes = " + " ".join(str(m) for m in config.modes),
             "times = " + _fmt_list(config.schedule.times),
             f"seed = {config.seed}", ""]
    if not inline:
        lines.append("[scenario]")
        default = ScenarioParams(config.scenario.name)
        for f in fields(config.scenario):
            if f.name in ("modes", "times"):
                continue
            value = getattr(config.scenario, f.name)
            if f.name != "name" and value == getattr(default, f.name):
                continue
            if isinstance(value, tuple):
                lines.append(f"{f.name} = {_fmt_list(value)}")
            elif isinstance(value, float):
                lines.append(f"{f.name} = {_fmt(value)}")
            else:
                lines.append(f"{f.name} = {value}")
        lines.append("")
    else:
        system = config.system
        lines += ["[system]", f"horizon = {_fmt(system.horizon)}",
                  f"initial_state = {_fmt_list(system.initial_state)}", ""]
        for idx, mode in enumerate(system.modes):
            A = mode.generator
            lines += [f"[mode.{idx}]", f"generator = {_fmt_list(A)}",
                      f"generator_shape = {A.shape[0]} {A.shape[1]}",
                      f"nonlinearity = {mode.nonlinearity.kind}"]
            _emit_params(lines, mode.nonlinearity)
            lines.append("")
        for (i, j), reset in sorted(system.resets.items()):
            lines += [f"[reset.{i}.{j}]", f"kind = {reset.kind}"]
            _emit_params(lines, reset)
            lines.append("")
        cost = system.cost
        for part, term in (("running", cost.running), ("terminal", cost.terminal)):
            lines += [f"[cost.{part}]", f"kind = {term.kind}"]
            _emit_params(lines, term)
            lines.append("")
        for (i, j), term in sorted(cost.switching.items()):
            lines += [f"[cost.switch.{i}.{j}]", f"kind = {term.kind}"]
            _emit_params(lines, term)
            lines.append("")
    _emit_options(lines, "solver", config.solver, SolverOptions())
    _emit_options(lines, "optimizer", config.optimizer, OptimizerOptions())
    _emit_options(lines, "check", config.check, CheckOptions())
    _emit_options(lines, "scan", config.scan, ScanOptions())
    return "\n".join(lines).rstrip() + "\n"


def with_overrides(config: RunConfig, h_max=None, fd_step=None, kkt_tol=None,
                   seed=None) -> RunConfig:
    """Apply command-line overrides."""
    if h_max is not None:
        config = replace(config, solver=replace(config.solver, h_max=h_max))
    if fd_step is not None:
        config = replace(config, check=replace(config.check, fd_step=fd_step))
    if kkt_tol is not None:
        config = replace(config, optimizer=replace(config.optimizer, kkt_tol=kkt_tol))
    if seed is not None:
        config = replace(config, seed=seed)
    return config


__all__ = [
    "CheckOptions",
    "RunConfig",
    "ScanOptions",
    "emit_config",
    "load_config",
    "parse_config",
    "with_overrides",
]
