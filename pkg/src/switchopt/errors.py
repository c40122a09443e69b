"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class SwitchingError(Exception):
    """Base class for every error raised by this package."""


class ScheduleError(SwitchingError, ValueError):
    """A switching-time vector is not admissible."""

    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


class MonotonicityViolation(ScheduleError):
    pass


class OutOfHorizon(ScheduleError):
    pass


class ScheduleMismatch(SwitchingError, ValueError):
    pass


class MissingReset(SwitchingError, LookupError):
    def __init__(self, i: int, j: int):
        super().__init__(f"no reset map registered for transition {i} -> {j}")
        self.transition = (i, j)


class MissingJacobian(SwitchingError):
    pass


class ChainPropertyViolation(SwitchingError):
    def __init__(self, triple: tuple[int, int, int], defect: float):
        i, k, j = triple
        super().__init__(
            f"g^{{{i},{j}}} != g^{{{k},{j}}} o g^{{{i},{k}}} (defect {defect:.3e})"
        )
        self.triple = triple
        self.defect = defect


class BlowUp(SwitchingError, ArithmeticError):
    """State norm exceeded the configured bound during integration."""

    def __init__(self, message: str, segment: int | None = None, time: float | None = None):
        super().__init__(message)
        self.segment = segment
        self.time = time


class NonFiniteState(BlowUp):
    pass


class OutOfDomain(SwitchingError, ValueError):
    pass


class UnknownScenario(SwitchingError, KeyError):
    pass


class BadParams(SwitchingError, ValueError):
    pass


class ConfigError(SwitchingError, ValueError):
    """Invalid run configuration; names the offending key and line when known."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = ""
        if key is not None:
            where = f" [key {key!r}" + (f", line {line}" if line is not None else "") + "]"
        super().__init__(message + where)
        self.key = key
        self.line = line
