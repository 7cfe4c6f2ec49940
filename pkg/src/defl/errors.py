"""Exception types raised across the toolkit."""

from __future__ import annotations


class DeflError(Exception):
    """Base class for all toolkit errors."""


class InvalidClockModelError(DeflError, ValueError):
    pass


class InvalidBatchError(DeflError, ValueError):
    pass


class InvalidLinkError(DeflError, ValueError):
    pass


class EmptyFleetError(DeflError, ValueError):
    pass


class DomainError(DeflError, ValueError):
    """An argument lies outside the domain of a formula."""


class DivergenceError(DomainError):
    """Infinite value produced by a formula (e.g. rounds when alpha is 0)."""


class PlannerError(DeflError):
    pass


class InternalConsistencyError(PlannerError):
    """Analytic derivatives disagree with finite differences."""


class SimulationDiverged(DeflError):
    """Non-finite model state during simulation."""

    def __init__(self, message: str, round_index: int | None = None):
        super().__init__(message)
        self.round_index = round_index


class UnsupportedTaskError(DeflError, ValueError):
    pass


class ConfigError(DeflError):
    pass
