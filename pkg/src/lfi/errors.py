"""Exception types raised across the package."""


class LfiError(Exception):
    """Base class for package errors."""


class DomainError(LfiError, ValueError):
    """An argument lies outside the domain of an operation."""


class ShapeError(DomainError):
    """Array dimensions do not agree with what a network expects."""


class StateError(LfiError):
    """Cached state is inconsistent with the requested computation."""


class NumericError(LfiError, ArithmeticError):
    """A non-finite value appeared where a finite one is required."""

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = context


class SimulationError(LfiError):
    """A simulator produced a non-finite trajectory."""

    def __init__(self, message, theta=None):
        super().__init__(message)
        self.theta = theta


class ConfigError(LfiError, ValueError):
    """An invalid or inconsistent configuration."""
