"""Exception types raised across the package."""

from __future__ import annotations


class ReliableError(Exception):
    """Base class for package errors."""


class ArgumentError(ReliableError, ValueError):
    """An argument violates a documented precondition."""


class TensorSizeError(ReliableError, MemoryError):
    """A dense tensor would exceed the configured entry cap."""

    def __init__(self, required: int, allowed: int):
        self.required = required
        self.allowed = allowed
        super().__init__(f"tensor needs {required} entries, cap allows {allowed}")


class BandTooThinError(ReliableError):
    """Rejection sampling from a band would almost never accept."""

    def __init__(self, acceptance: float, t: float):
        self.acceptance = acceptance
        self.t = t
        super().__init__(f"band acceptance probability {acceptance:.3g} at t={t:.4g} is below 1e-6")


class InfeasibleError(ReliableError):
    """The moment-matching solve did not reach a feasible point."""

    def __init__(self, message: str, residuals: dict):
        self.residuals = residuals
        super().__init__(message)


class PartialSetError(ReliableError):
    """A near-orthogonal family could not be completed within budget."""

    def __init__(self, achieved: int, requested: int):
        self.achieved = achieved
        self.requested = requested
        super().__init__(f"only {achieved} of {requested} near-orthogonal vectors found")


class UnsupportedError(ReliableError):
    """The operation has no implementation for this kind of input."""
