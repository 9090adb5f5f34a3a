"""Exception types raised across the package."""

from __future__ import annotations


class SepmapError(Exception):
    """Base class for all package errors."""


class ModelError(SepmapError, ValueError):
    """Malformed model input (broken reality invariant, bad window, parse failure)."""


class NonRealValue(ModelError):
    pass


class SaddleError(SepmapError):
    """Saddle linearization does not have real eigenvalues of opposite sign."""


class NonConvergent(SepmapError):
    pass


class QuadratureBudgetExceeded(SepmapError):
    pass


class OverlappingZones(SepmapError):
    pass


class SmallDivisor(SepmapError, ZeroDivisionError):
    pass


class OutOfNeighborhood(SepmapError):
    pass


class NoAdmissibleTime(SepmapError):
    pass


class WindowViolation(SepmapError):
    pass


class WrongZone(SepmapError):
    pass


class NonConvergence(SepmapError):
    """Implicit map solver exhausted its iteration budget."""


class ZeroK0(SepmapError, ZeroDivisionError):
    pass


class StepFailure(SepmapError):
    """Integrator step size underflowed."""


class OutOfCollar(SepmapError):
    pass


class NotDefined(SepmapError):
    """The orbit did not return to a fundamental domain before ``t_max``."""


class InsufficientData(SepmapError):
    pass
