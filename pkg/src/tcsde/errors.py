"""Exception hierarchy shared by all tcsde modules."""

from __future__ import annotations


class TcsdeError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(TcsdeError, ValueError):
    """An argument is outside its admissible range."""


class SchemeGateError(ParameterError):
    """The step size violates a scheme's admissibility condition."""

    def __init__(self, message: str, max_step: float):
        super().__init__(message)
        self.max_step = max_step


class ExtensionError(TcsdeError):
    """A subordinator path is too short for the requested operation."""


class NumericalError(TcsdeError):
    """A numerical procedure failed (nonconvergence, blow-up)."""


class DivergenceError(NumericalError):
    def __init__(self, message: str, step_index: int | None = None):
        super().__init__(message)
        self.step_index = step_index


class NewtonConvergenceError(NumericalError):
    """Newton's method did not reach the residual tolerance."""

    def __init__(self, message: str, last_iterate, residual: float, step_index: int | None = None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual
        self.step_index = step_index


class ExperimentError(NumericalError):
    """Too many paths failed for a (scheme, step) pair."""


class DegenerateFitError(TcsdeError, ValueError):
    """A rate fit was requested on data containing zero errors or too few points."""
