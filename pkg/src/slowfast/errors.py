"""Exception hierarchy shared across the package.

Validation problems (bad parameters, malformed scenarios) and numerical
failures (Newton divergence, singular algebraic constraints) are kept on
separate branches so callers, in particular the CLI, can map them to
distinct exit codes.
"""
from __future__ import annotations


class SlowFastError(Exception):
    """Base class for all package errors."""


class ParameterError(SlowFastError, ValueError):
    """A parameter violates its documented domain (e.g. T_p must be > 0)."""


class DomainError(SlowFastError, ValueError):
    """A function argument lies outside the mathematical domain."""


class DegenerateNormalizationError(SlowFastError, ValueError):
    """Transform of a nonzero latent value with zero noise amplitude."""


class ValidationError(SlowFastError, ValueError):
    """A scenario or file failed validation.  Carries every detected problem."""

    def __init__(self, message, errors=None):
        self.errors = [message] if errors is None else list(errors)
        super().__init__(message)


class NumericalError(SlowFastError, RuntimeError):
    """Base class for runtime numerical failures."""


class ConvergenceError(NumericalError):
    """An iterative solve did not reach tolerance."""

    def __init__(self, message, best_residual=None):
        self.best_residual = best_residual
        super().__init__(message)


class SingularityError(NumericalError):
    """Algebraic constraint Jacobian is numerically singular.

    The simulation state at detection is attached for diagnosis.
    """

    def __init__(self, message, state=None, det=None):
        self.state = state
        self.det = det
        super().__init__(message)


class EstimationError(SlowFastError, ValueError):
    """Not enough data for the requested statistical estimate."""


class DegenerateFitError(SlowFastError, ValueError):
    """A scaling fit was requested on degenerate data (zeros, <3 points)."""


class EnsembleError(NumericalError):
    """Too many ensemble paths failed for the statistics to be trusted."""

    def __init__(self, message, failures=()):
        self.failures = list(failures)
        super().__init__(message)
