"""Exceptions raised by fracshrink.

Every numerical failure is reported through one of these classes rather than
returned as a low-accuracy number.
"""


class FracShrinkError(Exception):
    """Base class for all fracshrink errors."""


class ParameterError(FracShrinkError, ValueError):
    """An argument lies outside the domain of the operation."""


class SingularArgumentError(ParameterError):
    """The requested integral diverges at the given arguments (e.g. r = t)."""


class ToleranceError(FracShrinkError):
    """A quadrature did not reach the requested tolerance.

    Attributes
    ----------
    estimate : float
        The error estimate that was actually achieved
    requested : float
        The absolute error that was asked for
    """
    def __init__(self, message, estimate=float("nan"), requested=float("nan")):
        super().__init__(message)
        self.estimate = estimate
        self.requested = requested


class DegenerateConfigurationError(FracShrinkError):
    """Two boundary radii are too close for a trustworthy curvature."""
    def __init__(self, message, pair=None, gap=float("nan")):
        super().__init__(message)
        self.pair = pair
        self.gap = gap


class BracketError(FracShrinkError):
    """A root could not be bracketed by a sign change."""


class ConvergenceError(FracShrinkError):
    """A nonlinear solve did not converge.

    Attributes
    ----------
    best : ndarray or None
        The best iterate found
    residual : float
        Infinity norm of the residual at ``best``
    """
    def __init__(self, message, best=None, residual=float("nan")):
        super().__init__(message)
        self.best = best
        self.residual = residual


class BudgetExhaustedError(ConvergenceError):
    """An iteration or evaluation budget ran out before convergence."""


class StationarityError(FracShrinkError):
    """An operation that needs a stationary point got a non-stationary one."""


class SymmetrizationError(FracShrinkError):
    """The diagonally conjugated Jacobian is not symmetric within tolerance."""
    def __init__(self, message, defect=float("nan")):
        super().__init__(message)
        self.defect = defect


class ConfigError(FracShrinkError):
    """An invalid command line or configuration file."""
