"""Exception types shared across the package."""


class WulffLabError(Exception):
    """Base class for all package errors."""


class DomainError(WulffLabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class CapabilityError(WulffLabError):
    """A required evaluator (gradient, Hessian, ...) is not available."""


class GeometryError(WulffLabError):
    """A shape is degenerate or a geometric construction failed."""


class PreconditionError(WulffLabError):
    """An operation was called on input that violates its contract."""


class ConstraintInfeasibleError(WulffLabError):
    """No candidate satisfies the requested constraint."""


class NonConvergenceError(WulffLabError):
    """An iterative method failed to converge.

    The last iterate is attached as ``last_iterate`` so callers can inspect it.
    """

    def __init__(self, message, last_iterate=None, history=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.history = history or []
