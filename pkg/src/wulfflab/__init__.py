"""Numerical laboratory for mass-constrained anisotropic free-energy minimization."""

__version__ = "0.1.0"

from .errors import (CapabilityError, ConstraintInfeasibleError, DomainError, GeometryError,
                     NonConvergenceError, PreconditionError, WulffLabError)

__all__ = ["CapabilityError", "ConstraintInfeasibleError", "DomainError", "GeometryError",
           "NonConvergenceError", "PreconditionError", "WulffLabError", "__version__"]
