"""Exception types shared across the library.

Solver failures are always reported through one of these types so that
harness code can distinguish a structural problem (origin outside the
convex hull, EL domain violation, singular system) from plain
non-convergence, and never has to catch bare exceptions.
"""

from __future__ import annotations


class GelError(Exception):
    """Base class for all library errors."""


class DimensionError(GelError):
    """Input dimensions do not match the model or parameter layout."""


class HullError(GelError):
    """The origin is not in the convex hull of the moment values.

    Raised by the inner dual solvers when the tilting problem has no
    finite solution.
    """


class ConvergenceError(GelError):
    """An iterative solver exhausted its iteration budget."""


class DomainError(GelError):
    """An EL evaluation left the feasible region 1 - kappa'g > 0."""


class OverflowGuardError(GelError):
    """An exponent exceeded the raw-exp safety cap (700)."""


class SingularMatrixError(GelError):
    """A matrix required to be nonsingular failed its conditioning check."""


class ConfigError(GelError):
    """Experiment configuration is malformed or incomplete."""
