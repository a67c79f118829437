"""Exception hierarchy.

Everything the library raises on bad data or a misbehaving model derives
from :class:`PdmpError`; the CLI maps these to exit code 2.
"""


class PdmpError(Exception):
    pass


class DomainError(PdmpError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class ExplosionError(PdmpError):
    """Too many jumps on a bounded horizon."""


class QuadratureError(PdmpError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class RateBoundError(PdmpError):
    """Thinning was requested without a bound, or the bound was exceeded."""


class InvariantViolation(PdmpError):
    """A model invariant (e.g. invariance of the compact set K) failed at runtime."""


class ModelError(PdmpError, ValueError):
    """A model definition is inconsistent (reducible rates, bad parameters...)."""


class InsufficientDataError(PdmpError):
    """Not enough observations for an estimator."""


class PathError(PdmpError):
    """Wraps an error raised while simulating one Monte Carlo path."""

    def __init__(self, index, error):
        super().__init__(f"path {index}: {type(error).__name__}: {error}")
        self.index = index
        self.error = error
