"""Exception types shared across the package."""

from __future__ import annotations

__all__ = [
    "ConfigError",
    "SingularLinearizationError",
    "CGBreakdownError",
    "InnerSolveError",
]


class ConfigError(ValueError):
    """A run configuration failed validation; the message names the field."""


class SingularLinearizationError(RuntimeError):
    """The second-order coefficient degenerated to zero with eps_reg = 0."""


class CGBreakdownError(RuntimeError):
    """Conjugate gradients met non-positive curvature.

    With a valid exponent contract this signals insufficient regularization
    rather than a programming error, hence its own type.
    """


class InnerSolveError(RuntimeError):
    """An inner state solve failed to converge where a converged state is required."""
