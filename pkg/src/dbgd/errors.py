"""Exception types shared across the package."""

from __future__ import annotations


class DbgdError(Exception):
    """Base class for package-specific errors."""


class ConfigurationError(DbgdError):
    """A config file, solver setup, or rule/problem pairing is invalid."""


class CapabilityError(DbgdError):
    """An operation requires a problem capability that is absent.

    ``missing`` names the absent field (``"g_star"`` or ``"hvp_g"``).
    """

    def __init__(self, missing: str, message: str | None = None):
        self.missing = missing
        super().__init__(message or f"problem lacks required capability: {missing}")


class DivergenceError(DbgdError):
    """A solver run produced a non-finite quantity."""

    def __init__(self, iteration: int, what: str):
        self.iteration = iteration
        self.what = what
        super().__init__(f"non-finite {what} at iteration {iteration}")


class EvaluationError(DbgdError):
    """An objective or gradient evaluation returned a non-finite value."""


class InfeasibleSubproblemError(DbgdError):
    """The direction subproblem has an empty feasible set."""
