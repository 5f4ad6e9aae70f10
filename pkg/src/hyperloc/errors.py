"""Exception types shared across the package.

Input-contract violations raise plain ``ValueError`` (or the more specific
``ConfigError`` on the CLI path).  The classes below mark failures of a
numerical procedure rather than of its inputs, so callers can distinguish
"you gave me garbage" from "the computation did not succeed".
"""

from __future__ import annotations


class ConfigError(ValueError):
    """An experiment configuration is malformed; the message names the field."""


class NotConvergedError(RuntimeError):
    """An iterative procedure exhausted its budget without meeting tolerance."""

    def __init__(self, message: str, achieved: float | None = None):
        super().__init__(message)
        self.achieved = achieved


class DegenerateError(RuntimeError):
    """A decomposition is numerically degenerate (e.g. coinciding singular values)."""


class AtEigenvalueError(ZeroDivisionError):
    """A resolvent quantity was requested at (machine precision of) an eigenvalue."""


class NumericalError(RuntimeError):
    """A numerical post-condition failed (residual too large, overflow, ...)."""
