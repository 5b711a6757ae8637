"""
Error vocabulary shared by every package.
Commands map these to exit codes: ConfigError -> 2, InternalInvariantError -> 3.
"""
from __future__ import annotations


class RejectedInputError(ValueError):
    """Dimension mismatch, out-of-range parameter or other precondition violation."""


class AssumptionViolationError(ValueError):
    """A modelling assumption the bounds rely on does not hold (e.g. eps1 >= E[w])."""


class RejectedBatchError(ValueError):
    """A trajectory batch that cannot be reduced (NaN cost)."""


class InternalInvariantError(RuntimeError):
    """A bound the code verifies before reporting turned out false."""


class ConfigError(ValueError):
    """Experiment configuration failed schema validation."""

    def __init__(self, message: str, path: str | None = None) -> None:
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
