"""
Exception hierarchy for the slicing simulator.

Every error raised by the package derives from SlicingError so callers
(the CLI, matrix runner) can catch one base class and report a diagnostic.
"""

from __future__ import annotations


class SlicingError(Exception):
    """Base exception for simulator, agent and harness failures."""


class ConfigurationError(SlicingError, ValueError):
    """Raised when a configuration value is missing, unknown or inconsistent."""


class ContractViolationError(SlicingError):
    """Raised when an operation is called outside its precondition.

    Examples are allocating on an FN without enough free blocks, feeding a
    network an input of the wrong width, or recording the same time step twice.
    """


class TrainingFaultError(SlicingError):
    """Raised when a gradient step produces a non-finite loss."""

    def __init__(self, message: str, loss: float | None = None) -> None:
        super().__init__(message)
        self.loss = loss


class OracleSizeError(SlicingError):
    """Raised when a tiny-MDP state space is too large to enumerate."""

    def __init__(self, estimate: int, limit: int) -> None:
        super().__init__(
            f"State space estimate {estimate:,} exceeds the oracle limit of {limit:,} states"
        )
        self.estimate = estimate
        self.limit = limit
