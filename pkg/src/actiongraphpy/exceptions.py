"""
exceptions.py

Centralized custom exception types for the workbench.

This file defines a small hierarchy of exceptions used across the tensor engine,
environments, agents, training loop, oracles and reporting layer. Each error carries
an optional numeric code and an optional `detail` object (offending shapes, config
field, oracle values) for easier debugging.

Every class also derives from the closest builtin (ValueError / RuntimeError) so
callers that only know the standard library can still catch them.
"""

from typing import Optional, Any


class ActionGraphError(Exception):
    """
    Base class for all library-specific exceptions.

    Attributes
    ----------
    message: str
        Human readable error message.
    code: Optional[int]
        Internal error code if applicable.
    detail: Optional[Any]
        Extra payload (shapes, config key, oracle values) for debugging.
    """

    def __init__(self, message: str, code: Optional[int] = None, detail: Optional[Any] = None):
        self.message = message
        self.code = code
        self.detail = detail
        super().__init__(self.__str__())

    def __str__(self) -> str:
        base = f"[ActionGraphError] {self.message}"
        if self.code is not None:
            base += f" (code={self.code})"
        return base

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__} code={self.code!r} message={self.message!r}>"


# Tensor engine
class ShapeMismatchError(ActionGraphError, ValueError):
    """Operand shapes do not conform to the operation (message names both shapes)."""


class NonFiniteError(ActionGraphError, ValueError):
    """An operation received (or produced) NaN / Inf values."""


class AllMaskedError(ActionGraphError, ValueError):
    """A masked softmax / argmax / sampling call had no available entry."""


class TapeError(ActionGraphError, RuntimeError):
    """
    Misuse of the autodiff tape: empty tape, non-scalar loss, loss recorded on
    another tape, or backward replayed on an already consumed tape.
    """


class MissingGradError(ActionGraphError, RuntimeError):
    """Optimizer step requested for a parameter whose grad slot is empty."""


# Environments / agents
class ArityError(ActionGraphError, ValueError):
    """Joint action length does not match the number of agents, or holds invalid actions."""


class SpecValidationError(ActionGraphError, ValueError):
    """A spec, config or call argument violates an invariant (K <= N, lambda >= 0, epsilon in [0, 1], ...)."""


class KindMismatchError(ActionGraphError, ValueError):
    """An operation was called with an agent kind that does not support it."""


class EmptyBatchError(ActionGraphError, ValueError):
    """An update received an empty batch."""


class EpisodeError(ActionGraphError, RuntimeError):
    """step() called without a fresh reset() (every built-in game ends after one step)."""


class EvaluationError(ActionGraphError, ValueError):
    """Greedy evaluation requested with fewer than one episode."""


# Oracles
class OracleSizeError(ActionGraphError, ValueError):
    """Dense enumeration requested above the supported size."""


class OracleRangeError(ActionGraphError, ValueError):
    """Oracle arguments outside their documented range."""


class OracleCheckError(ActionGraphError, AssertionError):
    """A closed-form identity or bound failed its numerical self-check."""


# Reporting / IO
class ConfigurationError(ActionGraphError, ValueError):
    """
    Raised when a configuration file cannot be parsed or fails validation.

    Attributes
    ----------
    line: Optional[int]
        1-based line of a parse error, when known.
    field: Optional[str]
        Offending key, when known.
    """

    def __init__(self, message: str, *, line: Optional[int] = None, field: Optional[str] = None,
                 code: Optional[int] = None, detail: Optional[Any] = None):
        self.line = line
        self.field = field
        super().__init__(message, code, detail)

    def __str__(self) -> str:
        base = super().__str__()
        if self.field is not None:
            base += f" [field={self.field}]"
        if self.line is not None:
            base += f" [line={self.line}]"
        return base


class CheckpointError(ActionGraphError, ValueError):
    """Raised when reading / writing a parameter checkpoint fails."""


class ExportError(ActionGraphError, RuntimeError):
    """Raised for CSV / heatmap export failures (I/O or malformed content)."""


class BenchmarkError(ActionGraphError, ValueError):
    """Invalid benchmark request (e.g. zero repetitions)."""
