"""Exception hierarchy shared by every flowmatch module.

Every error raised by the engine derives from :class:`EngineError` so the
CLI boundary can map failures onto its stable exit-code contract.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine failures."""


class SchemaError(EngineError):
    """Table schemas disagree or a header is malformed."""


class IngestionError(EngineError):
    """Delimited-text input could not be turned into a table."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


class ParseError(EngineError):
    """Transform-program source is not well formed."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class EvalError(EngineError):
    """Expression or unit evaluation failed."""


class UnknownColumnError(EvalError):
    """A referenced column does not exist in the table."""

    def __init__(self, name: str):
        super().__init__(f"unknown column '{name}'")
        self.name = name


class TypeMismatchError(EvalError):
    """Operand kinds do not satisfy an operator's typing rule."""


class ProgramError(EngineError):
    """A program aborted; carries the index of the failing unit."""

    def __init__(self, unit_index: int, cause: EngineError):
        super().__init__(f"unit {unit_index}: {cause}")
        self.unit_index = unit_index
        self.cause = cause


class GraphBuildError(EngineError):
    """Execution trace and table disagree while building a flow graph."""


class CapExceededError(EngineError):
    """A fragment grew past the configured isomorphism node cap."""

    def __init__(self, size: int, cap: int):
        super().__init__(f"fragment has {size} nodes, cap is {cap}")
        self.size = size
        self.cap = cap


class MatchingBackendError(EngineError):
    """Base class for semantic-matcher backend failures."""


class BackendTransportError(MatchingBackendError):
    """The backend could not be reached."""


class BackendTimeoutError(MatchingBackendError):
    """The backend did not answer within the configured timeout."""


class BackendFormatError(MatchingBackendError):
    """The backend answered with something that does not parse or validate."""


class InvalidModelError(EngineError):
    """A statistical model violates the one-DV / at-least-one-IV rule."""


class InsufficientRunsError(EngineError):
    """Not enough runs for the requested metric computation."""


class ValidationError(EngineError):
    """A decision-set document failed invariant checks."""


class ConfigError(EngineError):
    """Evaluation configuration is unusable."""


class ComponentError(EngineError):
    """Wraps an error raised inside one stage of submission matching."""

    def __init__(self, component: str, cause: EngineError):
        super().__init__(f"{component}: {cause}")
        self.component = component
        self.cause = cause


class SessionClosedError(EngineError):
    """An operation was attempted on a closed evaluation session."""
