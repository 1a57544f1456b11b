"""Structured error classes shared by the library and the CLI.

Every failure the package raises on purpose travels through
:class:`LiodgError` or one of its subclasses. Each instance carries a stable
``code`` string (``ERR_*``), a ``kind`` label, and a ``context`` dict with
string keys so tooling can react without parsing messages.
"""
from __future__ import annotations

from typing import Any, Iterable, Mapping


class LiodgError(Exception):
    """Base class for classified failures."""

    kind: str = "internal"
    default_code: str = "ERR_INTERNAL"

    def __init__(
        self,
        message: str,
        *,
        code: str | None = None,
        context: Mapping[str, Any] | None = None,
    ) -> None:
        super().__init__(message)
        self.message = message
        self.code = code or self.default_code
        self.context: dict[str, Any] = {str(key): value for key, value in (context or {}).items()}

    def __repr__(self) -> str:
        cause = f", caused by {self.__cause__!r}" if self.__cause__ is not None else ""
        return f"{type(self).__name__}({self.code}: {self.message!r}{cause})"

    def to_payload(self) -> dict[str, Any]:
        """Return the JSON-serialisable fields used for error trailers."""
        return {
            "error_code": self.code,
            "error_kind": self.kind,
            "message": self.message,
            "context": {key: _jsonable(value) for key, value in self.context.items()},
        }


class UsageError(LiodgError):
    """Invalid arguments, configuration values, or flag combinations."""

    kind = "usage"
    default_code = "ERR_INVALID_ARGUMENT"


class DimensionError(UsageError):
    """Tensor shapes that do not line up."""

    default_code = "ERR_DIMENSION_MISMATCH"


class ChartError(UsageError):
    """A strict-mode transport between descriptors outside one chart."""

    default_code = "ERR_CHART_VIOLATION"


class NumericError(LiodgError):
    """NaN or Inf reached a tensor or a loss component."""

    kind = "numeric"
    default_code = "ERR_NON_FINITE"


class StateError(LiodgError):
    """An operation needs trained state that is not there."""

    kind = "state"
    default_code = "ERR_UNTRAINED_STATE"


class ArtifactError(LiodgError):
    """Missing, unwritable, or malformed files on disk."""

    kind = "environment"
    default_code = "ERR_MISSING_ARTIFACT"


class ThresholdError(LiodgError):
    """A requested acceptance threshold did not hold."""

    kind = "threshold"
    default_code = "ERR_THRESHOLD_FAILED"


def _jsonable(value: Any) -> Any:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, Iterable):
        return [_jsonable(v) for v in value]
    return str(value)


__all__ = (
    "ArtifactError",
    "ChartError",
    "DimensionError",
    "LiodgError",
    "NumericError",
    "StateError",
    "ThresholdError",
    "UsageError",
)
