"""Process-wide runtime policy: log routing and error trailers.

The policy is a single mutable record. :func:`configure_policy` applies
explicit overrides, :func:`configure_policy_from_env` refreshes it from
``LIODG_*`` environment variables, and :func:`policy_snapshot` returns a copy
for inspection. Configuring the policy (re)installs exactly one handler on the
``neurallio`` logger.
"""
from __future__ import annotations

import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any, TextIO

from .errors import LiodgError, UsageError

ENV_LOG_LEVEL = "LIODG_LOG_LEVEL"
ENV_LOG_FILE = "LIODG_LOG_FILE"
ENV_JSON_ERRORS = "LIODG_JSON_ERRORS"

LOGGER_NAME = "neurallio"
_LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
_RECORD_ATTRIBUTES = frozenset(logging.makeLogRecord({}).__dict__) | {"message", "asctime", "taskName"}

_UNSET: Any = object()


@dataclass(frozen=True)
class RunPolicy:
    log_level: str = "warning"
    log_file: str = ""
    json_errors: bool = False


class KeyValueFormatter(logging.Formatter):
    """Render the ``extra=`` fields of a record as ``key=value`` pairs after the message."""

    def format(self, record: logging.LogRecord) -> str:
        line = super().format(record)
        pairs = [
            f"{key}={_render_value(value)}"
            for key, value in record.__dict__.items()
            if key not in _RECORD_ATTRIBUTES and not key.startswith("_")
        ]
        if not pairs:
            return line
        head, newline, rest = line.partition("\n")
        return f"{head} {' '.join(pairs)}{newline}{rest}"


def _render_value(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


_policy = RunPolicy()
_handler: logging.Handler | None = None


def configure_policy(
    *,
    log_level: str | None = _UNSET,
    log_file: str | os.PathLike[str] | None = _UNSET,
    json_errors: bool | None = _UNSET,
) -> RunPolicy:
    """Apply overrides to the active policy and reinstall the log handler.

    Arguments left unset keep their current value. An empty ``log_level``
    restores the default level and an empty ``log_file`` routes logs back to
    stderr.
    """
    global _policy
    updates: dict[str, Any] = {}
    if log_level is not _UNSET and log_level is not None:
        updates["log_level"] = _normalize_level(log_level)
    if log_file is not _UNSET and log_file is not None:
        updates["log_file"] = os.fspath(log_file)
    if json_errors is not _UNSET and json_errors is not None:
        updates["json_errors"] = bool(json_errors)
    _policy = replace(_policy, **updates)
    _install_handler(_policy)
    return _policy


def configure_policy_from_env() -> RunPolicy:
    """Refresh the policy from ``LIODG_LOG_LEVEL``, ``LIODG_LOG_FILE``, ``LIODG_JSON_ERRORS``."""
    overrides: dict[str, Any] = {}
    level = os.getenv(ENV_LOG_LEVEL)
    if level:
        overrides["log_level"] = level
    log_file = os.getenv(ENV_LOG_FILE)
    if log_file:
        overrides["log_file"] = log_file
    raw_json = os.getenv(ENV_JSON_ERRORS)
    if raw_json is not None:
        overrides["json_errors"] = raw_json.strip().lower() in ("1", "true")
    return configure_policy(**overrides)


def policy_snapshot() -> dict[str, Any]:
    """Return the active policy as a plain dict."""
    return asdict(_policy)


def emit_error_trailer(error: LiodgError, *, run_id: str | None, stream: TextIO | None = None) -> None:
    """Mirror ``error`` as one JSON line on stderr when ``json_errors`` is on."""
    if not _policy.json_errors:
        return
    payload = {"run_id": run_id, **error.to_payload()}
    target = stream if stream is not None else sys.stderr
    target.write(json.dumps(payload, sort_keys=True) + "\n")


def _normalize_level(value: str) -> str:
    if value == "":
        return RunPolicy.log_level
    normalized = value.strip().lower()
    if logging.getLevelName(normalized.upper()) == f"Level {normalized.upper()}":
        raise UsageError(
            f"unknown log level '{value}'",
            context={"log_level": value},
        )
    return normalized


def _install_handler(policy: RunPolicy) -> None:
    global _handler
    logger = logging.getLogger(LOGGER_NAME)
    if _handler is not None:
        logger.removeHandler(_handler)
        _handler.close()
    if policy.log_file:
        path = Path(policy.log_file).expanduser()
        path.parent.mkdir(parents=True, exist_ok=True)
        _handler = logging.FileHandler(path, encoding="utf-8")
    else:
        _handler = logging.StreamHandler(sys.stderr)
    _handler.setFormatter(KeyValueFormatter(_LOG_FORMAT))
    logger.addHandler(_handler)
    logger.setLevel(policy.log_level.upper())


__all__ = (
    "ENV_JSON_ERRORS",
    "ENV_LOG_FILE",
    "ENV_LOG_LEVEL",
    "KeyValueFormatter",
    "RunPolicy",
    "configure_policy",
    "configure_policy_from_env",
    "emit_error_trailer",
    "policy_snapshot",
)
