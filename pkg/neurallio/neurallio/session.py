"""Run session helpers.

A run owns one output directory. :func:`start_run` validates and creates the
directory, writes the resolved config next to the artefacts, and returns a
:class:`RunSession` whose writers never leave a partial file behind.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import tempfile
import uuid
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

from .config import ExperimentConfig
from .errors import ArtifactError
from .formats import format_float

log = logging.getLogger(__name__)

RESOLVED_CONFIG = "config.resolved.json"
HASH_PREFIX = "# config_hash="
ERR_UNWRITABLE_PATH = "ERR_UNWRITABLE_PATH"

_active_run: Optional["RunSession"] = None


class RunSession:
    """Handle for one command's output directory.

    Every CSV written through the session starts with a ``# config_hash=``
    line so a results file can be traced back to the config that made it.
    """

    out_dir: Path
    config: ExperimentConfig
    command: str
    run_id: str

    def __init__(self, out_dir: Path, config: ExperimentConfig, command: str, run_id: str) -> None:
        self.out_dir = out_dir
        self.config = config
        self.command = command
        self.run_id = run_id
        self.config_hash = config.config_hash()

    def path(self, *parts: str) -> Path:
        return self.out_dir.joinpath(*parts)

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        """Write ``rows`` as RFC-4180 CSV under the hash comment and header."""
        target = write_csv(self.path(name), header, rows, config_hash=self.config_hash)
        log.info("wrote csv", extra={"run_id": self.run_id, "path": str(target)})
        return target

    def write_text(self, name: str, text: str) -> Path:
        return atomic_write(self.path(name), text)

    def write_json(self, name: str, payload: Any) -> Path:
        return atomic_write(self.path(name), json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def finish(self) -> None:
        global _active_run
        if _active_run is self:
            _active_run = None

    def __enter__(self) -> "RunSession":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        # A failed run stays active so the error trailer can name it.
        if exc_type is None:
            self.finish()


def start_run(out_dir: str | Path, config: ExperimentConfig, command: str) -> RunSession:
    """Create ``out_dir``, write ``config.resolved.json`` and make the run active.

    Raises
    ------
    ArtifactError
        When ``out_dir`` exists and is not a directory, or cannot be created.
    """
    global _active_run
    path = _validate_out_dir(Path(out_dir))
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ArtifactError(
            f"cannot create output directory '{path}': {exc}",
            code=ERR_UNWRITABLE_PATH,
            context={"path": str(path)},
        ) from exc
    resolved = config if config.output_dir == str(path) else config.with_overrides(output_dir=path)
    session = RunSession(path, resolved, command, uuid.uuid4().hex[:12])
    session.write_text(RESOLVED_CONFIG, resolved.canonical_json() + "\n")
    _active_run = session
    log.info(
        "run started",
        extra={"run_id": session.run_id, "command": command, "out_dir": str(path), "config_hash": session.config_hash},
    )
    return session


def active_run() -> RunSession | None:
    """The session started most recently and not yet finished."""
    return _active_run


def format_cell(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format_float(value)
    if value is None:
        return ""
    return str(value)


def write_csv(
    path: Path,
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
    *,
    config_hash: str,
) -> Path:
    buffer = io.StringIO(newline="")
    buffer.write(f"{HASH_PREFIX}{config_hash}\r\n")
    writer = csv.writer(buffer)
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_cell(value) for value in row])
    return atomic_write(path, buffer.getvalue())


def atomic_write(path: Path, text: str) -> Path:
    """Write ``text`` to a temporary sibling and rename it over ``path``."""
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
                handle.write(text)
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
    except OSError as exc:
        raise ArtifactError(
            f"cannot write '{path}': {exc}",
            code=ERR_UNWRITABLE_PATH,
            context={"path": str(path)},
        ) from exc
    return path


def _validate_out_dir(path: Path) -> Path:
    path = path.expanduser()
    if path.exists() and not path.is_dir():
        raise ArtifactError(
            "output path exists and is not a directory",
            code=ERR_UNWRITABLE_PATH,
            context={"path": str(path)},
        )
    return path


__all__ = (
    "HASH_PREFIX",
    "RESOLVED_CONFIG",
    "RunSession",
    "active_run",
    "atomic_write",
    "format_cell",
    "start_run",
    "write_csv",
)
