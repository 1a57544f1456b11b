"""Readers for the CSV files the commands write.

A results file starts with a ``# config_hash=<hex>`` comment line, then a
header row, then data rows. These helpers are shared by the sweep commands,
the artefact loaders and ``scripts/render_plots.py``, which rebuilds every
figure from CSV alone.
"""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

from .errors import ArtifactError
from .session import HASH_PREFIX

ERR_MALFORMED_ARTIFACT = "ERR_MALFORMED_ARTIFACT"


@dataclass(frozen=True)
class ResultsTable:
    """Parsed contents of one results CSV."""

    path: Path
    config_hash: str
    header: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]

    def __len__(self) -> int:
        return len(self.rows)

    def index(self, column: str) -> int:
        try:
            return self.header.index(column)
        except ValueError:
            raise ArtifactError(
                f"{self.path}: no column named '{column}'",
                code=ERR_MALFORMED_ARTIFACT,
                context={"path": str(self.path), "column": column, "header": list(self.header)},
            ) from None

    def column(self, name: str) -> list[str]:
        position = self.index(name)
        return [row[position] for row in self.rows]

    def floats(self, name: str) -> list[float]:
        values = []
        for line, raw in enumerate(self.column(name), start=3):
            try:
                values.append(float(raw))
            except ValueError:
                raise ArtifactError(
                    f"{self.path}:{line}: column '{name}' is not numeric",
                    code=ERR_MALFORMED_ARTIFACT,
                    context={"path": str(self.path), "line": line, "value": raw},
                ) from None
        return values

    def records(self) -> Iterator[dict[str, str]]:
        for row in self.rows:
            yield dict(zip(self.header, row))


@dataclass(frozen=True)
class GroupSummary:
    key: tuple[str, ...]
    mean: float
    std: float
    count: int


def load_results(path: Path) -> ResultsTable:
    """Load and validate a results CSV."""
    try:
        raw_text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ArtifactError(f"results file not found: {path}", context={"path": str(path)}) from exc
    except OSError as exc:  # pragma: no cover - permission problems
        raise ArtifactError(
            f"unable to read results file: {path}",
            code=ERR_MALFORMED_ARTIFACT,
            context={"path": str(path)},
        ) from exc

    lines = raw_text.splitlines()
    if not lines or not lines[0].startswith(HASH_PREFIX):
        raise ArtifactError(
            f"{path}: missing '{HASH_PREFIX}' line",
            code=ERR_MALFORMED_ARTIFACT,
            context={"path": str(path)},
        )
    config_hash = lines[0][len(HASH_PREFIX) :].strip()
    parsed = list(csv.reader(lines[1:]))
    if not parsed:
        raise ArtifactError(f"{path}: missing header row", code=ERR_MALFORMED_ARTIFACT, context={"path": str(path)})

    header = tuple(parsed[0])
    for offset, row in enumerate(parsed[1:], start=3):
        if len(row) != len(header):
            raise ArtifactError(
                f"{path}:{offset}: expected {len(header)} fields, found {len(row)}",
                code=ERR_MALFORMED_ARTIFACT,
                context={"path": str(path), "line": offset},
            )
    return ResultsTable(path, config_hash, header, tuple(tuple(row) for row in parsed[1:]))


def summarize(table: ResultsTable, group_by: Sequence[str], value: str) -> list[GroupSummary]:
    """Mean, population std and count of ``value`` per distinct ``group_by`` key, in first-seen order."""
    positions = [table.index(name) for name in group_by]
    values = table.floats(value)
    groups: dict[tuple[str, ...], list[float]] = {}
    for row, number in zip(table.rows, values):
        groups.setdefault(tuple(row[p] for p in positions), []).append(number)
    return [
        GroupSummary(
            key=key,
            mean=statistics.fmean(numbers),
            std=statistics.pstdev(numbers) if len(numbers) > 1 else 0.0,
            count=len(numbers),
        )
        for key, numbers in groups.items()
    ]


__all__ = [
    "GroupSummary",
    "ResultsTable",
    "load_results",
    "summarize",
]
