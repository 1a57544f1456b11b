"""Config file formats and the on-disk float format."""
from __future__ import annotations

from pathlib import Path
from typing import Iterable

CONFIG_TOML: str = "toml"
CONFIG_JSON: str = "json"
DEFAULT_FORMAT: str = CONFIG_TOML

# 17 significant digits round-trip every IEEE-754 double exactly.
FLOAT_DIGITS: int = 17

_SUFFIXES = {".toml": CONFIG_TOML, ".json": CONFIG_JSON}


def detect_format(path: Path) -> str:
    """Pick the config format from the file suffix; unknown suffixes read as TOML."""
    return _SUFFIXES.get(path.suffix.lower(), DEFAULT_FORMAT)


def format_float(value: float) -> str:
    return f"{float(value):.{FLOAT_DIGITS}g}"


__all__: Iterable[str] = (
    "CONFIG_JSON",
    "CONFIG_TOML",
    "DEFAULT_FORMAT",
    "FLOAT_DIGITS",
    "detect_format",
    "format_float",
)
