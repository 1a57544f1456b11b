"""Re-render every NeuralLio figure in a run directory from its CSV results."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from neurallio.commands import render_from_csv
from neurallio.errors import LiodgError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Rebuild loss, sweep, convergence and manifold SVGs from the CSV files of a run.",
    )
    parser.add_argument(
        "out_dir",
        type=Path,
        help="Output directory written by a neurallio command",
    )
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.out_dir.is_dir():
        print(f"error: {args.out_dir} is not a directory", file=sys.stderr)
        return 2

    try:
        written = render_from_csv(args.out_dir)
    except LiodgError as exc:
        print(f"error: {exc.code}: {exc.message}", file=sys.stderr)
        return 2

    if not written:
        print("No results CSV with a figure found.")
        return 0

    for path in written:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
