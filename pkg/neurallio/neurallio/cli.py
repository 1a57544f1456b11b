"""Command-line interface for NeuralLio experiments.

``neurallio [global flags] <command> [command flags]``. Every command writes
into one output directory; CSV results come first and figures are derived
from them.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass
from importlib import metadata
from pathlib import Path
from typing import Iterable, Sequence

from . import commands
from .config import MODEL_NAMES, ExperimentConfig, bundled_config, load_config
from .datagen import IMPERFECTION_KINDS
from .errors import LiodgError, NumericError, ThresholdError, UsageError
from .policy import ENV_JSON_ERRORS, ENV_LOG_FILE, ENV_LOG_LEVEL, configure_policy, emit_error_trailer
from .session import active_run
from .trainer import ABLATIONS, AblationFlags

# LIODG_OUT takes precedence over --out so a batch driver can redirect every
# run without rewriting command lines.
ENV_OUT = "LIODG_OUT"
DEFAULT_OUT = "liodg-out"
DEFAULT_PRESET = "default"

EXIT_OK = 0
EXIT_THRESHOLD = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3

COMMANDS = ("generate", "train", "eval", "verify", "manifold", "ablate", "sweep", "repro")


@dataclass(frozen=True)
class LiodgCLIConfig:
    """Resolved CLI options for one invocation."""

    command: str
    out_dir: Path
    config_path: Path | None
    preset: str
    seed: int | None
    jobs: int | None
    imperfection: str | None
    ablation: tuple[str, ...]
    data_dir: Path | None
    checkpoint_dir: Path | None
    sweep: str | None
    levels: tuple[int, ...]
    models: tuple[str, ...]
    policy_overrides: dict[str, object]

    def experiment(self) -> ExperimentConfig:
        """Load the config file (or bundled preset) and apply the flag overrides."""
        base = load_config(self.config_path) if self.config_path is not None else bundled_config(self.preset)
        ablation = AblationFlags.from_names(self.ablation) if self.ablation else None
        config = base.with_overrides(
            seed=self.seed,
            jobs=self.jobs,
            output_dir=self.out_dir,
            ablation=ablation,
            imperfection=self.imperfection,
        )
        config.dataset.imperfection_spec()
        return config


def resolve_out_dir(cli_value: Path | None) -> Path:
    """Resolve the output directory: ``LIODG_OUT``, then ``--out``, then ``./liodg-out``."""
    env_value = os.getenv(ENV_OUT)
    if env_value:
        return Path(env_value).expanduser().resolve()
    if cli_value is not None:
        return Path(cli_value).expanduser().resolve()
    return (Path.cwd() / DEFAULT_OUT).resolve()


def exit_code_for(error: LiodgError) -> int:
    if isinstance(error, ThresholdError):
        return EXIT_THRESHOLD
    if isinstance(error, NumericError):
        return EXIT_NUMERIC
    return EXIT_USAGE


def _help_epilog() -> str:
    return (
        "Exit codes:\n"
        "  0 success, 1 acceptance threshold failed, 2 usage/state/artifact error,\n"
        "  3 numeric abort (NaN or Inf during training).\n"
        "\n"
        "Environment variables:\n"
        f"  {ENV_OUT}             Output directory (overrides --out).\n"
        f"  {ENV_LOG_LEVEL}       Log verbosity (debug, info, warning, error).\n"
        f"  {ENV_LOG_FILE}        Write logs to this file instead of stderr.\n"
        f"  {ENV_JSON_ERRORS}     Set to 1 or true to mirror failures as JSON on stderr.\n"
    )


def _add_data_flags(parser: argparse.ArgumentParser, *, data: bool = True) -> None:
    if data:
        parser.add_argument(
            "--data",
            type=Path,
            default=None,
            help="Dataset directory written by 'generate' (defaults to <out>/data).",
        )
    parser.add_argument(
        "--checkpoint",
        type=Path,
        default=None,
        help="Checkpoint directory written by 'train' (defaults to <out>/checkpoint).",
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neurallio",
        description=(
            "Continuous domain generalization experiments: generate rotated/scaled 2-Moons domains, "
            "train the transport operator, and evaluate, verify, ablate or sweep it."
        ),
        epilog=_help_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
        allow_abbrev=False,
    )
    parser.add_argument(
        "--version",
        "-V",
        action="version",
        version=f"neurallio {_resolve_package_version() or 'dev'}",
    )
    parser.add_argument("--config", type=Path, default=None, help="Experiment config file (TOML or JSON).")
    parser.add_argument(
        "--preset",
        default=DEFAULT_PRESET,
        help="Bundled config to use when --config is not given (default, smoke).",
    )
    parser.add_argument(
        "--out",
        "-o",
        type=Path,
        default=None,
        help=f"Output directory (defaults to ./{DEFAULT_OUT}; {ENV_OUT} overrides it).",
    )
    parser.add_argument("--seed", type=int, default=None, help="Seed for data generation and training.")
    parser.add_argument("--jobs", type=int, default=None, help="Worker threads for sweep points (default 1).")
    parser.add_argument("--log-level", help="Log verbosity (examples: info, debug).")
    parser.add_argument("--log-file", type=Path, help="Write logs to the specified file instead of stderr.")
    parser.add_argument("--json-errors", action="store_true", help="Emit JSON error trailers on stderr.")

    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    generate = sub.add_parser("generate", help="Generate train, test and mesh domains.")
    generate.add_argument(
        "--imperfection",
        metavar="KIND:LEVEL",
        help=f"Corrupt the descriptors; KIND is one of {', '.join(IMPERFECTION_KINDS)}.",
    )

    train = sub.add_parser("train", help="Train the transport operator and per-domain parameters.")
    train.add_argument("--data", type=Path, default=None, help="Dataset directory (defaults to <out>/data).")
    train.add_argument(
        "--ablation",
        action="append",
        choices=ABLATIONS,
        default=[],
        help="Ablation flag; repeat to combine.",
    )

    _add_data_flags(sub.add_parser("eval", help="Mean error over test and mesh domains."))
    _add_data_flags(sub.add_parser("verify", help="Identity, associativity and invertibility cosines."))
    _add_data_flags(sub.add_parser("manifold", help="PCA export of parameters inferred on a dense mesh."), data=False)

    ablate = sub.add_parser("ablate", help="Compare the full model with ablations and baselines.")
    ablate.add_argument("--models", nargs="+", choices=MODEL_NAMES, default=None, help="Models to compare.")

    sweep = sub.add_parser("sweep", help="Retrain across imperfection levels, domain counts or hyperparameters.")
    sweep.add_argument(
        "kind",
        help="noisy, redundant, incomplete, domains, or sensitivity:PARAM (num_bases, field_hidden, k, latent_dim).",
    )
    sweep.add_argument("--levels", type=int, nargs="+", default=None, help="Override the configured levels.")

    sub.add_parser("repro", help="Generate and train twice and byte-compare loss_history.csv.")
    return parser


def _parse_args(argv: Sequence[str]) -> LiodgCLIConfig:
    parser = _build_parser()
    known = parser.parse_args(argv)

    if known.jobs is not None and known.jobs < 1:
        parser.error("--jobs must be at least 1")

    policy: dict[str, object] = {}
    if known.log_level:
        policy["log_level"] = known.log_level
    if known.log_file is not None:
        policy["log_file"] = Path(known.log_file).expanduser().resolve()
    if known.json_errors:
        policy["json_errors"] = True

    return LiodgCLIConfig(
        command=known.command,
        out_dir=resolve_out_dir(known.out),
        config_path=Path(known.config).expanduser() if known.config is not None else None,
        preset=known.preset,
        seed=known.seed,
        jobs=known.jobs,
        imperfection=getattr(known, "imperfection", None),
        ablation=tuple(getattr(known, "ablation", ()) or ()),
        data_dir=getattr(known, "data", None),
        checkpoint_dir=getattr(known, "checkpoint", None),
        sweep=getattr(known, "kind", None),
        levels=tuple(getattr(known, "levels", None) or ()),
        models=tuple(getattr(known, "models", None) or ()),
        policy_overrides=policy,
    )


def _resolve_package_version() -> str | None:
    try:
        return metadata.version("neurallio")
    except metadata.PackageNotFoundError:  # pragma: no cover - dev checkout
        return None


def _run(cli: LiodgCLIConfig, config: ExperimentConfig) -> str:
    """Dispatch to the command and return a one-line summary for stdout."""
    out = cli.out_dir
    match cli.command:
        case "generate":
            return str(commands.cmd_generate(config, out))
        case "train":
            return str(commands.cmd_train(config, out, data_dir=cli.data_dir))
        case "eval":
            error = commands.cmd_eval(config, out, data_dir=cli.data_dir, checkpoint_dir=cli.checkpoint_dir)
            return f"error={error:.6f}"
        case "verify":
            report = commands.cmd_verify(config, out, data_dir=cli.data_dir, checkpoint_dir=cli.checkpoint_dir)
            return " ".join(f"{name}={value:.6f}" for name, value, _, _ in report.rows())
        case "manifold":
            return str(commands.cmd_manifold(config, out, checkpoint_dir=cli.checkpoint_dir))
        case "ablate":
            return str(commands.cmd_ablate(config, out, models=cli.models or None))
        case "sweep":
            assert cli.sweep is not None
            return str(commands.cmd_sweep(config, out, cli.sweep, levels=cli.levels or None))
        case "repro":
            report = commands.cmd_repro(config, out)
            return f"identical={str(report.identical).lower()}"
        case other:  # pragma: no cover - argparse choices block this
            raise UsageError(f"unknown command '{other}'")


def main(argv: Iterable[str] | None = None) -> int:
    """Entry point for ``neurallio`` and ``python -m neurallio``."""
    if argv is None:
        argv = sys.argv[1:]

    cli = _parse_args(list(argv))

    try:
        if cli.policy_overrides:
            configure_policy(**cli.policy_overrides)
        config = cli.experiment()
        summary = _run(cli, config)
    except LiodgError as error:
        sys.stderr.write(f"neurallio: {error.code}: {error.message}\n")
        run = active_run()
        emit_error_trailer(error, run_id=run.run_id if run is not None else None)
        if run is not None:
            run.finish()
        return exit_code_for(error)

    sys.stdout.write(summary + "\n")
    return EXIT_OK


__all__ = (
    "COMMANDS",
    "ENV_OUT",
    "EXIT_NUMERIC",
    "EXIT_OK",
    "EXIT_THRESHOLD",
    "EXIT_USAGE",
    "LiodgCLIConfig",
    "exit_code_for",
    "main",
    "resolve_out_dir",
)
