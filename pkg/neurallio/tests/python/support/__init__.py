"""Shared helpers for the Python test suites.

The tiny shapes keep a full train/eval cycle well under a second.
"""
from __future__ import annotations

from pathlib import Path

from neurallio.config import ExperimentConfig, bundled_config
from neurallio.datagen import ExperimentData, generate_experiment
from neurallio.trainer import ArchConfig, TrainConfig

__all__ = ["ensure_out_dir", "smoke_config", "tiny_arch", "tiny_data", "tiny_train_config"]

TINY_ARCH = ArchConfig(predictor_widths=(2, 4, 2), encoder_widths=(6, 3), num_bases=1, field_hidden=4, plain_hidden=8)


def ensure_out_dir(root: Path, name: str = "liodg_out") -> Path:
    """Return an existing output directory under ``root``, creating it if needed."""
    target = root / name
    target.mkdir(exist_ok=True)
    return target


def tiny_arch(**overrides: object) -> ArchConfig:
    if not overrides:
        return TINY_ARCH
    return ArchConfig(**{**TINY_ARCH.__dict__, **overrides})


def tiny_train_config(**overrides: object) -> TrainConfig:
    values: dict[str, object] = {"epochs": 2, "minibatch_domains": 2, "learning_rate": 1e-2, "k": 2}
    values.update(overrides)
    return TrainConfig(**values)  # type: ignore[arg-type]


def tiny_data(seed: int = 0, n_train: int = 5, n_test: int = 3, mesh_per_axis: int = 2) -> ExperimentData:
    return generate_experiment(seed=seed, n_train=n_train, n_test=n_test, mesh_per_axis=mesh_per_axis, n_per_class=8)


def smoke_config(out_dir: Path | None = None) -> ExperimentConfig:
    config = bundled_config("smoke")
    return config.with_overrides(output_dir=out_dir) if out_dir is not None else config
