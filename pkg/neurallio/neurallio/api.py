"""High-level experiment helpers.

Re-exports the pieces most callers need: generate domains, train, infer and
evaluate. Failures surface as :class:`~neurallio.errors.LiodgError`
subclasses with stable ``ERR_*`` codes.
"""
from __future__ import annotations

from typing import Iterable

from .artifacts import load_checkpoint, load_dataset, save_checkpoint, save_dataset
from .baselines import fit_erm, fit_erm_d, fit_nda
from .config import ExperimentConfig, bundled_config, load_config
from .datagen import Domain, ImperfectionSpec, apply_imperfection, generate_experiment, make_domain
from .evalsuite import (
    compare_models,
    domain_count_sweep,
    evaluate,
    export_manifold,
    imperfection_sweep,
    sensitivity_sweep,
    verify_structure,
)
from .session import RunSession, start_run
from .trainer import AblationFlags, ArchConfig, TrainConfig, TrainedState, infer, infer_many, train
from .transport import TransportOperator, build_charts

__all__: Iterable[str] = (
    "AblationFlags",
    "ArchConfig",
    "Domain",
    "ExperimentConfig",
    "ImperfectionSpec",
    "RunSession",
    "TrainConfig",
    "TrainedState",
    "TransportOperator",
    "apply_imperfection",
    "build_charts",
    "bundled_config",
    "compare_models",
    "domain_count_sweep",
    "evaluate",
    "export_manifold",
    "fit_erm",
    "fit_erm_d",
    "fit_nda",
    "generate_experiment",
    "imperfection_sweep",
    "infer",
    "infer_many",
    "load_checkpoint",
    "load_config",
    "load_dataset",
    "make_domain",
    "save_checkpoint",
    "save_dataset",
    "sensitivity_sweep",
    "start_run",
    "train",
    "verify_structure",
)
