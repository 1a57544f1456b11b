"""On-disk layout of generated datasets and training checkpoints.

Dataset directory::

    descriptors.csv        id, split, z1..zd
    domain_XXXX.csv        x1, x2, label
    manifest.json          seed, config hash, split counts

Checkpoint directory::

    checkpoint.json        trained flag, epochs, train ids and descriptors, charts, configs
    operator.pt            transport operator state dict
    operator.json          parameter names and shapes plus B, m, d, k, mode, product order
    params/arch.json       predictor widths
    params/theta_XXXX.csv  one stored theta per training domain id

Readers never modify the directories they load.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict
from pathlib import Path
from typing import Any, Mapping

import torch

from .config import section_from_dict
from .datagen import Domain, ExperimentData
from .errors import ArtifactError, LiodgError
from .numcore import DTYPE, make_generator
from .predictor import ParamStore, PredictorArch
from .results import ERR_MALFORMED_ARTIFACT, ResultsTable, load_results
from .session import ERR_UNWRITABLE_PATH, atomic_write, write_csv
from .trainer import ArchConfig, LossBreakdown, TrainConfig, TrainedState
from .transport import ChartIndex, TransportConfig, TransportOperator

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
SPLITS = ("train", "test", "mesh")

DESCRIPTORS_FILE = "descriptors.csv"
MANIFEST_FILE = "manifest.json"
CHECKPOINT_FILE = "checkpoint.json"
OPERATOR_WEIGHTS = "operator.pt"
OPERATOR_MANIFEST = "operator.json"
PARAMS_DIR = "params"


def domain_file(domain_id: int) -> str:
    return f"domain_{domain_id:04d}.csv"


def theta_file(domain_id: int) -> str:
    return f"theta_{domain_id:04d}.csv"


def _write_json(path: Path, payload: Any) -> Path:
    return atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _read_json(path: Path, what: str) -> dict[str, Any]:
    if not path.is_file():
        raise ArtifactError(f"missing {what}: {path}", context={"path": str(path)})
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactError(
            f"cannot read {what} '{path}': {exc}",
            code=ERR_MALFORMED_ARTIFACT,
            context={"path": str(path)},
        ) from exc
    if not isinstance(payload, dict):
        raise ArtifactError(f"{path}: expected a JSON object", code=ERR_MALFORMED_ARTIFACT, context={"path": str(path)})
    return payload


def _malformed(path: Path, message: str, **context: Any) -> ArtifactError:
    return ArtifactError(f"{path}: {message}", code=ERR_MALFORMED_ARTIFACT, context={"path": str(path), **context})


def save_dataset(
    directory: Path,
    data: ExperimentData,
    *,
    seed: int,
    config_hash: str,
    imperfection: str | None = None,
) -> Path:
    """Write every domain of ``data`` plus the descriptor table and manifest."""
    splits = {"train": data.train, "test": data.test, "mesh": data.mesh}
    dims = {d.descriptor.shape[0] for domains in splits.values() for d in domains}
    descriptor_dim = dims.pop() if len(dims) == 1 else 0
    header = ["id", "split", *(f"z{i + 1}" for i in range(descriptor_dim))]
    rows = [
        [domain.id, split, *(float(v) for v in domain.descriptor)]
        for split, domains in splits.items()
        for domain in domains
    ]
    write_csv(directory / DESCRIPTORS_FILE, header, rows, config_hash=config_hash)
    for domains in splits.values():
        for domain in domains:
            write_csv(
                directory / domain_file(domain.id),
                ["x1", "x2", "label"],
                ([float(x[0]), float(x[1]), int(y)] for x, y in zip(domain.inputs, domain.labels)),
                config_hash=config_hash,
            )
    manifest = {
        "format_version": FORMAT_VERSION,
        "seed": seed,
        "config_hash": config_hash,
        "descriptor_dim": descriptor_dim,
        "imperfection": imperfection,
        "counts": {split: len(domains) for split, domains in splits.items()},
    }
    _write_json(directory / MANIFEST_FILE, manifest)
    log.info("dataset written", extra={"path": str(directory), **manifest["counts"]})
    return directory


def load_manifest(directory: Path) -> dict[str, Any]:
    return _read_json(Path(directory) / MANIFEST_FILE, "dataset manifest")


def load_dataset(directory: Path) -> ExperimentData:
    """Read a directory written by :func:`save_dataset`."""
    directory = Path(directory).expanduser()
    if not directory.is_dir():
        raise ArtifactError(f"dataset directory not found: {directory}", context={"path": str(directory)})
    manifest = load_manifest(directory)
    table = load_results(directory / DESCRIPTORS_FILE)
    z_columns = [name for name in table.header if name.startswith("z")]
    if not z_columns:
        raise _malformed(table.path, "no descriptor columns")
    z_values = [table.floats(name) for name in z_columns]
    splits: dict[str, list[Domain]] = {split: [] for split in SPLITS}
    for row_index, record in enumerate(table.records()):
        split = record["split"]
        if split not in splits:
            raise _malformed(table.path, f"unknown split '{split}'", line=row_index + 3)
        domain_id = int(record["id"])
        descriptor = torch.tensor([column[row_index] for column in z_values], dtype=DTYPE)
        splits[split].append(_load_domain(directory / domain_file(domain_id), domain_id, descriptor))
    counts = manifest.get("counts", {})
    for split in SPLITS:
        if counts.get(split, len(splits[split])) != len(splits[split]):
            raise _malformed(directory / MANIFEST_FILE, f"{split} count disagrees with {DESCRIPTORS_FILE}")
    return ExperimentData(splits["train"], splits["test"], splits["mesh"])


def _load_domain(path: Path, domain_id: int, descriptor: torch.Tensor) -> Domain:
    table = load_results(path)
    inputs = torch.tensor([table.floats("x1"), table.floats("x2")], dtype=DTYPE).T.contiguous()
    labels = torch.tensor([int(v) for v in table.floats("label")], dtype=torch.int64)
    try:
        return Domain(id=domain_id, descriptor=descriptor, inputs=inputs, labels=labels)
    except LiodgError as exc:
        raise _malformed(path, exc.message) from exc


def save_checkpoint(directory: Path, state: TrainedState, *, config_hash: str) -> Path:
    """Write the operator, the parameter store and the bookkeeping needed to rebuild ``state``."""
    directory = Path(directory)
    params_dir = directory / PARAMS_DIR
    _write_json(params_dir / "arch.json", state.predictor.to_dict())
    for row, domain_id in enumerate(state.store.ids):
        theta = state.store.thetas[row].detach()
        write_csv(
            params_dir / theta_file(domain_id),
            ["index", "value"],
            ([index, float(value)] for index, value in enumerate(theta)),
            config_hash=config_hash,
        )

    weights = directory / OPERATOR_WEIGHTS
    tmp = weights.with_name(f".{weights.name}.tmp")
    try:
        torch.save(state.operator.state_dict(), tmp)
        tmp.replace(weights)
    except OSError as exc:
        tmp.unlink(missing_ok=True)
        raise ArtifactError(
            f"cannot write '{weights}': {exc}", code=ERR_UNWRITABLE_PATH, context={"path": str(weights)}
        ) from exc
    _write_json(
        directory / OPERATOR_MANIFEST,
        {
            **state.operator.describe(),
            "descriptor_dim": state.operator.config.descriptor_dim,
            "k": state.charts.k,
        },
    )
    _write_json(
        directory / CHECKPOINT_FILE,
        {
            "format_version": FORMAT_VERSION,
            "config_hash": config_hash,
            "trained": state.trained,
            "epochs_completed": state.epochs_completed,
            "train_ids": list(state.store.ids),
            "train_descriptors": state.train_descriptors.tolist(),
            "charts": state.charts.to_dict(),
            "arch": _plain(asdict(state.arch)),
            "train_config": _plain(asdict(state.config)),
            "history": [breakdown.as_dict() for breakdown in state.history],
        },
    )
    log.info("checkpoint written", extra={"path": str(directory), "trained": state.trained})
    return directory


def load_checkpoint(directory: Path) -> TrainedState:
    """Rebuild a :class:`TrainedState` from :func:`save_checkpoint` output.

    The trained flag is restored as written; callers that need a trained
    model check it with :func:`neurallio.trainer.require_trained`.
    """
    directory = Path(directory).expanduser()
    if not directory.is_dir():
        raise ArtifactError(f"checkpoint directory not found: {directory}", context={"path": str(directory)})
    meta = _read_json(directory / CHECKPOINT_FILE, "checkpoint")
    manifest = _read_json(directory / OPERATOR_MANIFEST, "operator manifest")
    try:
        arch = section_from_dict(ArchConfig, meta["arch"], prefix="arch")
        train_config = section_from_dict(TrainConfig, meta["train_config"], prefix="train_config")
        predictor = PredictorArch.from_dict(_read_json(directory / PARAMS_DIR / "arch.json", "predictor arch"))
        transport_config = TransportConfig.from_dict(manifest["config"])
        ids = [int(i) for i in meta["train_ids"]]
        descriptors = torch.tensor(meta["train_descriptors"], dtype=DTYPE)
        charts = ChartIndex.from_dict(meta["charts"])
        history = [LossBreakdown(**entry) for entry in meta.get("history", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise _malformed(directory / CHECKPOINT_FILE, f"incomplete checkpoint metadata ({exc})") from exc

    if ids:
        thetas = torch.stack([_load_theta(directory / PARAMS_DIR / theta_file(i)) for i in ids])
    else:
        thetas = torch.empty(0, predictor.param_count, dtype=DTYPE)
    store = ParamStore(predictor, ids, thetas)
    operator = TransportOperator(transport_config, make_generator(0))
    _load_operator_weights(directory, operator, manifest)

    return TrainedState(
        arch=arch,
        operator=operator,
        store=store,
        charts=charts,
        train_descriptors=descriptors,
        config=train_config,
        history=history,
        trained=bool(meta.get("trained", False)),
        epochs_completed=int(meta.get("epochs_completed", 0)),
    )


def _load_theta(path: Path) -> torch.Tensor:
    table: ResultsTable = load_results(path)
    return torch.tensor(table.floats("value"), dtype=DTYPE)


def _load_operator_weights(directory: Path, operator: TransportOperator, manifest: Mapping[str, Any]) -> None:
    weights = directory / OPERATOR_WEIGHTS
    if not weights.is_file():
        raise ArtifactError(f"missing operator weights: {weights}", context={"path": str(weights)})
    expected = [(entry["name"], list(entry["shape"])) for entry in manifest.get("parameters", [])]
    actual = [(name, list(tensor.shape)) for name, tensor in operator.state_dict().items()]
    if expected != actual:
        raise _malformed(directory / OPERATOR_MANIFEST, "parameter layout does not match the operator config")
    try:
        state_dict = torch.load(weights, map_location="cpu", weights_only=True)
        operator.load_state_dict(state_dict)
    except (OSError, RuntimeError) as exc:
        raise _malformed(weights, f"cannot load operator weights ({exc})") from exc


def _plain(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


__all__ = (
    "CHECKPOINT_FILE",
    "DESCRIPTORS_FILE",
    "MANIFEST_FILE",
    "OPERATOR_MANIFEST",
    "OPERATOR_WEIGHTS",
    "domain_file",
    "load_checkpoint",
    "load_dataset",
    "load_manifest",
    "save_checkpoint",
    "save_dataset",
    "theta_file",
)
