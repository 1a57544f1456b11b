"""Unit tests for dataset and checkpoint persistence."""
from __future__ import annotations

import json
from pathlib import Path

import pytest
import torch

from neurallio import artifacts
from neurallio.datagen import ImperfectionSpec, REDUNDANT, generate_experiment
from neurallio.errors import ArtifactError, StateError
from neurallio.evalsuite import evaluate
from neurallio.trainer import infer_many, require_trained, train

from ..support import tiny_arch, tiny_data, tiny_train_config


def test_dataset_round_trip_is_exact(tmp_path: Path) -> None:
    data = tiny_data()

    artifacts.save_dataset(tmp_path, data, seed=0, config_hash="h")
    loaded = artifacts.load_dataset(tmp_path)

    for split in ("train", "test", "mesh"):
        original, restored = getattr(data, split), getattr(loaded, split)
        assert [d.id for d in restored] == [d.id for d in original]
        for a, b in zip(original, restored):
            assert torch.equal(a.descriptor, b.descriptor)
            assert torch.equal(a.inputs, b.inputs)
            assert torch.equal(a.labels, b.labels)


def test_dataset_layout_and_manifest(tmp_path: Path) -> None:
    spec = ImperfectionSpec(REDUNDANT, projection_dim=3)
    data = generate_experiment(seed=2, n_train=3, n_test=1, mesh_per_axis=1, n_per_class=4, imperfection=spec)

    artifacts.save_dataset(tmp_path, data, seed=2, config_hash="abc", imperfection="redundant:3")

    manifest = artifacts.load_manifest(tmp_path)
    assert manifest["counts"] == {"train": 3, "test": 1, "mesh": 1}
    assert manifest["descriptor_dim"] == 3
    assert manifest["imperfection"] == "redundant:3"
    header = (tmp_path / artifacts.DESCRIPTORS_FILE).read_text(encoding="utf-8").splitlines()[1]
    assert header == "id,split,z1,z2,z3"
    assert (tmp_path / artifacts.domain_file(4)).is_file()


def test_load_dataset_reports_missing_pieces(tmp_path: Path) -> None:
    with pytest.raises(ArtifactError):
        artifacts.load_dataset(tmp_path / "nowhere")

    artifacts.save_dataset(tmp_path, tiny_data(), seed=0, config_hash="h")
    (tmp_path / artifacts.domain_file(0)).unlink()
    with pytest.raises(ArtifactError):
        artifacts.load_dataset(tmp_path)


def test_load_dataset_checks_manifest_counts(tmp_path: Path) -> None:
    artifacts.save_dataset(tmp_path, tiny_data(), seed=0, config_hash="h")
    manifest_path = tmp_path / artifacts.MANIFEST_FILE
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    manifest["counts"]["train"] = 99
    manifest_path.write_text(json.dumps(manifest), encoding="utf-8")

    with pytest.raises(ArtifactError) as excinfo:
        artifacts.load_dataset(tmp_path)

    assert excinfo.value.code == "ERR_MALFORMED_ARTIFACT"


def test_checkpoint_round_trip_preserves_inference(tmp_path: Path) -> None:
    data = tiny_data()
    state = train(data.train, tiny_train_config(), arch=tiny_arch())
    queries = torch.stack([d.descriptor for d in data.evaluation])

    artifacts.save_checkpoint(tmp_path, state, config_hash="h")
    restored = artifacts.load_checkpoint(tmp_path)

    assert restored.trained and restored.epochs_completed == 2
    assert restored.store.ids == state.store.ids
    assert restored.charts == state.charts
    assert restored.arch == state.arch
    assert restored.config == state.config
    assert [b.as_dict() for b in restored.history] == [b.as_dict() for b in state.history]
    assert torch.equal(infer_many(queries, restored), infer_many(queries, state))
    assert evaluate(data.evaluation, restored) == evaluate(data.evaluation, state)


def test_checkpoint_files(tmp_path: Path) -> None:
    state = train(tiny_data().train, tiny_train_config(epochs=1), arch=tiny_arch())

    artifacts.save_checkpoint(tmp_path, state, config_hash="h")

    manifest = json.loads((tmp_path / artifacts.OPERATOR_MANIFEST).read_text(encoding="utf-8"))
    assert manifest["k"] == 2
    assert manifest["descriptor_dim"] == 2
    assert manifest["product_order"] == "ascending-left"
    assert (tmp_path / artifacts.OPERATOR_WEIGHTS).is_file()
    theta_files = sorted(p.name for p in (tmp_path / artifacts.PARAMS_DIR).glob("theta_*.csv"))
    assert theta_files == [artifacts.theta_file(i) for i in state.store.ids]


def test_untrained_checkpoint_loads_but_is_not_trained(tmp_path: Path) -> None:
    state = train(tiny_data().train, tiny_train_config(epochs=0), arch=tiny_arch())

    artifacts.save_checkpoint(tmp_path, state, config_hash="h")
    restored = artifacts.load_checkpoint(tmp_path)

    assert not restored.trained
    with pytest.raises(StateError):
        require_trained(restored)


def test_checkpoint_rejects_layout_mismatch(tmp_path: Path) -> None:
    state = train(tiny_data().train, tiny_train_config(epochs=1), arch=tiny_arch())
    artifacts.save_checkpoint(tmp_path, state, config_hash="h")
    manifest_path = tmp_path / artifacts.OPERATOR_MANIFEST
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    manifest["parameters"] = manifest["parameters"][1:]
    manifest_path.write_text(json.dumps(manifest), encoding="utf-8")

    with pytest.raises(ArtifactError) as excinfo:
        artifacts.load_checkpoint(tmp_path)

    assert excinfo.value.code == "ERR_MALFORMED_ARTIFACT"


def test_missing_checkpoint_directory(tmp_path: Path) -> None:
    with pytest.raises(ArtifactError) as excinfo:
        artifacts.load_checkpoint(tmp_path / "nope")

    assert excinfo.value.code == "ERR_MISSING_ARTIFACT"
