"""Unit tests for the command implementations and CSV-driven figure rendering."""
from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import pytest

from neurallio import commands
from neurallio.config import ExperimentConfig, Thresholds
from neurallio.errors import ArtifactError, ThresholdError, UsageError
from neurallio.results import load_results

from ..support import smoke_config


def test_parse_sweep_kind() -> None:
    assert commands.parse_sweep_kind("noisy") == ("noisy", None)
    assert commands.parse_sweep_kind("Domains") == ("domains", None)
    assert commands.parse_sweep_kind("sensitivity:k") == ("sensitivity", "k")
    for bad in ("sensitivity:depth", "sensitivity", "noisy:3", "sideways"):
        with pytest.raises(UsageError):
            commands.parse_sweep_kind(bad)


def test_generate_then_train_writes_the_expected_layout(tmp_path: Path) -> None:
    config = smoke_config(tmp_path)

    data_dir = commands.cmd_generate(config, tmp_path)
    checkpoint = commands.cmd_train(config, tmp_path)

    assert data_dir == tmp_path / commands.DATA_DIR
    assert checkpoint == tmp_path / commands.CHECKPOINT_DIR
    history = load_results(tmp_path / "loss_history.csv")
    assert history.header[0] == "epoch" and history.header[-1] == "total"
    assert len(history) == config.train.epochs
    assert history.config_hash == config.config_hash()
    assert (tmp_path / "loss_history.svg").is_file()


def test_train_needs_a_dataset(tmp_path: Path) -> None:
    with pytest.raises(ArtifactError):
        commands.cmd_train(smoke_config(tmp_path), tmp_path)


def test_eval_uses_explicit_directories(tmp_path: Path) -> None:
    source = tmp_path / "source"
    config = smoke_config(source)
    commands.cmd_generate(config, source)
    commands.cmd_train(config, source)

    error = commands.cmd_eval(
        config,
        tmp_path / "eval",
        data_dir=source / commands.DATA_DIR,
        checkpoint_dir=source / commands.CHECKPOINT_DIR,
    )

    per_domain = load_results(tmp_path / "eval" / "errors_by_domain.csv")
    assert len(per_domain) == config.dataset.n_test + config.dataset.mesh_per_axis**2
    assert error == pytest.approx(sum(per_domain.floats("error")) / len(per_domain))
    main = load_results(tmp_path / "eval" / "results_main.csv")
    assert list(main.records())[0]["model"] == "full"


def test_ablate_writes_results_and_summary(tmp_path: Path) -> None:
    config = smoke_config(tmp_path)

    path = commands.cmd_ablate(config, tmp_path, models=["full", "erm"])

    assert load_results(path).column("model") == ["full", "erm"]
    summary = load_results(tmp_path / "results_summary.csv")
    assert summary.column("model") == ["full", "erm"]
    assert summary.column("n") == ["1", "1"]


def test_noisy_sweep_compares_gate_variants(tmp_path: Path) -> None:
    path = commands.cmd_sweep(smoke_config(tmp_path), tmp_path, "noisy", levels=[1])

    table = load_results(path)
    assert path.name == "sweep_noisy.csv"
    assert table.header == commands.SWEEP_HEADER
    assert sorted(table.column("variant")) == ["gated", "no_gate"]
    assert (tmp_path / "sweep_noisy.svg").is_file()


def test_domain_sweep_writes_convergence_files(tmp_path: Path) -> None:
    commands.cmd_sweep(smoke_config(tmp_path), tmp_path, "domains")

    assert load_results(tmp_path / "sweep_domains.csv").column("level") == ["3", "5"]
    assert load_results(tmp_path / "loss_curves_domains.csv").header == ("level", "seed", "epoch", "loss")
    assert load_results(tmp_path / "convergence_summary.csv").column("metric") == ["spearman"]
    assert (tmp_path / "convergence.svg").is_file()


def test_sweep_without_levels_is_a_usage_error(tmp_path: Path) -> None:
    config = smoke_config(tmp_path)

    with pytest.raises(UsageError):
        commands.cmd_sweep(config, tmp_path, "sensitivity:latent_dim")


def test_render_from_csv_rebuilds_identical_figures(tmp_path: Path) -> None:
    config = smoke_config(tmp_path)
    commands.cmd_generate(config, tmp_path)
    commands.cmd_train(config, tmp_path)
    commands.cmd_sweep(config, tmp_path, "redundant", levels=[2])
    originals = {p.name: p.read_bytes() for p in tmp_path.glob("*.svg")}
    for svg in tmp_path.glob("*.svg"):
        svg.unlink()

    written = commands.render_from_csv(tmp_path)

    assert sorted(p.name for p in written) == sorted(originals)
    for path in written:
        assert path.read_bytes() == originals[path.name]


def _with_thresholds(config: ExperimentConfig, thresholds: Thresholds) -> ExperimentConfig:
    return replace(config, eval=replace(config.eval, thresholds=thresholds))


def test_ablate_checks_thresholds_after_writing_results(tmp_path: Path) -> None:
    config = _with_thresholds(smoke_config(tmp_path), Thresholds(min_erm_error=101.0))

    with pytest.raises(ThresholdError) as excinfo:
        commands.cmd_ablate(config, tmp_path, models=["full", "erm"])

    assert list(excinfo.value.context["failures"]) == ["erm_error"]
    assert load_results(tmp_path / "results_summary.csv").column("model") == ["full", "erm"]


def test_ablate_passes_satisfied_thresholds(tmp_path: Path) -> None:
    config = _with_thresholds(smoke_config(tmp_path), Thresholds(max_test_error=100.0, min_erm_error=0.0))

    commands.cmd_ablate(config, tmp_path, models=["full", "erm"])


def test_noisy_sweep_fails_its_gated_error_ceiling(tmp_path: Path) -> None:
    config = _with_thresholds(smoke_config(tmp_path), Thresholds(noisy_level=1, max_noisy_gated_error=-1.0))

    with pytest.raises(ThresholdError) as excinfo:
        commands.cmd_sweep(config, tmp_path, "noisy", levels=[1])

    assert list(excinfo.value.context["failures"]) == ["noisy_gated_error"]
    assert len(load_results(tmp_path / "sweep_noisy.csv")) == 2


def test_domain_sweep_fails_its_error_limit(tmp_path: Path) -> None:
    config = _with_thresholds(smoke_config(tmp_path), Thresholds(domain_error_limits=((3, -1.0),)))

    with pytest.raises(ThresholdError) as excinfo:
        commands.cmd_sweep(config, tmp_path, "domains")

    assert list(excinfo.value.context["failures"]) == ["domains_3_error"]
    assert (tmp_path / "convergence.svg").is_file()
