"""Unit tests for experiment configuration loading."""
from __future__ import annotations

import json
from pathlib import Path

import pytest

from neurallio import config as config_mod
from neurallio import formats
from neurallio.config import (
    DEFAULT_SWEEPS,
    ERR_INVALID_CONFIG,
    ArchConfig,
    ExperimentConfig,
    SweepSpec,
    TrainConfig,
    bundled_config,
    config_from_dict,
    load_config,
    section_from_dict,
)
from neurallio.errors import ArtifactError, UsageError
from neurallio.trainer import ERR_CONFLICTING_FLAGS, AblationFlags


def test_default_preset_matches_dataclass_defaults() -> None:
    config = bundled_config("default")

    assert config.arch == ArchConfig()
    assert config.train == TrainConfig()
    assert config.dataset == ExperimentConfig().dataset
    assert config.eval.sweeps == DEFAULT_SWEEPS
    assert config.eval.thresholds.max_test_error == pytest.approx(8.0)
    assert config.eval.thresholds.min_identity_cos == pytest.approx(0.999)
    assert config.eval.thresholds.min_associativity_cos == pytest.approx(0.98)
    assert config.eval.thresholds.min_invertibility_cos == pytest.approx(0.97)
    assert config.eval.thresholds.min_erm_error == pytest.approx(25.0)
    assert config.eval.thresholds.model_orderings == (("full", "erm_d", "erm"), ("full", "plain", "no_lie"))
    assert (config.eval.thresholds.noisy_level, config.eval.thresholds.incomplete_level) == (5, 4)
    assert config.eval.thresholds.require_imperfection_gain
    assert config.eval.thresholds.domain_error_limits == ((20, 15.0), (50, 10.0))
    assert config.eval.thresholds.max_domain_spearman == pytest.approx(-0.8)


def test_smoke_preset_is_small() -> None:
    config = bundled_config("smoke")

    assert config.dataset.n_train <= 10
    assert config.train.minibatch_domains <= config.dataset.n_train
    assert config.train.k < config.dataset.n_train
    assert not config.eval.thresholds.requested()


def test_unknown_preset_is_a_usage_error() -> None:
    with pytest.raises(UsageError) as excinfo:
        bundled_config("huge")

    assert excinfo.value.code == ERR_INVALID_CONFIG


def test_load_toml_config(tmp_path: Path) -> None:
    path = tmp_path / "exp.toml"
    path.write_text(
        "seed = 4\n[train]\nepochs = 7\nk = 3\n[train.ablation]\nno_gate = true\n[dataset]\nn_train = 12\n",
        encoding="utf-8",
    )

    config = load_config(path)

    assert config.train.epochs == 7
    assert config.train.ablation == AblationFlags(no_gate=True)
    assert config.dataset.n_train == 12
    # The top-level seed fills in blocks that do not set their own.
    assert (config.seed, config.dataset.seed, config.train.seed) == (4, 4, 4)


def test_block_seed_wins_over_top_level_seed() -> None:
    config = config_from_dict({"seed": 1, "train": {"seed": 9}})

    assert config.train.seed == 9
    assert config.dataset.seed == 1


def test_load_json_config(tmp_path: Path) -> None:
    path = tmp_path / "exp.json"
    path.write_text(json.dumps({"arch": {"num_bases": 3}, "eval": {"seeds": [5, 6]}}), encoding="utf-8")

    config = load_config(path)

    assert config.arch.num_bases == 3
    assert config.eval.seeds == (5, 6)


def test_unknown_key_names_the_dotted_path() -> None:
    with pytest.raises(UsageError) as excinfo:
        config_from_dict({"train": {"epochz": 3}})

    assert excinfo.value.code == ERR_INVALID_CONFIG
    assert excinfo.value.context["key"] == "train.epochz"


@pytest.mark.parametrize(
    ("payload", "key"),
    [
        ({"train": {"epochs": "ten"}}, "train.epochs"),
        ({"train": {"learning_rate": True}}, "train.learning_rate"),
        ({"arch": {"predictor_widths": 3}}, "arch.predictor_widths"),
        ({"dataset": {"bounds": [[0.0, 1.0, 2.0]]}}, "dataset.bounds[0]"),
        ({"eval": {"thresholds": {"max_test_error": "low"}}}, "eval.thresholds.max_test_error"),
        ({"eval": {"thresholds": {"domain_error_limits": [[20]]}}}, "eval.thresholds.domain_error_limits[0]"),
        ({"eval": {"thresholds": {"model_orderings": [["full", "best"]]}}}, "eval.thresholds.model_orderings"),
    ],
)
def test_wrong_types_are_rejected(payload: dict, key: str) -> None:
    with pytest.raises(UsageError) as excinfo:
        config_from_dict(payload)

    assert excinfo.value.context["key"] == key


def test_value_checks_surface_as_invalid_config() -> None:
    with pytest.raises(UsageError) as excinfo:
        config_from_dict({"train": {"epochs": -1}})

    assert excinfo.value.code == ERR_INVALID_CONFIG
    assert excinfo.value.context["key"] == "train"


def test_conflicting_ablation_keeps_its_code() -> None:
    with pytest.raises(UsageError) as excinfo:
        config_from_dict({"train": {"ablation": {"plain": True, "no_lie": True}}})

    assert excinfo.value.code == ERR_CONFLICTING_FLAGS


def test_parse_errors_and_missing_files(tmp_path: Path) -> None:
    broken = tmp_path / "broken.toml"
    broken.write_text("[train\n", encoding="utf-8")

    with pytest.raises(UsageError):
        load_config(broken)
    with pytest.raises(ArtifactError):
        load_config(tmp_path / "missing.toml")


def test_config_hash_ignores_output_dir_only() -> None:
    base = ExperimentConfig()

    assert base.config_hash() == base.with_overrides(output_dir="/tmp/elsewhere").config_hash()
    assert base.config_hash() != base.with_overrides(seed=1).config_hash()
    assert len(base.config_hash()) == 64


def test_with_overrides_threads_seed_and_flags() -> None:
    config = ExperimentConfig().with_overrides(
        seed=5, jobs=3, ablation=AblationFlags(no_chart=True), imperfection="noisy:2"
    )

    assert (config.seed, config.dataset.seed, config.train.seed, config.jobs) == (5, 5, 5, 3)
    assert config.train.ablation.no_chart
    spec = config.dataset.imperfection_spec()
    assert spec is not None and spec.noise_dims == 2 and spec.seed == 5


def test_canonical_json_is_key_sorted() -> None:
    payload = json.loads(ExperimentConfig().canonical_json())

    assert list(payload) == sorted(payload)
    assert payload["train"]["weights"]["embed"] == 1.0


def test_sweep_spec_validation_and_lookup() -> None:
    with pytest.raises(UsageError):
        SweepSpec("sideways")
    with pytest.raises(UsageError):
        SweepSpec("sensitivity", (1,), parameter="depth")

    spec = config_mod.EvalConfig().sweep("sensitivity_k")
    assert spec is not None and spec.int_levels() == [2, 5, 10, 20]
    assert config_mod.EvalConfig().sweep("nothing") is None


def test_eval_config_rejects_unknown_models_and_empty_seeds() -> None:
    with pytest.raises(UsageError):
        config_from_dict({"eval": {"models": ["full", "oracle"]}})
    with pytest.raises(UsageError):
        config_from_dict({"eval": {"seeds": []}})


def test_section_from_dict_builds_one_block() -> None:
    arch = section_from_dict(ArchConfig, {"predictor_widths": [2, 8, 2], "num_bases": 4}, prefix="arch")

    assert arch.predictor_widths == (2, 8, 2)
    assert arch.num_bases == 4


def test_level_fields_alone_do_not_request_checks() -> None:
    assert not config_mod.Thresholds(noisy_level=3, incomplete_level=2).requested()
    assert config_mod.Thresholds(max_redundant_error=0.0).requested()
    assert config_mod.Thresholds(require_imperfection_gain=True).requested()


def test_config_format_follows_the_suffix() -> None:
    assert formats.detect_format(Path("exp.JSON")) == formats.CONFIG_JSON
    assert formats.detect_format(Path("exp.toml")) == formats.CONFIG_TOML
    assert formats.detect_format(Path("exp.cfg")) == formats.DEFAULT_FORMAT
    assert float(formats.format_float(0.1 + 0.2)) == 0.1 + 0.2
