"""Declarative experiment configuration.

An :class:`ExperimentConfig` is a tree of frozen dataclasses. Values come
from the dataclass defaults, then a TOML (or JSON) file, then explicit
overrides from the command line. Unknown keys and wrongly typed values are
rejected with :class:`UsageError` naming the dotted key.
"""
from __future__ import annotations

import hashlib
import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import types
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Union, get_args, get_origin, get_type_hints

from . import datagen
from .datagen import ExperimentData, ImperfectionSpec, generate_experiment
from .errors import ArtifactError, UsageError
from .formats import CONFIG_JSON, detect_format
from .trainer import AblationFlags, ArchConfig, LossWeights, TrainConfig

ERR_INVALID_CONFIG = "ERR_INVALID_CONFIG"

SWEEP_KINDS = ("noisy", "redundant", "incomplete", "domains", "sensitivity")
SENSITIVITY_PARAMETERS = ("num_bases", "field_hidden", "k", "latent_dim")
MODEL_NAMES = ("full", "plain", "no_lie", "erm", "erm_d", "nda")


@dataclass(frozen=True)
class DatasetConfig:
    bounds: tuple[tuple[float, float], ...] = datagen.DEFAULT_BOUNDS
    n_train: int = datagen.DEFAULT_N_TRAIN
    n_test: int = datagen.DEFAULT_N_TEST
    mesh_per_axis: int = datagen.DEFAULT_MESH_PER_AXIS
    n_per_class: int = datagen.DEFAULT_N_PER_CLASS
    noise_std: float = datagen.DEFAULT_NOISE_STD
    scale_law: str = datagen.SCALE_COMPOUND
    seed: int = 0
    imperfection: str | None = None

    def __post_init__(self) -> None:
        if self.scale_law not in datagen.SCALE_LAWS:
            raise UsageError(
                f"unknown scale law '{self.scale_law}'",
                code=ERR_INVALID_CONFIG,
                context={"key": "dataset.scale_law", "value": self.scale_law},
            )

    def imperfection_spec(self) -> ImperfectionSpec | None:
        if not self.imperfection:
            return None
        return ImperfectionSpec.parse(self.imperfection, seed=self.seed)

    def generate(
        self,
        *,
        seed: int | None = None,
        n_train: int | None = None,
        n_test: int | None = None,
        imperfection: ImperfectionSpec | None = None,
    ) -> ExperimentData:
        """Generate the domains this block describes, with optional overrides."""
        return generate_experiment(
            seed=self.seed if seed is None else seed,
            n_train=self.n_train if n_train is None else n_train,
            n_test=self.n_test if n_test is None else n_test,
            mesh_per_axis=self.mesh_per_axis,
            bounds=self.bounds,
            n_per_class=self.n_per_class,
            noise_std=self.noise_std,
            scale_law=self.scale_law,
            imperfection=imperfection if imperfection is not None else self.imperfection_spec(),
        )


@dataclass(frozen=True)
class Thresholds:
    """Acceptance thresholds; ``None``, ``False`` or ``()`` means the check is not requested.

    Error limits are percentages, like every error rate in this package.
    ``max_test_error`` bounds ``eval`` and the seed-mean of the full model in
    ``ablate``. Model orderings are chains of model names whose seed-mean
    errors must strictly increase. ``noisy_level`` and ``incomplete_level``
    pick the sweep level the imperfection checks read; ``domain_error_limits``
    pairs a training-domain count with its error ceiling.
    """

    max_test_error: float | None = None
    min_identity_cos: float | None = None
    min_associativity_cos: float | None = None
    min_invertibility_cos: float | None = None
    min_erm_error: float | None = None
    min_no_lie_error: float | None = None
    model_orderings: tuple[tuple[str, ...], ...] = ()
    noisy_level: int = 5
    max_noisy_gated_error: float | None = None
    incomplete_level: int = 4
    require_imperfection_gain: bool = False
    max_redundant_error: float | None = None
    domain_error_limits: tuple[tuple[int, float], ...] = ()
    max_domain_spearman: float | None = None

    def __post_init__(self) -> None:
        unknown = sorted({name for chain in self.model_orderings for name in chain} - set(MODEL_NAMES))
        if unknown:
            raise UsageError(
                f"unknown model name(s) in model_orderings: {', '.join(unknown)}",
                code=ERR_INVALID_CONFIG,
                context={"key": "eval.thresholds.model_orderings", "unknown": unknown},
            )

    def requested(self) -> bool:
        return any(
            value is not None and value is not False and value != ()
            for value in (getattr(self, f.name) for f in fields(self) if f.name not in _THRESHOLD_LEVELS)
        )


_THRESHOLD_LEVELS = ("noisy_level", "incomplete_level")


@dataclass(frozen=True)
class SweepSpec:
    kind: str
    levels: tuple[float, ...] = ()
    parameter: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in SWEEP_KINDS:
            raise UsageError(
                f"unknown sweep kind '{self.kind}'",
                code=ERR_INVALID_CONFIG,
                context={"kind": self.kind, "supported": SWEEP_KINDS},
            )
        if self.kind == "sensitivity" and self.parameter not in SENSITIVITY_PARAMETERS:
            raise UsageError(
                f"sensitivity sweeps need a parameter out of {', '.join(SENSITIVITY_PARAMETERS)}",
                code=ERR_INVALID_CONFIG,
                context={"parameter": self.parameter},
            )

    @property
    def name(self) -> str:
        return f"sensitivity_{self.parameter}" if self.kind == "sensitivity" else self.kind

    def int_levels(self) -> list[int]:
        return [int(level) for level in self.levels]


DEFAULT_SWEEPS: tuple[SweepSpec, ...] = (
    SweepSpec("noisy", (0, 1, 2, 3, 4, 5)),
    SweepSpec("redundant", (2, 3, 4, 5, 6, 7, 8)),
    SweepSpec("incomplete", (1, 2, 3, 4, 5, 6, 7)),
    SweepSpec("domains", (5, 10, 20, 30, 50, 70, 100)),
    SweepSpec("sensitivity", (1, 2, 4, 8), parameter="num_bases"),
    SweepSpec("sensitivity", (8, 16, 32, 64), parameter="field_hidden"),
    SweepSpec("sensitivity", (2, 5, 10, 20), parameter="k"),
    SweepSpec("sensitivity", (8, 16, 32, 64, 128), parameter="latent_dim"),
)


@dataclass(frozen=True)
class EvalConfig:
    triplet_samples: int = 2000
    pair_samples: int = 2000
    min_structure_samples: int = 100
    seeds: tuple[int, ...] = (0, 1, 2)
    manifold_per_axis: int = 21
    manifold_components: int = 3
    models: tuple[str, ...] = MODEL_NAMES
    sweeps: tuple[SweepSpec, ...] = DEFAULT_SWEEPS
    thresholds: Thresholds = field(default_factory=Thresholds)

    def __post_init__(self) -> None:
        unknown = sorted(set(self.models) - set(MODEL_NAMES))
        if unknown:
            raise UsageError(
                f"unknown model name(s): {', '.join(unknown)}",
                code=ERR_INVALID_CONFIG,
                context={"key": "eval.models", "unknown": unknown, "supported": MODEL_NAMES},
            )
        if not self.seeds:
            raise UsageError("eval.seeds must not be empty", code=ERR_INVALID_CONFIG, context={"key": "eval.seeds"})

    def sweep(self, name: str) -> SweepSpec | None:
        for spec in self.sweeps:
            if spec.name == name:
                return spec
        return None


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    arch: ArchConfig = field(default_factory=ArchConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    seed: int = 0
    jobs: int = 1
    output_dir: str = ""

    def __post_init__(self) -> None:
        if self.jobs < 1:
            raise UsageError("jobs must be at least 1", code=ERR_INVALID_CONFIG, context={"jobs": self.jobs})

    def with_overrides(
        self,
        *,
        seed: int | None = None,
        jobs: int | None = None,
        output_dir: str | Path | None = None,
        ablation: AblationFlags | None = None,
        imperfection: str | None = None,
    ) -> "ExperimentConfig":
        config = self
        if seed is not None:
            config = replace(
                config,
                seed=seed,
                dataset=replace(config.dataset, seed=seed),
                train=replace(config.train, seed=seed),
            )
        if jobs is not None:
            config = replace(config, jobs=jobs)
        if output_dir is not None:
            config = replace(config, output_dir=str(output_dir))
        if ablation is not None:
            config = replace(config, train=replace(config.train, ablation=ablation))
        if imperfection is not None:
            config = replace(config, dataset=replace(config.dataset, imperfection=imperfection))
        return config

    def to_dict(self) -> dict[str, Any]:
        return _jsonable(asdict(self))

    def canonical_json(self, *, include_output_dir: bool = True) -> str:
        payload = self.to_dict()
        if not include_output_dir:
            payload.pop("output_dir", None)
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form, ignoring where the run writes its output."""
        return hashlib.sha256(self.canonical_json(include_output_dir=False).encode("utf-8")).hexdigest()


def _jsonable(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _invalid(key: str, message: str, **context: Any) -> UsageError:
    return UsageError(f"{key}: {message}", code=ERR_INVALID_CONFIG, context={"key": key, **context})


def _coerce(value: Any, hint: Any, key: str) -> Any:
    origin = get_origin(hint)
    if origin in (Union, types.UnionType):
        options = [arg for arg in get_args(hint) if arg is not type(None)]
        if value is None:
            if len(options) < len(get_args(hint)):
                return None
            raise _invalid(key, "value must not be null")
        return _coerce(value, options[0], key)
    if is_dataclass(hint):
        if not isinstance(value, Mapping):
            raise _invalid(key, "expected a table", got=type(value).__name__)
        return _build(hint, value, key)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise _invalid(key, "expected an array", got=type(value).__name__)
        args = get_args(hint)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(item, args[0], f"{key}[{i}]") for i, item in enumerate(value))
        if len(args) != len(value):
            raise _invalid(key, f"expected {len(args)} items, got {len(value)}")
        return tuple(_coerce(item, arg, f"{key}[{i}]") for i, (item, arg) in enumerate(zip(value, args)))
    if hint is bool:
        if not isinstance(value, bool):
            raise _invalid(key, "expected true or false", got=type(value).__name__)
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise _invalid(key, "expected an integer", got=type(value).__name__)
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise _invalid(key, "expected a number", got=type(value).__name__)
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise _invalid(key, "expected a string", got=type(value).__name__)
        return value
    raise _invalid(key, f"unsupported field type {hint!r}")


def _build(cls: type, data: Mapping[str, Any], prefix: str = "") -> Any:
    hints = get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        key = f"{prefix}.{unknown[0]}" if prefix else unknown[0]
        raise _invalid(key, "unknown key", unknown=unknown)
    values = {
        name: _coerce(value, hints[name], f"{prefix}.{name}" if prefix else name) for name, value in data.items()
    }
    try:
        return cls(**values)
    except UsageError as exc:
        if exc.code == UsageError.default_code:
            raise UsageError(
                f"{prefix or 'config'}: {exc.message}",
                code=ERR_INVALID_CONFIG,
                context={"key": prefix, **exc.context},
            ) from exc
        raise


def section_from_dict(cls: type, data: Mapping[str, Any], *, prefix: str = "") -> Any:
    """Build one config block (``ArchConfig``, ``TrainConfig``, ...) with the same checks as a file."""
    return _build(cls, data, prefix)


def config_from_dict(data: Mapping[str, Any]) -> ExperimentConfig:
    """Build a config; a top-level ``seed`` seeds the dataset and training unless they set their own."""
    payload = {key: dict(value) if isinstance(value, Mapping) else value for key, value in data.items()}
    seed = payload.get("seed")
    if seed is not None:
        for block in ("dataset", "train"):
            section = payload.setdefault(block, {})
            if isinstance(section, dict):
                section.setdefault("seed", seed)
    return _build(ExperimentConfig, payload)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path).expanduser()
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ArtifactError(f"config file '{path}' does not exist", context={"path": str(path)}) from None
    except OSError as exc:
        raise ArtifactError(f"cannot read config file '{path}': {exc}", context={"path": str(path)}) from exc
    try:
        data = json.loads(text) if detect_format(path) == CONFIG_JSON else tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise UsageError(
            f"cannot parse config file '{path}': {exc}",
            code=ERR_INVALID_CONFIG,
            context={"path": str(path)},
        ) from exc
    if not isinstance(data, Mapping):
        raise _invalid("<root>", "the config must be a table")
    return config_from_dict(data)


def bundled_config(name: str) -> ExperimentConfig:
    """Load one of the configs shipped under ``resources/configs``."""
    resource = resources.files("neurallio").joinpath("resources", "configs", f"{name}.toml")
    if not resource.is_file():
        raise UsageError(f"no bundled config named '{name}'", code=ERR_INVALID_CONFIG, context={"name": name})
    return config_from_dict(tomllib.loads(resource.read_text(encoding="utf-8")))


__all__ = (
    "AblationFlags",
    "ArchConfig",
    "DEFAULT_SWEEPS",
    "DatasetConfig",
    "EvalConfig",
    "ExperimentConfig",
    "LossWeights",
    "MODEL_NAMES",
    "SENSITIVITY_PARAMETERS",
    "SWEEP_KINDS",
    "SweepSpec",
    "Thresholds",
    "TrainConfig",
    "bundled_config",
    "config_from_dict",
    "load_config",
    "section_from_dict",
)
