"""Continuously indexed 2-Moons domains and imperfect descriptor variants.

A domain is the shared base moon cloud scaled about its centroid by
``1.1 ** z1`` and rotated counterclockwise by ``18 * z2`` degrees. Every
domain of one experiment reuses the same base cloud, so the descriptor is the
only source of variation between domains.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np
import torch

from .errors import DimensionError, NumericError, UsageError
from .numcore import DTYPE, as_tensor, derive_seed, ensure_finite, numpy_rng

log = logging.getLogger(__name__)

DEFAULT_N_PER_CLASS = 500
DEFAULT_NOISE_STD = 0.1
DEFAULT_BOUNDS: tuple[tuple[float, float], ...] = ((0.0, 10.0), (0.0, 10.0))
DEFAULT_N_TRAIN = 50
DEFAULT_N_TEST = 150
DEFAULT_MESH_PER_AXIS = 11

SCALE_PER_UNIT = 0.1
ROTATION_DEGREES_PER_UNIT = 18.0

SCALE_COMPOUND = "compound"
SCALE_LINEAR = "linear"
SCALE_LAWS = frozenset({SCALE_COMPOUND, SCALE_LINEAR})

NOISY = "noisy"
REDUNDANT = "redundant"
INCOMPLETE = "incomplete"
IMPERFECTION_KINDS = (NOISY, REDUNDANT, INCOMPLETE)

MAX_NOISE_DIMS = 5
DEFAULT_PROJECTION_DIM = 8
_MAX_PROJECTION_ATTEMPTS = 100

Descriptor = torch.Tensor


@dataclass(frozen=True, eq=False)
class Domain:
    """One dataset shard plus the descriptor that indexes it."""

    id: int
    descriptor: Descriptor
    inputs: torch.Tensor
    labels: torch.Tensor

    def __post_init__(self) -> None:
        if self.inputs.dim() != 2 or self.inputs.shape[0] != self.labels.shape[0]:
            raise DimensionError(
                "inputs and labels disagree on row count",
                context={"domain": self.id, "inputs": tuple(self.inputs.shape), "labels": tuple(self.labels.shape)},
            )
        if self.descriptor.dim() != 1:
            raise DimensionError("a descriptor is a vector", context={"domain": self.id})

    @property
    def size(self) -> int:
        return int(self.labels.shape[0])


class DescriptorSets(NamedTuple):
    train: torch.Tensor
    test: torch.Tensor
    mesh: torch.Tensor


@dataclass(frozen=True)
class ImperfectionSpec:
    """How clean descriptors are degraded before training sees them.

    ``noise_dims`` applies to ``noisy``, ``projection_dim`` to ``redundant``
    and ``incomplete``, ``drop_count`` to ``incomplete`` only.
    """

    kind: str
    noise_dims: int = 0
    projection_dim: int = DEFAULT_PROJECTION_DIM
    drop_count: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in IMPERFECTION_KINDS:
            raise UsageError(
                f"unknown imperfection kind '{self.kind}'",
                context={"kind": self.kind, "supported": IMPERFECTION_KINDS},
            )
        if self.kind == NOISY and not 0 <= self.noise_dims <= MAX_NOISE_DIMS:
            raise UsageError(
                f"noise_dims must be within 0..{MAX_NOISE_DIMS}",
                context={"noise_dims": self.noise_dims},
            )
        if self.kind in (REDUNDANT, INCOMPLETE) and self.projection_dim < 2:
            raise UsageError("projection_dim must be at least 2", context={"projection_dim": self.projection_dim})
        if self.kind == INCOMPLETE and not 1 <= self.drop_count <= self.projection_dim - 1:
            raise UsageError(
                f"drop_count must be within 1..{self.projection_dim - 1}",
                context={"drop_count": self.drop_count, "projection_dim": self.projection_dim},
            )

    @classmethod
    def from_level(cls, kind: str, level: int, *, seed: int = 0) -> "ImperfectionSpec":
        """Build the spec for one point of an imperfection sweep.

        The level is the number of noise dimensions, the redundant projection
        dimension, or the number of dropped coordinates, depending on ``kind``.
        """
        if kind == NOISY:
            return cls(kind, noise_dims=level, seed=seed)
        if kind == REDUNDANT:
            return cls(kind, projection_dim=level, seed=seed)
        return cls(kind, drop_count=level, seed=seed)

    @classmethod
    def parse(cls, text: str, *, seed: int = 0) -> "ImperfectionSpec":
        """Parse the ``KIND:LEVEL`` form used on the command line."""
        kind, sep, level = text.partition(":")
        if not sep or not level.strip().lstrip("-").isdigit():
            raise UsageError(
                f"imperfection must look like KIND:LEVEL, got '{text}'",
                context={"value": text},
            )
        return cls.from_level(kind.strip().lower(), int(level), seed=seed)

    @property
    def output_dim(self) -> int:
        if self.kind == NOISY:
            return 2 + self.noise_dims
        if self.kind == REDUNDANT:
            return self.projection_dim
        return self.projection_dim - self.drop_count


@lru_cache(maxsize=16)
def _base_moons_arrays(n_per_class: int, noise_std: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    t = np.linspace(0.0, math.pi, n_per_class)
    lower = np.stack([1.0 - np.cos(t), 1.0 - np.sin(t) - 0.5], axis=1)
    upper = np.stack([np.cos(t), np.sin(t)], axis=1)
    inputs = np.concatenate([lower, upper], axis=0)
    labels = np.concatenate([np.zeros(n_per_class, dtype=np.int64), np.ones(n_per_class, dtype=np.int64)])
    if noise_std > 0:
        inputs = inputs + numpy_rng(derive_seed(seed, "moons")).normal(0.0, noise_std, size=inputs.shape)
    inputs.setflags(write=False)
    labels.setflags(write=False)
    return inputs, labels


def make_base_moons(
    n_per_class: int = DEFAULT_N_PER_CLASS,
    noise_std: float = DEFAULT_NOISE_STD,
    seed: int = 0,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Two interleaving half-circles; the lower moon is class 0, the upper class 1."""
    if n_per_class < 1:
        raise UsageError("n_per_class must be at least 1", context={"n_per_class": n_per_class})
    if noise_std < 0:
        raise UsageError("noise_std must be non-negative", context={"noise_std": noise_std})
    inputs, labels = _base_moons_arrays(int(n_per_class), float(noise_std), int(seed))
    return torch.tensor(inputs, dtype=DTYPE), torch.tensor(labels, dtype=torch.int64)


def scale_factor(z1: float, law: str = SCALE_COMPOUND) -> float:
    if law == SCALE_COMPOUND:
        return (1.0 + SCALE_PER_UNIT) ** z1
    if law == SCALE_LINEAR:
        factor = 1.0 + SCALE_PER_UNIT * z1
        if factor <= 0:
            raise UsageError("linear scale law needs z1 > -10", context={"z1": z1})
        return factor
    raise UsageError(f"unknown scale law '{law}'", context={"law": law, "supported": sorted(SCALE_LAWS)})


def transform_matrix(z: Descriptor, law: str = SCALE_COMPOUND) -> torch.Tensor:
    """Scale times counterclockwise rotation for a clean 2-d descriptor."""
    z1, z2 = (float(v) for v in z)
    scale = scale_factor(z1, law)
    angle = math.radians(ROTATION_DEGREES_PER_UNIT * z2)
    cos, sin = math.cos(angle), math.sin(angle)
    return torch.tensor([[cos, -sin], [sin, cos]], dtype=DTYPE) * scale


def make_domain(
    z: Descriptor | Sequence[float],
    seed: int,
    *,
    domain_id: int = 0,
    n_per_class: int = DEFAULT_N_PER_CLASS,
    noise_std: float = DEFAULT_NOISE_STD,
    scale_law: str = SCALE_COMPOUND,
) -> Domain:
    """Apply the descriptor's scale and rotation to the shared base cloud."""
    z = as_tensor(z)
    if z.shape != (2,):
        raise DimensionError(
            "make_domain needs a 2-d clean descriptor",
            context={"shape": tuple(z.shape)},
        )
    ensure_finite(z, "descriptor")
    base, labels = make_base_moons(n_per_class, noise_std, seed)
    centroid = base.mean(dim=0)
    inputs = centroid + (base - centroid) @ transform_matrix(z, scale_law).T
    return Domain(id=domain_id, descriptor=z.clone(), inputs=inputs, labels=labels)


def make_domains(
    clean: torch.Tensor,
    seed: int,
    *,
    start_id: int = 0,
    descriptors: torch.Tensor | None = None,
    n_per_class: int = DEFAULT_N_PER_CLASS,
    noise_std: float = DEFAULT_NOISE_STD,
    scale_law: str = SCALE_COMPOUND,
) -> list[Domain]:
    """Build one domain per clean descriptor row.

    Data always follows the clean descriptor. When ``descriptors`` is given
    (an imperfect view of the same rows) it replaces the stored descriptor.
    """
    clean = as_tensor(clean)
    if descriptors is not None and descriptors.shape[0] != clean.shape[0]:
        raise DimensionError(
            "observed and clean descriptors disagree on row count",
            context={"clean": tuple(clean.shape), "observed": tuple(descriptors.shape)},
        )
    domains = []
    for offset, z in enumerate(clean):
        domain = make_domain(
            z, seed, domain_id=start_id + offset, n_per_class=n_per_class, noise_std=noise_std, scale_law=scale_law
        )
        if descriptors is not None:
            domain = replace(domain, descriptor=as_tensor(descriptors[offset]).clone())
        domains.append(domain)
    return domains


def _validate_bounds(bounds: Sequence[Sequence[float]]) -> tuple[np.ndarray, np.ndarray]:
    lows = np.array([float(lo) for lo, _ in bounds])
    highs = np.array([float(hi) for _, hi in bounds])
    if lows.size == 0 or not np.all(highs > lows):
        raise UsageError("descriptor bounds must be non-degenerate", context={"bounds": [list(b) for b in bounds]})
    return lows, highs


def sample_descriptor_sets(
    n_train: int = DEFAULT_N_TRAIN,
    n_test: int = DEFAULT_N_TEST,
    mesh_per_axis: int = DEFAULT_MESH_PER_AXIS,
    bounds: Sequence[Sequence[float]] = DEFAULT_BOUNDS,
    seed: int = 0,
) -> DescriptorSets:
    """Uniform train and test descriptors plus a regular mesh over ``bounds``."""
    lows, highs = _validate_bounds(bounds)
    if n_train < 0 or n_test < 0 or mesh_per_axis < 0:
        raise UsageError(
            "descriptor set sizes must be non-negative",
            context={"n_train": n_train, "n_test": n_test, "mesh_per_axis": mesh_per_axis},
        )
    rng = numpy_rng(derive_seed(seed, "descriptors"))
    train = rng.uniform(lows, highs, size=(n_train, lows.size))
    test = rng.uniform(lows, highs, size=(n_test, lows.size))
    axes = [np.linspace(lo, hi, mesh_per_axis) for lo, hi in zip(lows, highs)]
    grid = np.meshgrid(*axes, indexing="ij")
    mesh = np.stack([g.reshape(-1) for g in grid], axis=1)
    log.debug(
        "sampled descriptor sets",
        extra={"n_train": n_train, "n_test": n_test, "mesh": mesh.shape[0]},
    )
    return DescriptorSets(
        train=torch.tensor(train, dtype=DTYPE),
        test=torch.tensor(test, dtype=DTYPE),
        mesh=torch.tensor(mesh, dtype=DTYPE),
    )


def redundant_projection(projection_dim: int, seed: int, descriptor_dim: int = 2) -> torch.Tensor:
    """A ``projection_dim x descriptor_dim`` Gaussian matrix with full column rank."""
    rng = numpy_rng(derive_seed(seed, "projection", projection_dim))
    for attempt in range(_MAX_PROJECTION_ATTEMPTS):
        matrix = rng.normal(size=(projection_dim, descriptor_dim))
        if np.linalg.matrix_rank(matrix) == descriptor_dim:
            return torch.tensor(matrix, dtype=DTYPE)
        log.debug("resampling rank-deficient projection", extra={"attempt": attempt})
    raise NumericError(
        "could not sample a full-rank projection",
        context={"projection_dim": projection_dim, "attempts": _MAX_PROJECTION_ATTEMPTS},
    )


def dropped_positions(spec: ImperfectionSpec) -> list[int]:
    """Coordinate positions removed by an ``incomplete`` spec, ascending."""
    if spec.kind != INCOMPLETE:
        return []
    rng = numpy_rng(derive_seed(spec.seed, "drop", spec.projection_dim))
    return sorted(int(i) for i in rng.choice(spec.projection_dim, size=spec.drop_count, replace=False))


def apply_imperfection(
    descriptors: torch.Tensor | Sequence[Sequence[float]],
    spec: ImperfectionSpec,
    *,
    bounds: Sequence[Sequence[float]] = DEFAULT_BOUNDS,
) -> torch.Tensor:
    """Return the imperfect view of clean 2-d descriptors.

    The noise draws, the projection and the dropped positions come from
    ``spec.seed`` only. Pass every split in one call so train and test rows
    share the same projection and dropped positions.
    """
    clean = as_tensor(descriptors)
    if clean.dim() != 2 or clean.shape[1] != 2:
        raise DimensionError(
            "apply_imperfection expects rows of clean 2-d descriptors",
            context={"shape": tuple(clean.shape)},
        )
    if spec.kind == NOISY:
        if spec.noise_dims == 0:
            return clean.clone()
        lows, highs = _validate_bounds(bounds)
        low, high = float(lows.min()), float(highs.max())
        rng = numpy_rng(derive_seed(spec.seed, "noise"))
        noise = rng.uniform(low, high, size=(clean.shape[0], spec.noise_dims))
        return torch.cat([clean, torch.tensor(noise, dtype=DTYPE)], dim=1)

    projected = clean @ redundant_projection(spec.projection_dim, spec.seed).T
    if spec.kind == REDUNDANT:
        return projected
    dropped = set(dropped_positions(spec))
    kept = [i for i in range(spec.projection_dim) if i not in dropped]
    return projected[:, kept]


class ExperimentData(NamedTuple):
    train: list[Domain]
    test: list[Domain]
    mesh: list[Domain]

    @property
    def evaluation(self) -> list[Domain]:
        """Random test domains followed by the mesh domains."""
        return [*self.test, *self.mesh]


def generate_experiment(
    *,
    seed: int,
    n_train: int = DEFAULT_N_TRAIN,
    n_test: int = DEFAULT_N_TEST,
    mesh_per_axis: int = DEFAULT_MESH_PER_AXIS,
    bounds: Sequence[Sequence[float]] = DEFAULT_BOUNDS,
    n_per_class: int = DEFAULT_N_PER_CLASS,
    noise_std: float = DEFAULT_NOISE_STD,
    scale_law: str = SCALE_COMPOUND,
    imperfection: ImperfectionSpec | None = None,
) -> ExperimentData:
    """Sample descriptors and build train, test and mesh domains.

    Ids run over train, then test, then mesh. The imperfection is applied to
    all three splits in one pass.
    """
    sets = sample_descriptor_sets(n_train, n_test, mesh_per_axis, bounds, seed)
    clean = torch.cat([sets.train, sets.test, sets.mesh])
    observed = apply_imperfection(clean, imperfection, bounds=bounds) if imperfection is not None else None
    domains = make_domains(
        clean, seed, descriptors=observed, n_per_class=n_per_class, noise_std=noise_std, scale_law=scale_law
    )
    cut_test = sets.train.shape[0]
    cut_mesh = cut_test + sets.test.shape[0]
    log.info(
        "generated domains",
        extra={
            "train": cut_test,
            "test": cut_mesh - cut_test,
            "mesh": len(domains) - cut_mesh,
            "imperfection": imperfection.kind if imperfection else None,
        },
    )
    return ExperimentData(domains[:cut_test], domains[cut_test:cut_mesh], domains[cut_mesh:])


__all__ = (
    "DEFAULT_BOUNDS",
    "DEFAULT_MESH_PER_AXIS",
    "DEFAULT_NOISE_STD",
    "DEFAULT_N_PER_CLASS",
    "DEFAULT_N_TEST",
    "DEFAULT_N_TRAIN",
    "DescriptorSets",
    "Domain",
    "ExperimentData",
    "IMPERFECTION_KINDS",
    "INCOMPLETE",
    "ImperfectionSpec",
    "NOISY",
    "REDUNDANT",
    "SCALE_COMPOUND",
    "SCALE_LINEAR",
    "apply_imperfection",
    "dropped_positions",
    "generate_experiment",
    "make_base_moons",
    "make_domain",
    "make_domains",
    "redundant_projection",
    "sample_descriptor_sets",
    "scale_factor",
    "transform_matrix",
)
