"""Evaluation of trained models: test error, structure checks, sweeps, manifold export.

Every sweep retrains from scratch per (level, variant, seed) point. Points are
independent, so they can fan out over a thread pool; results come back in
submission order regardless of ``jobs``.
"""
from __future__ import annotations

import logging
import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable, Protocol, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from scipy.stats import spearmanr

from .baselines import FITTERS
from .config import DatasetConfig, ExperimentConfig, Thresholds
from .datagen import INCOMPLETE, NOISY, REDUNDANT, Domain, ImperfectionSpec, make_domains, sample_descriptor_sets
from .errors import ThresholdError, UsageError
from .numcore import as_tensor, derive_seed, numpy_rng, pca_project
from .predictor import domain_error_rates
from .trainer import AblationFlags, ArchConfig, TrainConfig, TrainedState, infer_many, require_trained, train

log = logging.getLogger(__name__)

EVAL_CHUNK = 64
STRUCTURE_PROPERTIES = ("identity", "associativity", "invertibility")


class Scorable(Protocol):
    def logits(self, descriptors: torch.Tensor, inputs: torch.Tensor) -> torch.Tensor: ...


@dataclass(frozen=True)
class StructureReport:
    identity_cos: float
    associativity_cos: float
    invertibility_cos: float
    identity_n: int
    associativity_n: int
    invertibility_n: int
    latent_identity_cos: float
    latent_associativity_cos: float
    latent_invertibility_cos: float

    def rows(self) -> list[tuple[str, float, int, float]]:
        """``(property, mean_cos, n, latent_mean_cos)`` per structure property."""
        return [
            (name, getattr(self, f"{name}_cos"), getattr(self, f"{name}_n"), getattr(self, f"latent_{name}_cos"))
            for name in STRUCTURE_PROPERTIES
        ]


@dataclass(frozen=True)
class SweepPoint:
    level: float
    variant: str
    seed: int
    error: float


@dataclass(frozen=True)
class SweepResult:
    """Errors per (level, variant, seed); ``loss_curves`` keeps per-run total-loss histories."""

    axis: str
    points: tuple[SweepPoint, ...]
    loss_curves: dict[tuple[float, str, int], list[float]] = field(default_factory=dict, compare=False)

    @property
    def values(self) -> list[float]:
        return sorted({p.level for p in self.points})

    @property
    def variants(self) -> list[str]:
        seen: dict[str, None] = {}
        for point in self.points:
            seen.setdefault(point.variant, None)
        return list(seen)

    def errors(self, level: float, variant: str) -> list[float]:
        return [p.error for p in self.points if p.level == level and p.variant == variant]

    def mean_error(self, level: float, variant: str) -> float:
        return statistics.fmean(self.errors(level, variant))

    def std_error(self, level: float, variant: str) -> float:
        errors = self.errors(level, variant)
        return statistics.pstdev(errors) if len(errors) > 1 else 0.0

    def runs_per_point(self) -> int:
        counts = {len(self.errors(level, variant)) for level in self.values for variant in self.variants}
        return min(counts) if counts else 0

    def curve(self, variant: str) -> list[tuple[float, float, float, int]]:
        return [
            (level, self.mean_error(level, variant), self.std_error(level, variant), len(self.errors(level, variant)))
            for level in self.values
            if self.errors(level, variant)
        ]

    def merged(self, other: "SweepResult") -> "SweepResult":
        return SweepResult(self.axis, self.points + other.points, {**self.loss_curves, **other.loss_curves})


@dataclass(frozen=True)
class ModelResult:
    model: str
    seed: int
    error: float


@dataclass(frozen=True)
class ManifoldExport:
    descriptors: torch.Tensor
    components: torch.Tensor
    projected: torch.Tensor
    explained_variance_ratio: torch.Tensor
    per_axis: int

    def rows(self) -> list[list[float]]:
        return [
            [*(float(v) for v in z), *(float(v) for v in p)]
            for z, p in zip(self.descriptors, self.projected)
        ]


def _stack(domains: Sequence[Domain]) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    descriptors = torch.stack([as_tensor(d.descriptor) for d in domains])
    inputs = torch.stack([as_tensor(d.inputs) for d in domains])
    labels = torch.stack([torch.as_tensor(d.labels, dtype=torch.int64) for d in domains])
    return descriptors, inputs, labels


def per_domain_errors(domains: Sequence[Domain], model: Scorable, *, allow_untrained: bool = False) -> list[float]:
    """Error rate of ``model`` on each domain, in input order.

    ``allow_untrained`` lets the trainer score a state that is still being optimised.
    """
    if isinstance(model, TrainedState) and not allow_untrained:
        require_trained(model)
    errors: list[float] = []
    for start in range(0, len(domains), EVAL_CHUNK):
        descriptors, inputs, labels = _stack(domains[start : start + EVAL_CHUNK])
        errors.extend(domain_error_rates(model.logits(descriptors, inputs), labels))
    return errors


def evaluate(domains: Sequence[Domain], model: Scorable, *, allow_untrained: bool = False) -> float:
    """Unweighted mean error rate over ``domains``."""
    if not domains:
        raise UsageError("evaluate needs at least one domain")
    return statistics.fmean(per_domain_errors(domains, model, allow_untrained=allow_untrained))


def _cosine(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return F.cosine_similarity(a, b, dim=-1).clamp(-1.0, 1.0)


def _canonical_order(descriptors: torch.Tensor) -> torch.Tensor:
    """Rows sorted lexicographically, so sampling does not depend on input order."""
    keys = descriptors.numpy()
    order = np.lexsort(keys.T[::-1])
    return descriptors[torch.as_tensor(order, dtype=torch.int64)]


def _sample_tuples(count: int, size: int, samples: int, seed: int) -> list[tuple[int, ...]]:
    """Ordered tuples of distinct indices; all of them when there are no more than ``samples``."""
    total = math.perm(count, size)
    if total <= samples:
        if size == 2:
            return [(i, j) for i in range(count) for j in range(count) if i != j]
        return [
            (i, j, k)
            for i in range(count)
            for j in range(count)
            for k in range(count)
            if len({i, j, k}) == 3
        ]
    rng = numpy_rng(derive_seed(seed, "structure", size))
    return [tuple(int(v) for v in rng.choice(count, size=size, replace=False)) for _ in range(samples)]


def verify_structure(
    descriptors: torch.Tensor,
    state: TrainedState,
    triplet_samples: int = 2000,
    *,
    pair_samples: int = 2000,
    min_samples: int = 100,
    seed: int = 0,
) -> StructureReport:
    """Identity, associativity and invertibility cosines of the trained operator.

    ``theta(z)`` is the parameter inferred at each descriptor. Transports
    between test descriptors are not chart-restricted.
    """
    require_trained(state)
    points = _canonical_order(as_tensor(descriptors))
    count = points.shape[0]
    if count < 3:
        raise UsageError("structure checks need at least three descriptors", context={"descriptors": count})
    op = state.operator
    triplets = _sample_tuples(count, 3, triplet_samples, seed)
    pairs = _sample_tuples(count, 2, pair_samples, seed)
    smallest = min(count, len(triplets), len(pairs))
    if smallest < min_samples:
        raise UsageError(
            f"structure checks need at least {min_samples} samples per property, got {smallest}",
            context={"descriptors": count, "triplets": len(triplets), "pairs": len(pairs)},
        )

    with torch.no_grad():
        thetas = infer_many(points, state)
        latents = op.encode(thetas)

        identity = _cosine(thetas, op(thetas, points, points))
        latent_identity = _cosine(latents, op.transport_embedding(latents, points, points))

        i, j, k = (torch.tensor(column, dtype=torch.int64) for column in zip(*triplets))
        via = op(op(thetas[i], points[i], points[j]), points[j], points[k])
        direct = op(thetas[i], points[i], points[k])
        associativity = _cosine(via, direct)
        move = op.transport_embedding
        latent_via = move(move(latents[i], points[i], points[j]), points[j], points[k])
        latent_associativity = _cosine(latent_via, move(latents[i], points[i], points[k]))

        a, b = (torch.tensor(column, dtype=torch.int64) for column in zip(*pairs))
        round_trip = op(op(thetas[a], points[a], points[b]), points[b], points[a])
        invertibility = _cosine(round_trip, thetas[a])
        latent_round = move(move(latents[a], points[a], points[b]), points[b], points[a])
        latent_invertibility = _cosine(latent_round, latents[a])

    report = StructureReport(
        identity_cos=float(identity.mean()),
        associativity_cos=float(associativity.mean()),
        invertibility_cos=float(invertibility.mean()),
        identity_n=count,
        associativity_n=len(triplets),
        invertibility_n=len(pairs),
        latent_identity_cos=float(latent_identity.mean()),
        latent_associativity_cos=float(latent_associativity.mean()),
        latent_invertibility_cos=float(latent_invertibility.mean()),
    )
    log.info("structure verified", extra={name: value for name, value, _, _ in report.rows()})
    return report


def _run_parallel(tasks: Sequence[Callable[[], Any]], jobs: int) -> list[Any]:
    if jobs <= 1 or len(tasks) <= 1:
        return [task() for task in tasks]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda task: task(), tasks))


def _train_and_score(
    dataset: DatasetConfig,
    train_config: TrainConfig,
    arch: ArchConfig,
    seed: int,
    imperfection: ImperfectionSpec | None,
) -> tuple[float, list[float]]:
    data = dataset.generate(seed=seed, imperfection=imperfection)
    config = replace(
        train_config,
        seed=seed,
        minibatch_domains=min(train_config.minibatch_domains, len(data.train)),
    )
    state = train(data.train, config, arch=arch)
    return evaluate(data.evaluation, state), [h.total for h in state.history]


def imperfection_variants(kind: str) -> list[tuple[str, bool, bool]]:
    """``(variant, gated, charted)`` pairs compared by an imperfection sweep."""
    if kind == INCOMPLETE:
        return [("charted", True, True), ("no_chart", True, False)]
    if kind in (NOISY, REDUNDANT):
        return [("gated", True, True), ("no_gate", False, True)]
    raise UsageError(f"unknown imperfection kind '{kind}'", context={"kind": kind})


def imperfection_sweep(
    kind: str,
    levels: Sequence[int],
    seeds: Sequence[int],
    gated: bool = True,
    charted: bool = True,
    *,
    config: ExperimentConfig,
    variant: str | None = None,
    jobs: int = 1,
) -> SweepResult:
    """Retrain and evaluate one gate/chart variant at each imperfection level."""
    if kind not in (NOISY, REDUNDANT, INCOMPLETE):
        raise UsageError(f"unknown imperfection kind '{kind}'", context={"kind": kind})
    label = variant or ("gated" if gated else "no_gate") + ("" if charted else "+no_chart")
    flags = replace(config.train.ablation, no_gate=not gated, no_chart=not charted)
    train_config = replace(config.train, ablation=flags)
    grid = [(level, seed) for level in levels for seed in seeds]

    def task(level: int, seed: int) -> Callable[[], tuple[float, list[float]]]:
        spec = ImperfectionSpec.from_level(kind, int(level), seed=seed)
        return lambda: _train_and_score(config.dataset, train_config, config.arch, seed, spec)

    outcomes = _run_parallel([task(level, seed) for level, seed in grid], jobs)
    points = []
    curves = {}
    for (level, seed), (error, history) in zip(grid, outcomes):
        log.info("sweep point", extra={"sweep": kind, "level": level, "variant": label, "seed": seed, "error": error})
        points.append(SweepPoint(float(level), label, seed, error))
        curves[(float(level), label, seed)] = history
    return SweepResult(kind, tuple(points), curves)


def imperfection_comparison(
    kind: str, levels: Sequence[int], seeds: Sequence[int], *, config: ExperimentConfig, jobs: int = 1
) -> SweepResult:
    """Both variants of :func:`imperfection_variants` over the same levels and seeds."""
    result: SweepResult | None = None
    for variant, gated, charted in imperfection_variants(kind):
        part = imperfection_sweep(kind, levels, seeds, gated, charted, config=config, variant=variant, jobs=jobs)
        result = part if result is None else result.merged(part)
    assert result is not None
    return result


def domain_count_sweep(
    counts: Sequence[int],
    seeds: Sequence[int],
    *,
    config: ExperimentConfig,
    jobs: int = 1,
) -> SweepResult:
    """Retrain on fresh uniform samples of each size and evaluate on the fixed mesh.

    Small counts shrink the chart size and minibatch to fit.
    """
    counts = [int(c) for c in counts]
    if counts != sorted(counts):
        raise UsageError("domain counts must be ascending", context={"counts": counts})
    dataset = config.dataset
    mesh = sample_descriptor_sets(0, 0, dataset.mesh_per_axis, dataset.bounds, dataset.seed).mesh
    mesh_domains = make_domains(
        mesh, dataset.seed, n_per_class=dataset.n_per_class, noise_std=dataset.noise_std, scale_law=dataset.scale_law
    )

    def task(count: int, seed: int) -> Callable[[], tuple[float, list[float]]]:
        def run() -> tuple[float, list[float]]:
            sample_seed = derive_seed(seed, "domains", count)
            train_z = sample_descriptor_sets(count, 0, 0, dataset.bounds, sample_seed).train
            domains = make_domains(
                train_z,
                dataset.seed,
                n_per_class=dataset.n_per_class,
                noise_std=dataset.noise_std,
                scale_law=dataset.scale_law,
            )
            train_config = replace(
                config.train,
                seed=seed,
                k=min(config.train.k, count - 1),
                minibatch_domains=min(config.train.minibatch_domains, count),
            )
            state = train(domains, train_config, arch=config.arch)
            return evaluate(mesh_domains, state), [h.total for h in state.history]

        return run

    grid = [(count, seed) for count in counts for seed in seeds]
    outcomes = _run_parallel([task(count, seed) for count, seed in grid], jobs)
    points = []
    curves = {}
    for (count, seed), (error, history) in zip(grid, outcomes):
        log.info("sweep point", extra={"sweep": "domains", "level": count, "seed": seed, "error": error})
        points.append(SweepPoint(float(count), "full", seed, error))
        curves[(float(count), "full", seed)] = history
    return SweepResult("domains", tuple(points), curves)


def convergence_spearman(result: SweepResult, variant: str = "full") -> float:
    """Rank correlation between the swept value and its mean error."""
    levels = [level for level, *_ in result.curve(variant)]
    means = [mean for _, mean, _, _ in result.curve(variant)]
    if len(levels) < 2:
        raise UsageError("rank correlation needs at least two sweep values", context={"values": levels})
    return float(spearmanr(levels, means).statistic)


def _with_sensitivity(config: ExperimentConfig, parameter: str, value: int) -> ExperimentConfig:
    if parameter == "num_bases":
        return replace(config, arch=replace(config.arch, num_bases=value))
    if parameter == "field_hidden":
        return replace(config, arch=replace(config.arch, field_hidden=value))
    if parameter == "latent_dim":
        return replace(config, arch=config.arch.with_latent_dim(value))
    if parameter == "k":
        return replace(config, train=replace(config.train, k=value))
    raise UsageError(f"unknown sensitivity parameter '{parameter}'", context={"parameter": parameter})


def sensitivity_sweep(
    parameter: str,
    values: Sequence[int],
    seeds: Sequence[int],
    *,
    config: ExperimentConfig,
    jobs: int = 1,
) -> SweepResult:
    """Retrain the full model with one hyperparameter varied."""
    grid = [(int(value), seed) for value in values for seed in seeds]

    def task(value: int, seed: int) -> Callable[[], tuple[float, list[float]]]:
        varied = _with_sensitivity(config, parameter, value)
        return lambda: _train_and_score(varied.dataset, varied.train, varied.arch, seed, None)

    outcomes = _run_parallel([task(value, seed) for value, seed in grid], jobs)
    points = []
    curves = {}
    for (value, seed), (error, history) in zip(grid, outcomes):
        log.info("sweep point", extra={"sweep": parameter, "level": value, "seed": seed, "error": error})
        points.append(SweepPoint(float(value), "full", seed, error))
        curves[(float(value), "full", seed)] = history
    return SweepResult(parameter, tuple(points), curves)


_ABLATION_MODELS = {
    "full": AblationFlags(),
    "plain": AblationFlags(plain=True),
    "no_lie": AblationFlags(no_lie=True),
}


def fit_model(name: str, train_domains: Sequence[Domain], train_config: TrainConfig, arch: ArchConfig) -> Scorable:
    """Train one named model: the full operator, an ablation, or a baseline."""
    if name in _ABLATION_MODELS:
        flags = replace(
            train_config.ablation,
            plain=_ABLATION_MODELS[name].plain,
            no_lie=_ABLATION_MODELS[name].no_lie,
        )
        return train(train_domains, replace(train_config, ablation=flags), arch=arch)
    if name in FITTERS:
        return FITTERS[name](train_domains, train_config, arch=arch)
    raise UsageError(f"unknown model '{name}'", context={"model": name})


def compare_models(
    seeds: Sequence[int],
    *,
    config: ExperimentConfig,
    models: Iterable[str] | None = None,
    jobs: int = 1,
) -> list[ModelResult]:
    """Every requested model on the same split per seed."""
    names = list(models or config.eval.models)
    grid = [(seed, name) for seed in seeds for name in names]
    splits = {seed: config.dataset.generate(seed=seed) for seed in seeds}

    def task(seed: int, name: str) -> Callable[[], float]:
        data = splits[seed]
        train_config = replace(config.train, seed=seed)
        return lambda: evaluate(data.evaluation, fit_model(name, data.train, train_config, config.arch))

    errors = _run_parallel([task(seed, name) for seed, name in grid], jobs)
    results = []
    for (seed, name), error in zip(grid, errors):
        log.info("model compared", extra={"model": name, "seed": seed, "error": error})
        results.append(ModelResult(name, seed, error))
    return results


def model_means(results: Sequence[ModelResult]) -> dict[str, float]:
    """Seed-mean error per model, in first-seen order."""
    grouped: dict[str, list[float]] = {}
    for result in results:
        grouped.setdefault(result.model, []).append(result.error)
    return {name: statistics.fmean(errors) for name, errors in grouped.items()}


def _model_failures(thresholds: Thresholds, results: Sequence[ModelResult]) -> dict[str, dict[str, float]]:
    means = model_means(results)
    failures: dict[str, dict[str, float]] = {}
    full = means.get("full")
    if full is not None and thresholds.max_test_error is not None and not full <= thresholds.max_test_error:
        failures["full_error"] = {"value": full, "limit": thresholds.max_test_error}
    for name, floor in (("erm", thresholds.min_erm_error), ("no_lie", thresholds.min_no_lie_error)):
        value = means.get(name)
        if floor is not None and value is not None and not value >= floor:
            failures[f"{name}_error"] = {"value": value, "limit": floor}
    for chain in thresholds.model_orderings:
        present = [name for name in chain if name in means]
        for lower, upper in zip(present, present[1:]):
            if not means[lower] < means[upper]:
                failures[f"order_{lower}_{upper}"] = {"value": means[lower], "limit": means[upper]}
    return failures


def _level_mean(sweep: SweepResult, level: float, variant: str) -> float | None:
    if not sweep.errors(level, variant):
        log.warning("threshold level not swept", extra={"sweep": sweep.axis, "level": level, "variant": variant})
        return None
    return sweep.mean_error(level, variant)


def _gain_failure(sweep: SweepResult, level: float, better: str, worse: str) -> dict[str, dict[str, float]]:
    kept = _level_mean(sweep, level, better)
    dropped = _level_mean(sweep, level, worse)
    if kept is None or dropped is None or kept < dropped:
        return {}
    return {f"{sweep.axis}_{better}_gain": {"value": kept, "limit": dropped}}


def _sweep_failures(thresholds: Thresholds, sweep: SweepResult) -> dict[str, dict[str, float]]:
    failures: dict[str, dict[str, float]] = {}
    if sweep.axis == NOISY:
        level = float(thresholds.noisy_level)
        if thresholds.max_noisy_gated_error is not None:
            gated = _level_mean(sweep, level, "gated")
            if gated is not None and not gated <= thresholds.max_noisy_gated_error:
                failures["noisy_gated_error"] = {"value": gated, "limit": thresholds.max_noisy_gated_error}
        if thresholds.require_imperfection_gain:
            failures.update(_gain_failure(sweep, level, "gated", "no_gate"))
    elif sweep.axis == INCOMPLETE:
        if thresholds.require_imperfection_gain:
            failures.update(_gain_failure(sweep, float(thresholds.incomplete_level), "charted", "no_chart"))
    elif sweep.axis == REDUNDANT:
        limit = thresholds.max_redundant_error
        means = [sweep.mean_error(level, v) for level in sweep.values for v in sweep.variants if sweep.errors(level, v)]
        if limit is not None and means and not max(means) <= limit:
            failures["redundant_error"] = {"value": max(means), "limit": limit}
    elif sweep.axis == "domains":
        for count, limit in thresholds.domain_error_limits:
            value = _level_mean(sweep, float(count), "full")
            if value is not None and not value <= limit:
                failures[f"domains_{count}_error"] = {"value": value, "limit": limit}
        limit = thresholds.max_domain_spearman
        if limit is not None and len(sweep.values) > 1:
            rho = convergence_spearman(sweep)
            if not rho <= limit:
                failures["domain_spearman"] = {"value": rho, "limit": limit}
    return failures


def check_thresholds(
    thresholds: Thresholds,
    *,
    error: float | None = None,
    report: StructureReport | None = None,
    models: Sequence[ModelResult] | None = None,
    sweep: SweepResult | None = None,
) -> None:
    """Raise :class:`ThresholdError` listing every requested check that failed."""
    failures: dict[str, dict[str, float]] = {}
    if error is not None and thresholds.max_test_error is not None and not error <= thresholds.max_test_error:
        failures["test_error"] = {"value": error, "limit": thresholds.max_test_error}
    if report is not None:
        for name in STRUCTURE_PROPERTIES:
            limit = getattr(thresholds, f"min_{name}_cos")
            value = getattr(report, f"{name}_cos")
            if limit is not None and not value >= limit:
                failures[f"{name}_cos"] = {"value": value, "limit": limit}
    if models is not None:
        failures.update(_model_failures(thresholds, models))
    if sweep is not None:
        failures.update(_sweep_failures(thresholds, sweep))
    if failures:
        raise ThresholdError(
            f"acceptance threshold(s) failed: {', '.join(sorted(failures))}",
            context={"failures": failures},
        )


def gate_magnitudes(state: TrainedState, descriptors: torch.Tensor) -> list[float]:
    """Median ``|m(z)|`` per descriptor coordinate."""
    with torch.no_grad():
        mask = state.operator.gate.mask(as_tensor(descriptors))
    return [float(v) for v in mask.abs().median(dim=0).values]


def manifold_mesh(bounds: Sequence[Sequence[float]], per_axis: int) -> torch.Tensor:
    return sample_descriptor_sets(0, 0, per_axis, bounds, 0).mesh


def export_manifold(
    grid: torch.Tensor,
    state: TrainedState,
    *,
    components: int = 3,
    per_axis: int | None = None,
) -> ManifoldExport:
    """Infer theta on every mesh descriptor and project the set with PCA."""
    require_trained(state)
    grid = as_tensor(grid)
    thetas = infer_many(grid, state)
    projection = pca_project(thetas, components)
    side = per_axis if per_axis is not None else int(round(math.sqrt(grid.shape[0])))
    return ManifoldExport(
        descriptors=grid,
        components=projection.components,
        projected=projection.projected,
        explained_variance_ratio=projection.explained_variance_ratio,
        per_axis=side,
    )


def adjacency_smoothness(export: ManifoldExport, *, samples: int = 2000, seed: int = 0) -> tuple[float, float]:
    """Mean projected distance between mesh neighbours, and between random non-adjacent pairs."""
    side = export.per_axis
    projected = export.projected
    count = projected.shape[0]
    if side < 2 or side * side != count:
        raise UsageError("smoothness needs a square mesh of side 2 or more", context={"rows": count, "per_axis": side})
    adjacent = []
    for row in range(side):
        for col in range(side):
            index = row * side + col
            if col + 1 < side:
                adjacent.append((index, index + 1))
            if row + 1 < side:
                adjacent.append((index, index + side))
    adjacent_set = set(adjacent)
    rng = numpy_rng(derive_seed(seed, "smoothness"))
    random_pairs: list[tuple[int, int]] = []
    while len(random_pairs) < samples:
        a, b = (int(v) for v in rng.choice(count, size=2, replace=False))
        if (min(a, b), max(a, b)) not in adjacent_set:
            random_pairs.append((a, b))

    def mean_distance(pairs: list[tuple[int, int]]) -> float:
        left = torch.tensor([a for a, _ in pairs], dtype=torch.int64)
        right = torch.tensor([b for _, b in pairs], dtype=torch.int64)
        return float(torch.linalg.vector_norm(projected[left] - projected[right], dim=-1).mean())

    return mean_distance(adjacent), mean_distance(random_pairs)


__all__ = (
    "ManifoldExport",
    "ModelResult",
    "STRUCTURE_PROPERTIES",
    "StructureReport",
    "SweepPoint",
    "SweepResult",
    "adjacency_smoothness",
    "check_thresholds",
    "compare_models",
    "convergence_spearman",
    "domain_count_sweep",
    "evaluate",
    "export_manifold",
    "fit_model",
    "gate_magnitudes",
    "imperfection_comparison",
    "imperfection_sweep",
    "imperfection_variants",
    "manifold_mesh",
    "model_means",
    "per_domain_errors",
    "sensitivity_sweep",
    "verify_structure",
)
