"""Command implementations behind the ``neurallio`` subcommands.

Each command opens a run in its output directory, does its work through the
library modules and writes CSV results before any figure. Figures are then
rendered from those CSV files, so :func:`render_from_csv` can rebuild them
later without rerunning anything.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import torch

from . import evalsuite
from .artifacts import load_checkpoint, load_dataset, save_checkpoint, save_dataset
from .config import SENSITIVITY_PARAMETERS, ExperimentConfig, SweepSpec
from .datagen import IMPERFECTION_KINDS
from .errors import ThresholdError, UsageError
from .plots import render_convergence, render_loss_history, render_manifold, render_sweep
from .results import load_results, summarize
from .session import RunSession, start_run
from .trainer import COMPONENTS, TrainedState, require_trained, train

log = logging.getLogger(__name__)

DATA_DIR = "data"
CHECKPOINT_DIR = "checkpoint"
DATASET_NAME = "2moons"

LOSS_HISTORY = "loss_history.csv"
TRACKED_ERRORS = "test_error_history.csv"
RESULTS_MAIN = "results_main.csv"
RESULTS_SUMMARY = "results_summary.csv"
DOMAIN_ERRORS = "errors_by_domain.csv"
STRUCTURE = "structure.csv"
MANIFOLD = "manifold.csv"
MANIFOLD_SUMMARY = "manifold_summary.csv"
LOSS_CURVES_DOMAINS = "loss_curves_domains.csv"
CONVERGENCE_SUMMARY = "convergence_summary.csv"
SWEEP_HEADER = ("level", "variant", "seed", "error")


@dataclass(frozen=True)
class ReproReport:
    identical: bool
    first: Path
    second: Path


def _data_dir(session: RunSession, data_dir: Path | None) -> Path:
    return Path(data_dir).expanduser() if data_dir is not None else session.path(DATA_DIR)


def _checkpoint_dir(session: RunSession, checkpoint_dir: Path | None) -> Path:
    return Path(checkpoint_dir).expanduser() if checkpoint_dir is not None else session.path(CHECKPOINT_DIR)


def cmd_generate(config: ExperimentConfig, out_dir: Path) -> Path:
    """Generate train, test and mesh domains into ``<out>/data``."""
    with start_run(out_dir, config, "generate") as session:
        data = config.dataset.generate()
        return save_dataset(
            session.path(DATA_DIR),
            data,
            seed=config.dataset.seed,
            config_hash=session.config_hash,
            imperfection=config.dataset.imperfection,
        )


def cmd_train(config: ExperimentConfig, out_dir: Path, *, data_dir: Path | None = None) -> Path:
    """Train on a generated dataset and write the checkpoint plus the loss history."""
    with start_run(out_dir, config, "train") as session:
        data = load_dataset(_data_dir(session, data_dir))
        tracker = None
        if config.train.track_every:
            evaluation = data.evaluation

            def tracker(state: TrainedState) -> float:
                return evalsuite.evaluate(evaluation, state, allow_untrained=True)

        state = train(data.train, config.train, arch=config.arch, tracker=tracker)
        checkpoint = save_checkpoint(session.path(CHECKPOINT_DIR), state, config_hash=session.config_hash)
        history_csv = session.write_csv(
            LOSS_HISTORY,
            ("epoch", *COMPONENTS, "total"),
            (
                [epoch, *(getattr(loss, name) for name in COMPONENTS), loss.total]
                for epoch, loss in enumerate(state.history, start=1)
            ),
        )
        if state.tracked:
            session.write_csv(TRACKED_ERRORS, ("epoch", "test_error"), state.tracked)
        _render_loss_history(history_csv, session.path("loss_history.svg"))
        return checkpoint


def _load_trained(session: RunSession, checkpoint_dir: Path | None) -> TrainedState:
    return require_trained(load_checkpoint(_checkpoint_dir(session, checkpoint_dir)))


def cmd_eval(
    config: ExperimentConfig,
    out_dir: Path,
    *,
    data_dir: Path | None = None,
    checkpoint_dir: Path | None = None,
) -> float:
    """Mean error over the test and mesh domains; raises :class:`ThresholdError` past ``max_test_error``."""
    with start_run(out_dir, config, "eval") as session:
        state = _load_trained(session, checkpoint_dir)
        data = load_dataset(_data_dir(session, data_dir))
        test_errors = evalsuite.per_domain_errors(data.test, state)
        mesh_errors = evalsuite.per_domain_errors(data.mesh, state)
        combined = [*test_errors, *mesh_errors]
        if not combined:
            raise UsageError("the dataset has no test or mesh domains")
        error = sum(combined) / len(combined)
        session.write_csv(
            DOMAIN_ERRORS,
            ("id", "split", "error"),
            [
                *([d.id, "test", e] for d, e in zip(data.test, test_errors)),
                *([d.id, "mesh", e] for d, e in zip(data.mesh, mesh_errors)),
            ],
        )
        session.write_csv(
            RESULTS_MAIN,
            ("model", "dataset", "seed", "error"),
            [[state.config.ablation.label, DATASET_NAME, state.config.seed, error]],
        )
        log.info(
            "evaluated",
            extra={"error": error, "test_domains": len(test_errors), "mesh_domains": len(mesh_errors)},
        )
        evalsuite.check_thresholds(config.eval.thresholds, error=error)
        return error


def cmd_verify(
    config: ExperimentConfig,
    out_dir: Path,
    *,
    data_dir: Path | None = None,
    checkpoint_dir: Path | None = None,
) -> evalsuite.StructureReport:
    """Structure cosines over the test descriptors, written to ``structure.csv``."""
    with start_run(out_dir, config, "verify") as session:
        state = _load_trained(session, checkpoint_dir)
        data = load_dataset(_data_dir(session, data_dir))
        descriptors = [d.descriptor for d in data.test]
        if not descriptors:
            raise UsageError("structure checks need test domains")
        report = evalsuite.verify_structure(
            torch.stack(descriptors),
            state,
            config.eval.triplet_samples,
            pair_samples=config.eval.pair_samples,
            min_samples=config.eval.min_structure_samples,
            seed=config.seed,
        )
        session.write_csv(STRUCTURE, ("property", "mean_cos", "n", "latent_mean_cos"), report.rows())
        evalsuite.check_thresholds(config.eval.thresholds, report=report)
        return report


def cmd_manifold(config: ExperimentConfig, out_dir: Path, *, checkpoint_dir: Path | None = None) -> Path:
    """Infer theta on a dense mesh, project with PCA and write CSV then SVG."""
    with start_run(out_dir, config, "manifold") as session:
        state = _load_trained(session, checkpoint_dir)
        if state.train_descriptors.shape[1] != len(config.dataset.bounds):
            raise UsageError(
                "manifold export needs a model trained on clean descriptors",
                context={"descriptor_dim": state.train_descriptors.shape[1]},
            )
        per_axis = config.eval.manifold_per_axis
        mesh = evalsuite.manifold_mesh(config.dataset.bounds, per_axis)
        export = evalsuite.export_manifold(
            mesh, state, components=config.eval.manifold_components, per_axis=per_axis
        )
        dims = mesh.shape[1]
        header = (*(f"z{i + 1}" for i in range(dims)), *(f"pc{i + 1}" for i in range(export.projected.shape[1])))
        csv_path = session.write_csv(MANIFOLD, header, export.rows())
        adjacent, random_pairs = evalsuite.adjacency_smoothness(export, seed=config.seed)
        summary = [
            *([f"explained_variance_pc{i + 1}", float(v)] for i, v in enumerate(export.explained_variance_ratio)),
            ["adjacent_mean_distance", adjacent],
            ["random_mean_distance", random_pairs],
        ]
        session.write_csv(MANIFOLD_SUMMARY, ("metric", "value"), summary)
        _render_manifold(csv_path, session.path("manifold.svg"))
        return csv_path


def cmd_ablate(config: ExperimentConfig, out_dir: Path, *, models: Sequence[str] | None = None) -> Path:
    """Full model, transport ablations and baselines on the same split per seed.

    Results and the per-model summary are written before the ordering and
    floor thresholds are checked.
    """
    with start_run(out_dir, config, "ablate") as session:
        results = evalsuite.compare_models(config.eval.seeds, config=config, models=models, jobs=config.jobs)
        path = session.write_csv(
            RESULTS_MAIN,
            ("model", "dataset", "seed", "error"),
            ([r.model, DATASET_NAME, r.seed, r.error] for r in results),
        )
        groups = summarize(load_results(path), ("model",), "error")
        session.write_csv(
            RESULTS_SUMMARY,
            ("model", "mean_error", "std_error", "n"),
            ([g.key[0], g.mean, g.std, g.count] for g in groups),
        )
        evalsuite.check_thresholds(config.eval.thresholds, models=results)
        return path


def parse_sweep_kind(text: str) -> tuple[str, str | None]:
    """``noisy``, ``redundant``, ``incomplete``, ``domains`` or ``sensitivity:PARAM``."""
    kind, _, parameter = text.partition(":")
    kind = kind.strip().lower()
    if kind == "sensitivity":
        if parameter not in SENSITIVITY_PARAMETERS:
            raise UsageError(
                f"sensitivity sweeps take one of: {', '.join(SENSITIVITY_PARAMETERS)}",
                context={"parameter": parameter},
            )
        return kind, parameter
    if parameter or kind not in (*IMPERFECTION_KINDS, "domains"):
        raise UsageError(f"unknown sweep '{text}'", context={"sweep": text})
    return kind, None


def _sweep_spec(config: ExperimentConfig, kind: str, parameter: str | None, levels: Sequence[int] | None) -> SweepSpec:
    name = f"sensitivity_{parameter}" if parameter else kind
    configured = config.eval.sweep(name)
    if levels:
        return SweepSpec(kind, tuple(float(level) for level in levels), parameter)
    if configured is None or not configured.levels:
        raise UsageError(f"no levels configured for sweep '{name}'", context={"sweep": name})
    return configured


def cmd_sweep(
    config: ExperimentConfig,
    out_dir: Path,
    kind: str,
    *,
    levels: Sequence[int] | None = None,
) -> Path:
    """Run one sweep, write ``sweep_<name>.csv`` plus its figure, then check its thresholds."""
    kind, parameter = parse_sweep_kind(kind)
    spec = _sweep_spec(config, kind, parameter, levels)
    seeds = config.eval.seeds
    with start_run(out_dir, config, "sweep") as session:
        if kind in IMPERFECTION_KINDS:
            result = evalsuite.imperfection_comparison(
                kind, spec.int_levels(), seeds, config=config, jobs=config.jobs
            )
        elif kind == "domains":
            result = evalsuite.domain_count_sweep(spec.int_levels(), seeds, config=config, jobs=config.jobs)
        else:
            assert parameter is not None
            result = evalsuite.sensitivity_sweep(
                parameter, spec.int_levels(), seeds, config=config, jobs=config.jobs
            )
        csv_path = session.write_csv(
            f"sweep_{spec.name}.csv",
            SWEEP_HEADER,
            ([int(p.level), p.variant, p.seed, p.error] for p in result.points),
        )
        if kind == "domains":
            session.write_csv(
                LOSS_CURVES_DOMAINS,
                ("level", "seed", "epoch", "loss"),
                (
                    [int(level), seed, epoch, loss]
                    for (level, _, seed), curve in result.loss_curves.items()
                    for epoch, loss in enumerate(curve, start=1)
                ),
            )
            summary = [["spearman", evalsuite.convergence_spearman(result)]] if len(result.values) > 1 else []
            session.write_csv(CONVERGENCE_SUMMARY, ("metric", "value"), summary)
            _render_convergence(csv_path, session.path(LOSS_CURVES_DOMAINS), session.path("convergence.svg"))
        else:
            _render_sweep(csv_path, session.path(f"sweep_{spec.name}.svg"), xlabel=parameter or kind)
        evalsuite.check_thresholds(config.eval.thresholds, sweep=result)
        return csv_path


def cmd_repro(config: ExperimentConfig, out_dir: Path) -> ReproReport:
    """Generate and train twice from the same config and compare ``loss_history.csv`` byte for byte."""
    runs = []
    for label in ("a", "b"):
        run_dir = Path(out_dir) / "repro" / label
        cmd_generate(config, run_dir)
        cmd_train(config, run_dir)
        runs.append(run_dir / LOSS_HISTORY)
    identical = runs[0].read_bytes() == runs[1].read_bytes()
    report = ReproReport(identical, runs[0], runs[1])
    log.info("repro compared", extra={"identical": identical})
    if not identical:
        raise ThresholdError(
            "loss histories differ between two runs of the same config",
            code="ERR_NOT_REPRODUCIBLE",
            context={"first": str(runs[0]), "second": str(runs[1])},
        )
    return report


def _render_loss_history(csv_path: Path, svg_path: Path) -> Path:
    table = load_results(csv_path)
    series = {name: table.floats(name) for name in (*COMPONENTS, "total")}
    return render_loss_history(svg_path, series)


def _render_sweep(csv_path: Path, svg_path: Path, *, xlabel: str) -> Path:
    table = load_results(csv_path)
    curves: dict[str, list[tuple[float, float, float]]] = {}
    for group in summarize(table, ("variant", "level"), "error"):
        variant, level = group.key
        curves.setdefault(variant, []).append((float(level), group.mean, group.std))
    for points in curves.values():
        points.sort()
    return render_sweep(svg_path, curves, xlabel=xlabel, title=csv_path.stem)


def _render_convergence(csv_path: Path, loss_path: Path, svg_path: Path) -> Path:
    groups = summarize(load_results(csv_path), ("level",), "error")
    curve = sorted((float(g.key[0]), g.mean, g.std) for g in groups)
    losses = summarize(load_results(loss_path), ("level", "epoch"), "loss")
    loss_curves: dict[str, list[float]] = {}
    for group in losses:
        loss_curves.setdefault(group.key[0], []).append(group.mean)
    return render_convergence(svg_path, curve, loss_curves)


def _render_manifold(csv_path: Path, svg_path: Path) -> Path:
    table = load_results(csv_path)
    color = table.floats("z2") if "z2" in table.header else table.floats("z1")
    pc1 = table.floats("pc1")
    pc2 = table.floats("pc2") if "pc2" in table.header else [0.0] * len(pc1)
    return render_manifold(svg_path, pc1, pc2, color)


def render_from_csv(out_dir: Path) -> list[Path]:
    """Re-render every figure whose CSV exists under ``out_dir``."""
    out_dir = Path(out_dir)
    written = []
    if (out_dir / LOSS_HISTORY).is_file():
        written.append(_render_loss_history(out_dir / LOSS_HISTORY, out_dir / "loss_history.svg"))
    if (out_dir / MANIFOLD).is_file():
        written.append(_render_manifold(out_dir / MANIFOLD, out_dir / "manifold.svg"))
    for csv_path in sorted(out_dir.glob("sweep_*.csv")):
        name = csv_path.stem.removeprefix("sweep_")
        if name == "domains":
            if (out_dir / LOSS_CURVES_DOMAINS).is_file():
                written.append(
                    _render_convergence(csv_path, out_dir / LOSS_CURVES_DOMAINS, out_dir / "convergence.svg")
                )
            continue
        xlabel = name.removeprefix("sensitivity_")
        written.append(_render_sweep(csv_path, csv_path.with_suffix(".svg"), xlabel=xlabel))
    return written


__all__ = (
    "CHECKPOINT_DIR",
    "DATA_DIR",
    "ReproReport",
    "cmd_ablate",
    "cmd_eval",
    "cmd_generate",
    "cmd_manifold",
    "cmd_repro",
    "cmd_sweep",
    "cmd_train",
    "cmd_verify",
    "parse_sweep_kind",
    "render_from_csv",
)
