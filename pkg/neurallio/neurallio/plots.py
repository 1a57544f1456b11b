"""SVG figures for sweep, convergence, loss and manifold results.

Every renderer takes plain numbers, so a figure can be rebuilt from the CSV
it belongs to. Figures are drawn on standalone :class:`~matplotlib.figure.Figure`
objects (no pyplot state), which keeps rendering safe from worker threads.
"""
from __future__ import annotations

import io
import logging
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib
from matplotlib.figure import Figure

from .session import atomic_write

log = logging.getLogger(__name__)

# Fixed salt and no date keep the SVG bytes stable across runs.
_RC = {"svg.hashsalt": "neurallio", "svg.fonttype": "none"}

Curve = Sequence[tuple[float, float, float]]


def _save(fig: Figure, path: Path) -> Path:
    buffer = io.BytesIO()
    with matplotlib.rc_context(_RC):
        fig.savefig(buffer, format="svg", bbox_inches="tight", metadata={"Date": None})
    target = atomic_write(Path(path), buffer.getvalue().decode("utf-8"))
    log.debug("figure written", extra={"path": str(target)})
    return target


def render_sweep(
    path: Path,
    curves: Mapping[str, Curve],
    *,
    xlabel: str,
    title: str = "",
    ylabel: str = "test error",
) -> Path:
    """Mean error vs swept value, one line per variant with std whiskers."""
    fig = Figure(figsize=(5.0, 3.6))
    ax = fig.add_subplot()
    for variant, points in curves.items():
        if not points:
            continue
        xs, means, stds = zip(*points)
        ax.errorbar(xs, means, yerr=stds, marker="o", capsize=3, label=variant)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    if len(curves) > 1:
        ax.legend()
    return _save(fig, path)


def render_loss_history(path: Path, series: Mapping[str, Sequence[float]], *, title: str = "training loss") -> Path:
    """Loss components per epoch on a log scale."""
    fig = Figure(figsize=(5.0, 3.6))
    ax = fig.add_subplot()
    for name, values in series.items():
        if values:
            ax.plot(range(1, len(values) + 1), values, label=name)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    if all(v > 0 for values in series.values() for v in values):
        ax.set_yscale("log")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(fontsize="small")
    return _save(fig, path)


def render_convergence(
    path: Path,
    curve: Curve,
    loss_curves: Mapping[str, Sequence[float]],
) -> Path:
    """Two panels: error vs number of training domains, and training loss per domain count."""
    fig = Figure(figsize=(10.0, 3.6))
    left, right = fig.subplots(1, 2)
    if curve:
        xs, means, stds = zip(*curve)
        left.errorbar(xs, means, yerr=stds, marker="o", capsize=3)
    left.set_xlabel("training domains")
    left.set_ylabel("test error")
    left.grid(alpha=0.3)
    for label, values in loss_curves.items():
        if values:
            right.plot(range(1, len(values) + 1), values, label=label)
    right.set_xlabel("epoch")
    right.set_ylabel("training loss")
    right.grid(alpha=0.3)
    if loss_curves:
        right.legend(title="domains", fontsize="small")
    return _save(fig, path)


def render_manifold(
    path: Path,
    pc1: Sequence[float],
    pc2: Sequence[float],
    color: Sequence[float],
    *,
    color_label: str = "z2",
) -> Path:
    """Projected parameters on the first two principal components, coloured by a descriptor coordinate."""
    fig = Figure(figsize=(4.6, 4.0))
    ax = fig.add_subplot()
    points = ax.scatter(pc1, pc2, c=color, cmap="viridis", s=14)
    fig.colorbar(points, ax=ax, label=color_label)
    ax.set_xlabel("PC1")
    ax.set_ylabel("PC2")
    ax.set_title("inferred parameter manifold")
    return _save(fig, path)


__all__ = (
    "render_convergence",
    "render_loss_history",
    "render_manifold",
    "render_sweep",
)
