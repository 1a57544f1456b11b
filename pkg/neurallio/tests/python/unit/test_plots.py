"""Unit tests for the SVG renderers."""
from __future__ import annotations

from pathlib import Path

from neurallio import plots


def test_render_sweep_writes_svg(tmp_path: Path) -> None:
    curves = {"gated": [(0.0, 2.0, 0.5), (1.0, 3.0, 0.2)], "no_gate": [(0.0, 4.0, 0.0)]}

    path = plots.render_sweep(tmp_path / "sweep.svg", curves, xlabel="noise dims", title="noisy")

    text = path.read_text(encoding="utf-8")
    assert text.lstrip().startswith("<?xml")
    assert "<svg" in text
    assert "noise dims" in text


def test_rendering_is_byte_stable(tmp_path: Path) -> None:
    curves = {"full": [(5.0, 20.0, 1.0), (10.0, 12.0, 0.5)]}

    first = plots.render_sweep(tmp_path / "a.svg", curves, xlabel="domains").read_bytes()
    second = plots.render_sweep(tmp_path / "b.svg", curves, xlabel="domains").read_bytes()

    assert first == second


def test_render_loss_history_and_convergence(tmp_path: Path) -> None:
    loss = plots.render_loss_history(tmp_path / "loss.svg", {"total": [3.0, 2.0, 1.5], "recon": [1.0, 0.5, 0.2]})
    convergence = plots.render_convergence(
        tmp_path / "convergence.svg", [(5.0, 20.0, 2.0), (10.0, 10.0, 1.0)], {"5": [2.0, 1.0], "10": [1.5, 0.8]}
    )

    assert "<svg" in loss.read_text(encoding="utf-8")
    assert "training domains" in convergence.read_text(encoding="utf-8")


def test_render_manifold(tmp_path: Path) -> None:
    path = plots.render_manifold(tmp_path / "m.svg", [0.0, 1.0, 2.0], [1.0, 0.0, -1.0], [0.0, 5.0, 10.0])

    assert "PC1" in path.read_text(encoding="utf-8")


def test_empty_curves_still_render(tmp_path: Path) -> None:
    path = plots.render_sweep(tmp_path / "empty.svg", {"gated": []}, xlabel="level")

    assert path.is_file()
