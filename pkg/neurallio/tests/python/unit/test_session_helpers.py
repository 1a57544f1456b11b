"""Unit tests for run session helpers and the results reader."""
from __future__ import annotations

import json
from pathlib import Path

import pytest

from neurallio import results, session
from neurallio.config import ExperimentConfig
from neurallio.errors import ArtifactError


def test_start_run_writes_resolved_config(tmp_path: Path) -> None:
    out = tmp_path / "run"

    run = session.start_run(out, ExperimentConfig(), "eval")

    try:
        resolved = json.loads((out / session.RESOLVED_CONFIG).read_text(encoding="utf-8"))
        assert resolved["output_dir"] == str(out)
        assert run.config_hash == ExperimentConfig().config_hash()
        assert session.active_run() is run
        assert len(run.run_id) == 12
    finally:
        run.finish()
    assert session.active_run() is None


def test_failed_session_stays_active(tmp_path: Path) -> None:
    with pytest.raises(RuntimeError):
        with session.start_run(tmp_path / "run", ExperimentConfig(), "train"):
            raise RuntimeError("boom")

    run = session.active_run()
    assert run is not None and run.command == "train"
    run.finish()


def test_start_run_rejects_a_file(tmp_path: Path) -> None:
    target = tmp_path / "taken"
    target.write_text("not a directory", encoding="utf-8")

    with pytest.raises(ArtifactError) as excinfo:
        session.start_run(target, ExperimentConfig(), "eval")

    assert excinfo.value.code == session.ERR_UNWRITABLE_PATH


def test_write_csv_uses_hash_line_crlf_and_exact_floats(tmp_path: Path) -> None:
    path = session.write_csv(
        tmp_path / "out.csv",
        ["name", "value", "flag", "missing"],
        [["a,b", 0.1, True, None], ["plain", 3, False, ""]],
        config_hash="abc",
    )

    raw = path.read_bytes()
    assert raw.startswith(b"# config_hash=abc\r\nname,value,flag,missing\r\n")
    assert b'"a,b",0.10000000000000001,true,\r\n' in raw
    assert raw.endswith(b"plain,3,false,\r\n")


def test_atomic_write_leaves_no_temporary_files(tmp_path: Path) -> None:
    target = tmp_path / "nested" / "file.txt"

    session.atomic_write(target, "first")
    session.atomic_write(target, "second")

    assert target.read_text(encoding="utf-8") == "second"
    assert [p.name for p in target.parent.iterdir()] == ["file.txt"]


def test_atomic_write_reports_unwritable_parent(tmp_path: Path) -> None:
    blocker = tmp_path / "blocker"
    blocker.write_text("", encoding="utf-8")

    with pytest.raises(ArtifactError) as excinfo:
        session.atomic_write(blocker / "child.txt", "text")

    assert excinfo.value.code == session.ERR_UNWRITABLE_PATH


def test_format_cell_variants() -> None:
    assert session.format_cell(True) == "true"
    assert session.format_cell(None) == ""
    assert session.format_cell(1.5) == "1.5"
    assert session.format_cell(7) == "7"
    assert float(session.format_cell(1 / 3)) == 1 / 3


def test_load_results_round_trip(tmp_path: Path) -> None:
    path = session.write_csv(tmp_path / "r.csv", ["level", "error"], [[1, 2.5], [2, 1 / 3]], config_hash="h1")

    table = results.load_results(path)

    assert table.config_hash == "h1"
    assert table.header == ("level", "error")
    assert len(table) == 2
    assert table.floats("error") == [2.5, 1 / 3]
    assert list(table.records())[0] == {"level": "1", "error": "2.5"}


def test_load_results_rejects_missing_hash_line(tmp_path: Path) -> None:
    path = tmp_path / "bad.csv"
    path.write_text("level,error\r\n1,2\r\n", encoding="utf-8")

    with pytest.raises(ArtifactError) as excinfo:
        results.load_results(path)

    assert excinfo.value.code == results.ERR_MALFORMED_ARTIFACT


def test_load_results_rejects_ragged_rows(tmp_path: Path) -> None:
    path = tmp_path / "ragged.csv"
    path.write_text("# config_hash=x\r\na,b\r\n1,2\r\n3\r\n", encoding="utf-8")

    with pytest.raises(ArtifactError) as excinfo:
        results.load_results(path)

    assert excinfo.value.context["line"] == 4


def test_load_results_missing_file(tmp_path: Path) -> None:
    with pytest.raises(ArtifactError) as excinfo:
        results.load_results(tmp_path / "absent.csv")

    assert excinfo.value.code == "ERR_MISSING_ARTIFACT"


def test_non_numeric_and_unknown_columns(tmp_path: Path) -> None:
    path = session.write_csv(tmp_path / "r.csv", ["model", "error"], [["full", "n/a"]], config_hash="h")
    table = results.load_results(path)

    with pytest.raises(ArtifactError):
        table.floats("error")
    with pytest.raises(ArtifactError):
        table.column("seed")


def test_summarize_groups_in_first_seen_order(tmp_path: Path) -> None:
    rows = [["b", 0, 1.0], ["a", 0, 4.0], ["b", 1, 3.0], ["a", 1, 4.0]]
    path = session.write_csv(tmp_path / "s.csv", ["model", "seed", "error"], rows, config_hash="h")

    summary = results.summarize(results.load_results(path), ["model"], "error")

    assert [g.key for g in summary] == [("b",), ("a",)]
    assert summary[0].mean == pytest.approx(2.0)
    assert summary[0].std == pytest.approx(1.0)
    assert summary[1].std == 0.0
    assert summary[1].count == 2
