"""Tests for ReportWriter."""

import json

import pandas as pd
import pytest

from lesets.reports import REPLICATES_COLUMNS, ReportWriter


def test_creates_output_directory(tmp_path):
    writer = ReportWriter(tmp_path / "nested" / "out")
    assert writer.output_dir.is_dir()


class TestWriteCsv:
    """Tests for ReportWriter.write_csv()."""

    def test_round_trip_with_header(self, tmp_path):
        frame = pd.DataFrame(
            [{"seed": 0, "mae": 1.5, "r2": 0.9, "epochs": 12, "wall_time_s": None, "status": "ok"}],
            columns=list(REPLICATES_COLUMNS),
        )
        path = ReportWriter(tmp_path).write_csv("replicates.csv", frame, REPLICATES_COLUMNS)
        assert path.read_text(encoding="utf-8") == "seed,mae,r2,epochs,wall_time_s,status\n0,1.5,0.9,12,,ok\n"

    def test_column_mismatch(self, tmp_path):
        frame = pd.DataFrame({"seed": [0], "mae": [1.0]})
        with pytest.raises(ValueError, match="do not match"):
            ReportWriter(tmp_path).write_csv("bad.csv", frame, REPLICATES_COLUMNS)

    def test_subdirectory(self, tmp_path):
        frame = pd.DataFrame({"epoch": [1], "train_loss": [0.5], "val_loss": [0.6], "lr": [1e-3]})
        path = ReportWriter(tmp_path).write_csv("learning_curves/replicate_0.csv", frame)
        assert path == tmp_path / "learning_curves" / "replicate_0.csv"
        assert path.exists()

    def test_unwritable_target(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x", encoding="utf-8")
        frame = pd.DataFrame({"a": [1]})
        with pytest.raises(OSError):
            ReportWriter(tmp_path).write_csv("file/inner.csv", frame)


def test_write_json_is_sorted_and_stable(tmp_path):
    writer = ReportWriter(tmp_path)
    a = writer.write_json("a.json", {"b": 1, "a": [1.25, None]}).read_bytes()
    b = writer.write_json("b.json", {"a": [1.25, None], "b": 1}).read_bytes()
    assert a == b
    assert json.loads(a) == {"a": [1.25, None], "b": 1}


def test_write_summary(tmp_path):
    path = ReportWriter(tmp_path).write_summary("Benchmark: rws", {"mae_mean": 0.0123456789, "r2_std": None, "n_ok": 3})
    assert path.read_text(encoding="utf-8").splitlines() == [
        "# Benchmark: rws",
        "",
        "| key | value |",
        "|---|---|",
        "| mae_mean | 0.0123457 |",
        "| r2_std |  |",
        "| n_ok | 3 |",
    ]
