"""Tests for measure/config readers, run directories and the consolidated report."""

import json
import logging
import math

import numpy as np
import pytest

from conc_lab.errors import ConfigInvalid, InputMissing
from conc_lab.measures import make_measure
from conc_lab.models import CheckResult, ExperimentConfig, RunSummary
from conc_lab.parser import as_grid, load_config, parse_grid, read_measure, write_measure
from conc_lab.report import Report, ReportRow, build_report, csv_rows, render_markdown
from conc_lab.store import (
    SUMMARY_FILE,
    config_hash,
    format_float,
    load_summary,
    open_run,
    output_hashes,
    to_jsonable,
    validate_summary,
    write_error_summary,
)


# --- measure files ---

class TestReadMeasure:
    def test_round_trip(self, tmp_path):
        mu = make_measure([[0.0, 1.5], [2.0, -1.0]], [0.25, 0.75])
        path = write_measure(tmp_path / "mu.csv", mu)
        assert read_measure(path).equals(mu)

    def test_renormalizes_with_warning(self, tmp_path, caplog):
        path = tmp_path / "mu.csv"
        path.write_text("x1,weight\n0,1\n1,3\n")
        with caplog.at_level(logging.WARNING):
            mu = read_measure(path)
        np.testing.assert_allclose(mu.weights, [0.25, 0.75])
        assert "renormalizing" in caplog.text

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputMissing) as info:
            read_measure(tmp_path / "nope.csv")
        assert info.value.exit_code == 3

    @pytest.mark.parametrize(
        "text",
        ["", "x1,w\n0,1\n", "x1,weight\n", "x1,weight\n0,abc\n", "x1,x2,weight\n0,1\n"],
    )
    def test_malformed(self, tmp_path, text):
        path = tmp_path / "mu.csv"
        path.write_text(text)
        with pytest.raises(ConfigInvalid):
            read_measure(path)


# --- grids and configs ---

class TestGrids:
    def test_range_is_inclusive(self):
        np.testing.assert_allclose(parse_grid("0:1:0.25"), [0.0, 0.25, 0.5, 0.75, 1.0])

    def test_list(self):
        np.testing.assert_allclose(parse_grid("0.1, 0.2,0.4"), [0.1, 0.2, 0.4])

    @pytest.mark.parametrize("text", ["", "1:0:0.1", "0:1:0", "a:b:c", "1,x"])
    def test_malformed(self, text):
        with pytest.raises(ConfigInvalid):
            parse_grid(text)

    def test_as_grid_accepts_yaml_values(self):
        np.testing.assert_allclose(as_grid([1, 2]), [1.0, 2.0])
        np.testing.assert_allclose(as_grid(0.5), [0.5])
        np.testing.assert_allclose(as_grid("0:1:0.5"), [0.0, 0.5, 1.0])


class TestLoadConfig:
    def test_file_with_overrides(self, tmp_path):
        path = tmp_path / "exp.yaml"
        path.write_text(
            "command: rate\n"
            "inputs: [mu.csv]\n"
            "seed: 4\n"
            "parameters:\n"
            "  cost: quadratic\n"
            "  method: grid_oracle\n"
        )
        config = load_config(path, {"seed": 9, "inputs": [], "parameters": {"cost": "sg"}})
        assert config.command == "rate"
        assert config.seed == 9
        assert config.inputs == ["mu.csv"]
        assert config.parameters == {"cost": "sg", "method": "grid_oracle"}

    def test_defaults(self):
        config = load_config(None, {"command": "report"})
        assert config.seed == 0
        assert config.output_dir == "runs/latest"

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputMissing):
            load_config(tmp_path / "nope.yaml")

    def test_invalid_yaml(self, tmp_path):
        path = tmp_path / "exp.yaml"
        path.write_text("command: [rate\n")
        with pytest.raises(ConfigInvalid):
            load_config(path)

    def test_top_level_must_be_mapping(self, tmp_path):
        path = tmp_path / "exp.yaml"
        path.write_text("- rate\n")
        with pytest.raises(ConfigInvalid):
            load_config(path)

    @pytest.mark.parametrize(
        "overrides",
        [{"command": "teleport"}, {"command": "rate", "seed": -1}, {"command": "rate", "seed": 2**64}],
    )
    def test_validation(self, overrides):
        with pytest.raises(ConfigInvalid):
            load_config(None, overrides)


# --- run directories ---

class TestJson:
    def test_non_finite_floats(self):
        payload = to_jsonable({"a": math.inf, "b": -math.inf, "c": math.nan, "d": np.float64(0.5)})
        assert payload == {"a": "inf", "b": "-inf", "c": "nan", "d": 0.5}

    def test_arrays_and_models(self):
        check = CheckResult(name="x", passed=True, measured=np.float64(1.0))
        payload = to_jsonable({"v": np.arange(3), "check": check})
        assert payload["v"] == [0, 1, 2]
        assert payload["check"]["passed"] is True

    def test_format_float_round_trips(self):
        value = 0.1 + 0.2
        assert float(format_float(value)) == value

    def test_schema_rejects_unknown_status(self):
        payload = to_jsonable(RunSummary(command="rate", status="pass"))
        payload["status"] = "maybe"
        with pytest.raises(ConfigInvalid):
            validate_summary(payload)

    def test_config_hash_ignores_output_dir(self):
        a = ExperimentConfig(command="rate", output_dir="a")
        b = ExperimentConfig(command="rate", output_dir="b")
        c = ExperimentConfig(command="rate", seed=1)
        assert config_hash(a) == config_hash(b)
        assert config_hash(a) != config_hash(c)


class TestOpenRun:
    def test_success_replaces_directory(self, tmp_path):
        target = tmp_path / "run"
        target.mkdir()
        (target / "stale.txt").write_text("old")
        with open_run(target) as store:
            store.write_text("a.txt", "new")
            store.write_csv("t.csv", ["x", "y"], [(1, 0.5), (2, None)])
        assert sorted(p.name for p in target.iterdir()) == ["a.txt", "t.csv"]
        assert (target / "t.csv").read_text() == "x,y\n1,0.5\n2,\n"
        assert not (tmp_path / "run.partial").exists()

    def test_failure_keeps_previous_contents(self, tmp_path):
        target = tmp_path / "run"
        target.mkdir()
        (target / "stale.txt").write_text("old")
        with pytest.raises(RuntimeError):
            with open_run(target) as store:
                store.write_text("a.txt", "new")
                raise RuntimeError("boom")
        assert [p.name for p in target.iterdir()] == ["stale.txt"]
        assert not (tmp_path / "run.partial").exists()

    def test_plot_file(self, tmp_path):
        with open_run(tmp_path / "run") as store:
            store.write_plot("curve", [0.0, 0.5], [1.0, 2.0])
        assert (tmp_path / "run" / "plot_curve.dat").read_text() == "0 1\n0.5 2\n"

    def test_summary_metadata(self, tmp_path):
        config = ExperimentConfig(command="rate")
        with open_run(tmp_path / "run") as store:
            store.write_text("a.txt", "x")
            store.write_summary(RunSummary(command="rate", status="pass"), config)
        payload = json.loads((tmp_path / "run" / SUMMARY_FILE).read_text())
        assert payload["metadata"]["files"] == ["a.txt"]
        assert payload["metadata"]["config_hash"] == config_hash(config)
        assert load_summary(tmp_path / "run").status == "pass"

    def test_hashes_skip_metadata(self, tmp_path):
        for name in ("a", "b"):
            with open_run(tmp_path / name) as store:
                store.write_summary(RunSummary(command="rate", status="pass"))
        assert output_hashes(tmp_path / "a") == output_hashes(tmp_path / "b")

    def test_missing_summary(self, tmp_path):
        with pytest.raises(InputMissing):
            load_summary(tmp_path)


# --- consolidated report ---

class TestReport:
    def test_empty(self):
        report = build_report([])
        assert report.passed
        assert "No runs." in render_markdown(report)

    def test_mixed_runs(self, tmp_path):
        checks = [CheckResult(name="gap", passed=True, measured=0.0, threshold=1e-9)]
        with open_run(tmp_path / "good") as store:
            store.write_summary(RunSummary(command="transport", status="pass", checks=checks))
        write_error_summary(tmp_path / "bad", "rate", "no measure")

        report = build_report([tmp_path / "good", tmp_path / "bad"])
        assert not report.passed
        assert [row.check for row in report.failed] == ["error"]
        text = render_markdown(report)
        assert "1 of 2 checks pass." in text
        assert "**FAIL**" in text
        assert csv_rows(report)[0][2:4] == ["gap", True]

    def test_missing_run(self, tmp_path):
        with pytest.raises(InputMissing):
            build_report([tmp_path / "nope"])

    def test_grouped_by_check(self):
        report = Report([ReportRow("r1", "rate", "b", True), ReportRow("r2", "rate", "a", False)])
        assert list(report.by_check()) == ["a", "b"]
