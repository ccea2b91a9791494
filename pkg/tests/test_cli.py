import json
import logging

import numpy as np
import pytest

from src.cli import build_parser, config_from_args, float_list, int_list, main


class TestListParsing:
    def test_single_value(self):
        assert int_list("5") == 5
        assert float_list("-20") == -20.0

    def test_comma_list(self):
        assert int_list("2,5") == [2, 5]

    def test_inclusive_ranges(self):
        assert int_list("1:5") == [1, 2, 3, 4, 5]
        assert float_list("-30:-10:5") == [-30.0, -25.0, -20.0, -15.0, -10.0]
        assert float_list("0:25:5") == [0.0, 5.0, 10.0, 15.0, 20.0, 25.0]

    def test_negative_values_need_equals_sign(self):
        args = build_parser().parse_args(["run", "--sigma-h-db=-30:-20:5"])
        assert args.sigma_h_db == [-30.0, -25.0, -20.0]


class TestConfigFromArgs:
    def test_figure_preset_with_overrides(self):
        args = build_parser().parse_args(["figure", "3", "--trials", "7", "--seed", "42"])
        cfg = config_from_args(args)
        assert cfg.scenario == "fig3_sinr_vs_target"
        assert cfg.trials == 7
        assert cfg.master_seed == 42

    def test_threads_from_environment(self, monkeypatch):
        monkeypatch.setenv("WIRETAP_THREADS", "3")
        cfg = config_from_args(build_parser().parse_args(["run"]))
        assert cfg.threads == 3

    def test_flag_beats_environment(self, monkeypatch):
        monkeypatch.setenv("WIRETAP_THREADS", "3")
        cfg = config_from_args(build_parser().parse_args(["run", "--threads", "1"]))
        assert cfg.threads == 1


class TestMain:
    def test_zero_trials_is_a_config_error(self, tmp_path, caplog):
        with caplog.at_level(logging.ERROR):
            code = main(["run", "--trials", "0", "--out-dir", str(tmp_path), "--quiet"])
        assert code == 1
        assert "trials must be ≥ 1" in caplog.text

    def test_figure_is_reproducible(self, tmp_path):
        first, second = tmp_path / "a", tmp_path / "b"
        for out in (first, second):
            assert main(["figure", "3", "--seed", "42", "--trials", "3", "--out-dir", str(out), "--quiet"]) == 0
        table = "fig3_sinr_vs_target_table.csv"
        assert (first / table).read_bytes() == (second / table).read_bytes()
        assert (first / "results.csv").exists()
        assert (first / "manifest.json").exists()

    def test_manifest_reproduces_run(self, tmp_path):
        first, second = tmp_path / "a", tmp_path / "b"
        argv = ["run", "--na", "3", "--target-sinr-db", "10,20", "--schemes", "perfect,naive", "--trials", "3"]
        assert main(argv + ["--format", "json", "--out-dir", str(first), "--quiet"]) == 0
        manifest = json.loads((first / "manifest.json").read_text())
        assert manifest["config"]["na"] == 3
        assert manifest["master_seed"] == 0
        rerun = ["run", "--config", str(first / "manifest.json"), "--format", "json", "--out-dir", str(second), "--quiet"]
        assert main(rerun) == 0
        assert (first / "results.json").read_text() == (second / "results.json").read_text()

    def test_table_columns(self, tmp_path):
        assert main(["run", "--trials", "2", "--schemes", "perfect", "--out-dir", str(tmp_path), "--quiet"]) == 0
        header = (tmp_path / "custom_table.csv").read_text().splitlines()[0]
        assert header.split(",")[:7] == ["axis", "scheme", "metric", "unit", "mean", "stderr", "outage_fraction"]

    def test_predict(self, capsys):
        assert main(["predict", "--na", "5", "--nb", "5", "--sigma-h-db", "-20", "--target-sinr-db", "20", "--seed", "1", "--quiet"]) == 0
        out = capsys.readouterr().out
        line = next(l for l in out.splitlines() if l.startswith("predicted naive"))
        assert float(line.split()[2]) <= 20.0

    def test_predict_wrong_orientation(self):
        assert main(["predict", "--na", "2", "--nb", "3", "--quiet"]) == 2

    def test_missing_config_file(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "nope.json"), "--quiet"]) == 1

    def test_malformed_config_file(self, tmp_path, caplog):
        path = tmp_path / "broken.json"
        path.write_text("{trials: 3")
        with caplog.at_level(logging.ERROR):
            assert main(["run", "--config", str(path), "--quiet"]) == 1
        assert "not valid JSON" in caplog.text

    def test_numerical_failures_are_not_config_errors(self, tmp_path, monkeypatch):
        def singular(*args, **kwargs):
            raise np.linalg.LinAlgError("Singular matrix")

        monkeypatch.setattr("src.cli.run_scenario", singular)
        assert main(["run", "--trials", "1", "--out-dir", str(tmp_path), "--quiet"]) == 2

    def test_programming_errors_propagate(self, tmp_path, monkeypatch):
        def broken(*args, **kwargs):
            raise ValueError("operands could not be broadcast together")

        monkeypatch.setattr("src.cli.run_scenario", broken)
        with pytest.raises(ValueError, match="broadcast"):
            main(["run", "--trials", "1", "--out-dir", str(tmp_path), "--quiet"])

    def test_validate(self, capsys):
        assert main(["validate", "--quiet"]) == 0
        assert "FAIL" not in capsys.readouterr().out

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit):
            main(["plot"])
