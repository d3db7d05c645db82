import json

import pytest
from click.testing import CliRunner

from src.commands import EXIT_CONFIG, EXIT_OK, EXIT_VERDICT
from src.main import cli


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


class TestCliSurface:
    def test_help_lists_subcommands(self, runner):
        result = runner.invoke(cli, ["--help"])
        assert result.exit_code == 0
        for name in ("scalar", "periodic-lqr", "schlogl", "counterexample", "dpp-check", "all"):
            assert name in result.output

    def test_unknown_subcommand(self, runner):
        assert runner.invoke(cli, ["nonsense"]).exit_code == 2

    def test_malformed_horizons(self, runner, tmp_path):
        result = runner.invoke(cli, ["scalar", "--horizons", "1,a", "--output", str(tmp_path)])
        assert result.exit_code == EXIT_CONFIG

    def test_window_needs_two_numbers(self, runner, tmp_path):
        result = runner.invoke(cli, ["scalar", "--window", "0,1,2", "--output", str(tmp_path)])
        assert result.exit_code == EXIT_CONFIG

    def test_window_beyond_shortest_horizon(self, runner, tmp_path):
        result = runner.invoke(
            cli, ["scalar", "--horizons", "1,2", "--window", "0,1.5", "--output", str(tmp_path)]
        )
        assert result.exit_code == EXIT_CONFIG

    def test_missing_config_file(self, runner, tmp_path):
        result = runner.invoke(cli, ["counterexample", "--config", str(tmp_path / "absent.ini")])
        assert result.exit_code == EXIT_CONFIG


class TestCounterexampleCommand:
    def test_writes_costs_and_report(self, runner, tmp_path):
        result = runner.invoke(cli, ["counterexample", "--y0", "1", "--output", str(tmp_path)])
        assert result.exit_code == EXIT_OK, result.output
        root = tmp_path / "counterexample"
        assert (root / "costs.csv").is_file()
        report = json.loads((root / "report.json").read_text())
        assert report["verdicts"]["closed_form_agreement"]["status"] == "passed"
        assert len(report["rows"]) == 3

    def test_outputs_are_byte_identical(self, runner, tmp_path):
        for name in ("first", "second"):
            result = runner.invoke(cli, ["counterexample", "--output", str(tmp_path / name)])
            assert result.exit_code == EXIT_OK
        for filename in ("costs.csv", "report.json"):
            first = (tmp_path / "first" / "counterexample" / filename).read_bytes()
            second = (tmp_path / "second" / "counterexample" / filename).read_bytes()
            assert first == second

    def test_json_logging(self, runner, tmp_path):
        result = runner.invoke(
            cli, ["--log-format", "json", "counterexample", "--horizons", "1", "--output", str(tmp_path)]
        )
        assert result.exit_code == EXIT_OK

    def test_config_file_sets_output(self, runner, tmp_path):
        config = tmp_path / "lab.ini"
        config.write_text(f"[general]\nlog_level = debug\n\n[harness]\noutput_dir = {tmp_path / 'from-file'}\n")
        result = runner.invoke(cli, ["counterexample", "--config", str(config)])
        assert result.exit_code == EXIT_OK, result.output
        assert (tmp_path / "from-file" / "counterexample" / "report.json").is_file()


class TestDppCheckCommand:
    def test_scalar_identity_passes(self, runner, tmp_path):
        result = runner.invoke(cli, ["dpp-check", "--family", "scalar", "--output", str(tmp_path)])
        assert result.exit_code == EXIT_OK, result.output
        assert (tmp_path / "dpp-scalar" / "dpp.csv").is_file()
        assert "dpp_identity: passed" in result.output

    def test_schlogl_has_no_reference(self, runner, tmp_path):
        result = runner.invoke(cli, ["dpp-check", "--family", "schlogl", "--output", str(tmp_path)])
        assert result.exit_code == EXIT_CONFIG

    def test_unknown_family(self, runner, tmp_path):
        result = runner.invoke(cli, ["dpp-check", "--family", "heat", "--output", str(tmp_path)])
        assert result.exit_code == 2


@pytest.mark.slow
class TestScalarCommand:
    def test_default_ladder(self, runner, tmp_path):
        result = runner.invoke(cli, ["scalar", "--output", str(tmp_path)])
        assert result.exit_code == EXIT_OK, result.output
        root = tmp_path / "scalar-n2"
        for tag in ("T1", "T2", "T3", "T4"):
            assert (root / f"trajectory_{tag}.csv").is_file()
        assert (root / "convergence.csv").is_file()
        assert (root / "report.json").is_file()

    def test_short_ladder_outputs_are_byte_identical(self, runner, tmp_path):
        args = ["scalar", "--horizons", "1,2", "--window", "0,1"]
        for name in ("first", "second"):
            result = runner.invoke(cli, args + ["--output", str(tmp_path / name)])
            assert result.exit_code in (EXIT_OK, EXIT_VERDICT), result.output
        first_root = tmp_path / "first" / "scalar-n2"
        second_root = tmp_path / "second" / "scalar-n2"
        files = sorted(p.name for p in first_root.iterdir())
        assert files == sorted(p.name for p in second_root.iterdir())
        assert {"report.json", "convergence.csv", "trajectory_T1.csv", "trajectories_y.svg"} <= set(files)
        for filename in files:
            assert (first_root / filename).read_bytes() == (second_root / filename).read_bytes(), filename


@pytest.mark.slow
class TestPeriodicLqrCommand:
    def test_outputs_are_byte_identical(self, runner, tmp_path):
        args = ["periodic-lqr", "--chi", "0", "--horizons", "1,2", "--window", "0,1"]
        for name in ("first", "second"):
            result = runner.invoke(cli, args + ["--output", str(tmp_path / name)])
            assert result.exit_code in (EXIT_OK, EXIT_VERDICT), result.output
        first_root = tmp_path / "first" / "periodic-lqr-chi0"
        second_root = tmp_path / "second" / "periodic-lqr-chi0"
        files = sorted(p.name for p in first_root.iterdir())
        assert {"report.json", "riccati_periodic.csv", "trajectories_y1.svg", "trajectories_y2.svg"} <= set(files)
        for filename in files:
            assert (first_root / filename).read_bytes() == (second_root / filename).read_bytes(), filename
