import pytest
from click.testing import CliRunner

from app.cli import cli
from app.schemas.experiment import EXPERIMENTS
from app.services.experiments import EXIT_CONFIG, EXIT_PASS


@pytest.fixture
def runner():
    return CliRunner()


def _config(tmp_path, text):
    path = tmp_path / "run.cfg"
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestCli:
    def test_every_experiment_is_a_command(self, runner):
        result = runner.invoke(cli, ["--help"])
        assert result.exit_code == 0
        for name in EXPERIMENTS + ("serve",):
            assert name in result.output

    def test_config_error_exits_with_config_code(self, runner, tmp_path):
        result = runner.invoke(cli, ["lifespan-table", "--config", _config(tmp_path, "n=48\n")])
        assert result.exit_code == EXIT_CONFIG
        assert "Config error at line 1" in result.output

    def test_config_for_another_experiment(self, runner, tmp_path):
        result = runner.invoke(cli, ["selftest", "--config", _config(tmp_path, "experiment=transport-log\n")])
        assert result.exit_code == EXIT_CONFIG

    def test_threads_must_be_positive(self, runner):
        result = runner.invoke(cli, ["selftest", "--threads", "0"])
        assert result.exit_code == 2
        assert "--threads" in result.output

    def test_run_prints_summary_and_run_directory(self, runner, tmp_path):
        config = _config(tmp_path, "n=32\neps=0.5,0.25\nT=0.05\nprofile=exp:1\n")
        result = runner.invoke(cli, ["lifespan-table", "--config", config, "--out", str(tmp_path / "runs")])
        assert result.exit_code == EXIT_PASS
        assert "PASS lifespan_table" in result.output
        assert f"run directory: {tmp_path / 'runs'}" in result.output
