import math

import numpy as np
import pytest

from app.config import get_settings
from app.exceptions.lab import ConfigError
from app.schemas.ledger import RunLedger
from app.schemas.solver import StepperConfig
from app.services.compressible import CompressibleServices
from app.services.experiments import (
    EXIT_PASS,
    ExperimentServices,
    RunDirectory,
    oracle_tolerance,
    sweep,
)
from app.services.initial_data import InitialDataServices
from app.services.littlewood_paley import LittlewoodPaleyServices
from app.services.spectral import SpectralServices
from app.services.transport import TransportServices, velocity_catalog

SMALL_LIFESPAN = """
# quick lifespan table
experiment = lifespan-table
n = 32
eps = 0.5, 0.25
T = 0.05
profile = exp:1   # closed form
"""


class TestParseConfig:
    def test_comments_and_defaults(self):
        config = ExperimentServices.parse_config(SMALL_LIFESPAN)
        assert config.experiment == "lifespan-table"
        assert config.n == 32
        assert config.eps == (0.5, 0.25)
        assert config.gamma == 1.4
        assert config.gamma_bar == pytest.approx(0.2)

    def test_command_supplies_experiment(self):
        config = ExperimentServices.parse_config("n=64\n", "selftest")
        assert config.experiment == "selftest"

    def test_canonical_text_parses_back(self):
        config = ExperimentServices.parse_config(SMALL_LIFESPAN)
        again = ExperimentServices.parse_config(config.canonical_text())
        assert again == config
        assert again.config_hash == config.config_hash

    def test_hash_changes_with_any_value(self):
        a = ExperimentServices.parse_config(SMALL_LIFESPAN)
        b = ExperimentServices.parse_config(SMALL_LIFESPAN.replace("T = 0.05", "T = 0.06"))
        assert len(a.config_hash) == 16
        assert a.config_hash != b.config_hash

    @pytest.mark.parametrize(
        "text, line, fragment",
        [
            ("experiment=selftest\nspeed=3\n", 2, "unknown key 'speed'"),
            ("experiment=selftest\nn=32\n\nn=64\n", 4, "duplicate key 'n'"),
            ("experiment=selftest\njust words\n", 2, "expected key=value"),
            ("experiment=selftest\nn=48\n", 2, "power of two"),
            ("experiment=selftest\neps=0.1,1.5\n", 2, "eps must be in (0,1]"),
            ("experiment=selftest\ninitial=hill\n", 2, "unknown initial data"),
            ("experiment=selftest\nprofile=power\n", 2, "needs an exponent"),
            ("experiment=warp-drive\n", 1, "unknown experiment"),
            ("n=32\n", 0, "missing required key"),
        ],
    )
    def test_first_offending_line_is_reported(self, text, line, fragment):
        with pytest.raises(ConfigError) as info:
            ExperimentServices.parse_config(text)
        assert info.value.line == line
        assert fragment in info.value.message

    def test_experiment_mismatch(self):
        with pytest.raises(ConfigError) as info:
            ExperimentServices.parse_config("experiment=selftest\n", "lifespan-table")
        assert info.value.line == 1

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(ConfigError):
            ExperimentServices.load_config(tmp_path / "missing.cfg", "selftest")


class TestCheckpoints:
    def test_interval_grid_ends_at_T(self):
        config = ExperimentServices.parse_config("experiment=incompressible-limit\nT=1\nsnapshot_interval=0.3\n")
        assert ExperimentServices.checkpoint_times(config) == (0.0, 0.3, 0.6, 0.9, 1.0)

    def test_rounding_does_not_drop_T(self):
        config = ExperimentServices.parse_config("experiment=incompressible-limit\nT=0.5\nsnapshot_interval=0.1\n")
        assert ExperimentServices.checkpoint_times(config) == (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)


class TestRunDirectory:
    def test_layout(self, tmp_path):
        out = RunDirectory(tmp_path / "run")
        for sub in ("ledgers", "reports", "plots", "snapshots"):
            assert (tmp_path / "run" / sub).is_dir()
        path = out.ledger(RunLedger.incompressible("eps=0.1/bad name"))
        assert path.parent == tmp_path / "run" / "ledgers"
        assert path.name == "eps=0.1_bad_name.csv"

    def test_oracle_tolerance_tightens_with_resolution(self):
        assert oracle_tolerance(64) > oracle_tolerance(256) > oracle_tolerance(512)


class TestRunExperiment:
    def test_lifespan_table_writes_run_directory(self, tmp_path):
        config = ExperimentServices.parse_config(SMALL_LIFESPAN)
        outcome = ExperimentServices.run_experiment(config, tmp_path)

        root = tmp_path / f"lifespan-table-{config.config_hash}"
        assert outcome.exit_code == EXIT_PASS
        assert outcome.run_dir == str(root)
        assert (root / "config.txt").read_text(encoding="utf-8") == config.canonical_text()
        summary = (root / "summary.txt").read_text(encoding="utf-8").splitlines()
        assert summary[0].startswith("PASS lifespan_table [bounds.lifespan_prediction]")
        assert (root / "reports" / "lifespan_table.csv").is_file()
        assert LittlewoodPaleyServices.read_profile(root / "profile.txt").values[0] == pytest.approx(math.exp(-1.0))
        for eps in ("0.5", "0.25"):
            ledger = RunLedger.from_csv(root / "ledgers" / f"lifespan-eps={eps}.csv")
            assert ledger.final("t") == pytest.approx(0.05)
            assert ledger.config_hash == config.config_hash


@pytest.fixture
def threads(monkeypatch):
    def use(count: int) -> None:
        monkeypatch.setenv("MACHLAB_THREADS", str(count))
        get_settings.cache_clear()

    yield use
    monkeypatch.setenv("MACHLAB_THREADS", "1")
    get_settings.cache_clear()


class TestThreadCountDeterminism:
    def _twice(self, threads, compute):
        results = []
        for count in (1, 4):
            threads(count)
            results.append(compute())
        return results

    def test_fft(self, threads, grid64):
        values = np.random.default_rng(5).standard_normal((2, grid64.n, grid64.n))
        one, four = self._twice(threads, lambda: SpectralServices.from_physical(values, grid64))
        assert np.array_equal(one.x.modes, four.x.modes)
        assert np.array_equal(one.y.modes, four.y.modes)
        back_one, back_four = self._twice(threads, lambda: SpectralServices.fft_inverse(one.x))
        assert np.array_equal(back_one, back_four)

    def test_compressible_sweep(self, threads, small_state):
        states = {eps: small_state(eps=eps) for eps in (0.2, 0.1, 0.05)}

        def run_all():
            return sweep(
                lambda eps: CompressibleServices.run(states[eps], 0.02, StepperConfig(fixed_dt=0.005)).ledger.rows,
                list(states),
            )

        one, four = self._twice(threads, run_all)
        for a, b in zip(one, four):
            assert np.array_equal(np.array(a), np.array(b), equal_nan=True)

    def test_transport_oracle(self, threads, grid32):
        f0 = InitialDataServices.transport_profile(grid32)
        velocity = velocity_catalog("compressible", grid32.box_length)

        def oracle():
            return TransportServices.solve_transport_oracle(f0, velocity, 0.2, substeps=20)

        one, four = self._twice(threads, oracle)
        assert np.array_equal(one, four)
