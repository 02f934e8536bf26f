import logging

import numpy as np
import pytest

from app.schemas.fields import IncompressibleState
from app.schemas.ledger import INCOMPRESSIBLE_COLUMNS
from app.schemas.solver import StepperConfig
from app.services.incompressible import IncompressibleServices
from app.services.initial_data import InitialDataServices
from app.services.spectral import SpectralServices


@pytest.fixture
def vortex_pair_state(grid32) -> IncompressibleState:
    return IncompressibleServices.from_velocity(InitialDataServices.vortex_pair(grid32, amplitude=0.5))


class TestVelocity:
    def test_velocity_recovers_vorticity(self, vortex_pair_state):
        v = IncompressibleServices.velocity_from_vorticity(vortex_pair_state.omega)
        omega = SpectralServices.curl2d(v)
        np.testing.assert_allclose(omega.modes, vortex_pair_state.omega.modes, atol=1e-14)
        assert SpectralServices.lp_norm(SpectralServices.div(v)) <= 1e-13

    def test_non_mean_free_vorticity_warns(self, grid32, caplog):
        omega = SpectralServices.from_physical(np.ones((32, 32)), grid32)
        with caplog.at_level(logging.WARNING):
            IncompressibleServices.velocity_from_vorticity(omega)
        assert "inv_laplacian" in caplog.text

    def test_state_rejects_vorticity_with_mean(self, grid32):
        omega = SpectralServices.from_physical(1.0 + np.zeros((32, 32)), grid32)
        with pytest.raises(ValueError, match="zero mean"):
            IncompressibleState(omega=omega)

    def test_state_accepts_round_off_mean(self, vortex_pair_state):
        modes = vortex_pair_state.omega.modes.copy()
        modes[0, 0] = 1e-15
        state = IncompressibleState(omega=vortex_pair_state.omega.with_modes(modes))
        assert state.omega.modes[0, 0] == 1e-15


class TestSolver:
    def test_taylor_green_is_steady(self, grid32):
        state = IncompressibleServices.from_velocity(InitialDataServices.taylor_green(grid32))
        result = IncompressibleServices.run_incompressible(state, 0.2, StepperConfig(max_dt=0.02))
        np.testing.assert_allclose(result.final.omega.modes, state.omega.modes, atol=1e-12)

    def test_energy_and_enstrophy_are_conserved(self, vortex_pair_state):
        result = IncompressibleServices.run_incompressible(vortex_pair_state, 0.2)
        for column in ("energy_l2", "omega_l2"):
            values = result.ledger.column(column)
            np.testing.assert_allclose(values, values[0], rtol=1e-8)

    def test_ledger_and_checkpoints(self, vortex_pair_state):
        result = IncompressibleServices.run_incompressible(vortex_pair_state, 0.05, checkpoints=(0.0, 0.025))
        assert result.ledger.columns == INCOMPRESSIBLE_COLUMNS
        assert result.final.time == 0.05
        assert result.at(0.0) is not None
        assert result.at(0.025) is not None
        assert result.ledger.final("grad_v_l1") > 0

    def test_snapshots_written_at_checkpoints(self, vortex_pair_state, tmp_path):
        IncompressibleServices.run_incompressible(vortex_pair_state, 0.02, checkpoints=(0.01,), snapshot_dir=tmp_path)
        assert [p.name for p in tmp_path.glob("*.mlf")] == ["reference_t0.010000.mlf"]

    def test_rejects_non_positive_length(self, vortex_pair_state):
        with pytest.raises(ValueError):
            IncompressibleServices.run_incompressible(vortex_pair_state, -1.0)
