import logging
from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np

from app.exceptions.lab import BlowupError
from app.schemas.fields import IncompressibleState, SpectralScalarField, SpectralVectorField
from app.schemas.ledger import RunLedger
from app.schemas.solver import RunResult, StepperConfig
from app.services.compressible import TINY, next_stop
from app.services.littlewood_paley import LittlewoodPaleyServices
from app.services.snapshots import SnapshotServices
from app.services.spectral import SpectralServices

logger = logging.getLogger(__name__)


class IncompressibleServices:
    """2D Euler in vorticity-stream form: d_t w + v.grad w = 0, v = perp grad inv_laplacian w."""

    @staticmethod
    def velocity_from_vorticity(omega: SpectralScalarField) -> SpectralVectorField:
        return SpectralServices.perp_grad(SpectralServices.inv_laplacian(omega))

    @staticmethod
    def from_velocity(v: SpectralVectorField, time: float = 0.0) -> IncompressibleState:
        """State whose velocity is the divergence-free part of v."""
        return IncompressibleState(omega=SpectralServices.curl2d(v), time=time)

    @staticmethod
    def rhs(omega: SpectralScalarField) -> SpectralScalarField:
        v = IncompressibleServices.velocity_from_vorticity(omega)
        grad = SpectralServices.grad(omega)
        advection = SpectralServices.multiply(v.x, grad.x) + SpectralServices.multiply(v.y, grad.y)
        return -advection

    @staticmethod
    def stable_dt(state: IncompressibleState, config: StepperConfig) -> float:
        if config.fixed_dt is not None:
            return config.fixed_dt
        speed = SpectralServices.lp_norm(IncompressibleServices.velocity_from_vorticity(state.omega), np.inf)
        return min(config.max_dt, config.cfl * state.grid.spacing / (speed + TINY))

    @staticmethod
    def step_incompressible(state: IncompressibleState, dt: float) -> IncompressibleState:
        omega = state.omega
        k1 = IncompressibleServices.rhs(omega)
        k2 = IncompressibleServices.rhs(omega + k1.scale(dt / 2))
        k3 = IncompressibleServices.rhs(omega + k2.scale(dt / 2))
        k4 = IncompressibleServices.rhs(omega + k3.scale(dt))
        increment = (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(dt / 6.0)
        omega = SpectralServices.dealias(omega + increment)
        if not np.all(np.isfinite(omega.modes)):
            raise BlowupError(state.time + dt, "non-finite vorticity")
        return IncompressibleState(omega=omega, time=state.time + dt)

    @staticmethod
    def diagnostics(state: IncompressibleState) -> Dict[str, float]:
        omega = state.omega
        v = IncompressibleServices.velocity_from_vorticity(omega)
        grad_v = [SpectralServices.grad(v.x), SpectralServices.grad(v.y)]
        return {
            "t": state.time,
            "omega_inf": SpectralServices.lp_norm(omega, np.inf),
            "omega_l2": SpectralServices.lp_norm(omega, 2),
            "energy_l2": SpectralServices.lp_norm(v, 2),
            "omega_b0_inf1": LittlewoodPaleyServices.besov_norm(omega, 0, np.inf, 1),
            "grad_v_inf": SpectralServices.lp_norm(grad_v, np.inf),
        }

    @staticmethod
    def run_incompressible(
        initial: IncompressibleState,
        T: float,
        config: StepperConfig = StepperConfig(),
        ledger: Optional[RunLedger] = None,
        checkpoints: Sequence[float] = (),
        snapshot_dir: Optional[Path] = None,
    ) -> RunResult:
        if T <= 0:
            raise ValueError(f"run length must be positive, got {T}")
        ledger = ledger if ledger is not None else RunLedger.incompressible("reference")
        logger.info(f"Incompressible run {ledger.run_id}: n={initial.grid.n}, T={T:g}")

        state = initial
        ledger.append(IncompressibleServices.diagnostics(state))
        saved = [(state.time, state)] if any(abs(s - state.time) <= TINY for s in checkpoints) else []
        steps = 0
        while state.time < T - TINY:
            dt, landed = next_stop(state.time, IncompressibleServices.stable_dt(state, config), T, checkpoints)
            try:
                state = IncompressibleServices.step_incompressible(state, dt)
            except BlowupError as e:
                logger.error(f"Run {ledger.run_id}: {e.message}")
                raise BlowupError(e.time, e.reason, ledger)
            if landed is not None:
                state = state.model_copy(update={"time": landed})
            steps += 1
            ledger.append(IncompressibleServices.diagnostics(state))
            if landed is not None and any(abs(s - state.time) <= TINY for s in checkpoints):
                saved.append((state.time, state))
                if snapshot_dir is not None:
                    v = SpectralServices.to_physical(IncompressibleServices.velocity_from_vorticity(state.omega))
                    SnapshotServices.write(
                        Path(snapshot_dir) / f"reference_t{state.time:.6f}.mlf", state.grid, [v[0], v[1]]
                    )

        logger.info(f"Incompressible run {ledger.run_id} finished: {steps} steps")
        return RunResult(final=state, ledger=ledger, steps=steps, checkpoints=saved)
