import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.exceptions.lab import BlowupError
from app.schemas.fields import FlowState, SpectralScalarField, SpectralVectorField
from app.schemas.ledger import RunLedger
from app.schemas.littlewood_paley import BesovProfile
from app.schemas.solver import RunResult, StepperConfig
from app.services.acoustic import AcousticServices
from app.services.littlewood_paley import LittlewoodPaleyServices
from app.services.snapshots import SnapshotServices
from app.services.spectral import SpectralServices

logger = logging.getLogger(__name__)

TINY = 1e-12


def _shift(state: FlowState, f: SpectralVectorField, g: SpectralScalarField, h: float) -> FlowState:
    return state.model_copy(update={"v": state.v + f.scale(h), "c": state.c + g.scale(h)})


def _is_finite(state: FlowState) -> bool:
    return all(np.all(np.isfinite(m.modes)) for m in (state.v.x, state.v.y, state.c))


def next_stop(t: float, dt: float, T: float, checkpoints: Sequence[float]) -> Tuple[float, Optional[float]]:
    """Step size clipped to land on the next checkpoint or on T, with the exact landing time."""
    stop = min([s for s in checkpoints if s > t + TINY] + [T])
    if t + dt >= stop - TINY:
        return stop - t, stop
    return dt, None


class CompressibleServices:
    @staticmethod
    def rhs_nonlinear(
        state: FlowState, project_incompressible: bool = False
    ) -> Tuple[SpectralVectorField, SpectralScalarField]:
        """f = -v.grad v - gbar c grad c, g = -v.grad c - gbar c div v."""
        grid, gbar = state.grid, state.gamma_bar
        to_physical = SpectralServices.to_physical
        vx, vy = to_physical(state.v)
        c = to_physical(state.c)
        dvx = to_physical(SpectralServices.grad(state.v.x))
        dvy = to_physical(SpectralServices.grad(state.v.y))
        dc = to_physical(SpectralServices.grad(state.c))
        div_v = dvx[0] + dvy[1]
        fx = -(vx * dvx[0] + vy * dvx[1]) - gbar * c * dc[0]
        fy = -(vx * dvy[0] + vy * dvy[1]) - gbar * c * dc[1]
        g = -(vx * dc[0] + vy * dc[1]) - gbar * c * div_v
        f = SpectralServices.from_physical(np.stack([fx, fy]), grid)
        g = SpectralServices.from_physical(g, grid)
        if project_incompressible:
            return SpectralServices.leray_P(f), SpectralScalarField.zeros(grid)
        return f, g

    @staticmethod
    def stable_dt(state: FlowState, config: StepperConfig) -> float:
        """Advective CFL only; the acoustic part is integrated exactly."""
        if config.fixed_dt is not None:
            return config.fixed_dt
        speed = SpectralServices.lp_norm(state.v, np.inf) + state.gamma_bar * SpectralServices.lp_norm(
            state.c, np.inf
        )
        return min(config.max_dt, config.cfl * state.grid.spacing / (speed + TINY))

    @staticmethod
    def _rk4_nonlinear(state: FlowState, dt: float, config: StepperConfig) -> FlowState:
        def rhs(s):
            return CompressibleServices.rhs_nonlinear(s, config.project_incompressible)

        f1, g1 = rhs(state)
        f2, g2 = rhs(_shift(state, f1, g1, dt / 2))
        f3, g3 = rhs(_shift(state, f2, g2, dt / 2))
        f4, g4 = rhs(_shift(state, f3, g3, dt))
        f = f1 + f2.scale(2.0) + f3.scale(2.0) + f4
        g = g1 + g2.scale(2.0) + g3.scale(2.0) + g4
        return _shift(state, f, g, dt / 6.0)

    @staticmethod
    def step(state: FlowState, config: StepperConfig, dt: Optional[float] = None) -> FlowState:
        """Strang splitting: exact acoustic half step, RK4 nonlinear step, exact acoustic half step."""
        dt = CompressibleServices.stable_dt(state, config) if dt is None else dt
        if config.acoustic:
            state = AcousticServices.acoustic_exact_step(state, dt / 2)
        if config.nonlinear:
            state = CompressibleServices._rk4_nonlinear(state, dt, config)
        if config.acoustic:
            state = AcousticServices.acoustic_exact_step(state, dt / 2)
        if config.dealias_every_step:
            state = state.model_copy(
                update={"v": SpectralServices.dealias(state.v), "c": SpectralServices.dealias(state.c)}
            )
        state = state.model_copy(update={"time": state.time + dt})
        if not _is_finite(state):
            raise BlowupError(state.time, "non-finite values")
        return state

    @staticmethod
    def duhamel_history(
        initial: FlowState, T: float, dt: float, config: StepperConfig = StepperConfig()
    ) -> Tuple[List[FlowState], List[SpectralVectorField]]:
        """States at every step of a fixed-dt run and the acoustic forcing of each."""
        if T <= 0 or dt <= 0:
            raise ValueError(f"run length and step must be positive, got T={T}, dt={dt}")
        state = initial.model_copy(
            update={"v": SpectralServices.dealias(initial.v), "c": SpectralServices.dealias(initial.c)}
        )
        states = [state]
        while state.time < T - TINY:
            step, landed = next_stop(state.time, dt, T, ())
            state = CompressibleServices.step(state, config, step)
            if landed is not None:
                state = state.model_copy(update={"time": landed})
            states.append(state)
        sources = []
        for state in states:
            f, g = CompressibleServices.rhs_nonlinear(state, config.project_incompressible)
            sources.append(AcousticServices.acoustic_source(SpectralServices.dealias(f), SpectralServices.dealias(g)))
        return states, sources

    @staticmethod
    def diagnostics(state: FlowState, profile: Optional[BesovProfile] = None) -> Dict[str, float]:
        norm = SpectralServices.lp_norm
        besov = LittlewoodPaleyServices.besov_norm
        inf = np.inf
        grad_v = [SpectralServices.grad(state.v.x), SpectralServices.grad(state.v.y)]
        grad_c = SpectralServices.grad(state.c)
        div_v = SpectralServices.div(state.v)
        omega = SpectralServices.curl2d(state.v)
        qv = SpectralServices.leray_Q(state.v)
        pair = [state.v, state.c]
        return {
            "t": state.time,
            "grad_v_inf": norm(grad_v, inf),
            "grad_c_inf": norm(grad_c, inf),
            "div_v_inf": norm(div_v, inf),
            "omega_inf": norm(omega, inf),
            "energy_l2": norm(pair, 2),
            "v_l2": norm(state.v, 2),
            "besov_2_2_1": besov(pair, 2, 2, 1),
            "besov_hetero": (
                np.nan if profile is None
                else LittlewoodPaleyServices.besov_norm_hetero(pair, 2, 2, 1, profile)
            ),
            "omega_b0_inf1": besov(omega, 0, inf, 1),
            "div_b0_inf1": besov(div_v, 0, inf, 1),
            "grad_c_b0_inf1": besov(grad_c, 0, inf, 1),
            "qv_inf": norm(qv, inf),
            "c_inf": norm(state.c, inf),
            "acoustic_inf": norm([div_v, grad_c], inf),
            "qv_c_inf": norm([qv, state.c], inf),
            "div_b_half_4_1": besov(div_v, 0.5, 4, 1),
        }

    @staticmethod
    def write_snapshot(state: FlowState, directory: Path, label: str) -> Path:
        vx, vy = SpectralServices.to_physical(state.v)
        c = SpectralServices.to_physical(state.c)
        return SnapshotServices.write(Path(directory) / f"{label}.mlf", state.grid, [vx, vy, c])

    @staticmethod
    def run(
        initial: FlowState,
        T: float,
        config: StepperConfig = StepperConfig(),
        ledger: Optional[RunLedger] = None,
        checkpoints: Sequence[float] = (),
        snapshot_dir: Optional[Path] = None,
        snapshot_stride: int = 0,
    ) -> RunResult:
        if T <= 0:
            raise ValueError(f"run length must be positive, got {T}")
        ledger = ledger if ledger is not None else RunLedger.compressible(f"eps={initial.eps:g}")
        logger.info(f"Compressible run {ledger.run_id}: eps={initial.eps:g}, n={initial.grid.n}, T={T:g}")

        state = initial
        ledger.append(CompressibleServices.diagnostics(state, config.profile))
        saved = [(state.time, state)] if any(abs(s - state.time) <= TINY for s in checkpoints) else []
        steps = 0
        while state.time < T - TINY:
            dt, landed = next_stop(state.time, CompressibleServices.stable_dt(state, config), T, checkpoints)
            try:
                state = CompressibleServices.step(state, config, dt)
            except BlowupError as e:
                logger.warning(f"Run {ledger.run_id}: {e.message}")
                raise BlowupError(e.time, e.reason, ledger)
            if landed is not None:
                state = state.model_copy(update={"time": landed})
            steps += 1
            row = CompressibleServices.diagnostics(state, config.profile)
            ledger.append(row)
            logger.debug(f"step {steps}: t={state.time:.6g} dt={dt:.3g} grad_v={row['grad_v_inf']:.4g}")

            if row["grad_v_inf"] > config.grad_threshold:
                logger.warning(f"Run {ledger.run_id}: gradient threshold crossed at t={state.time:.6g}")
                raise BlowupError(state.time, f"||grad v||_inf={row['grad_v_inf']:.4g}", ledger)
            if row["besov_2_2_1"] > config.besov_threshold:
                logger.warning(f"Run {ledger.run_id}: Besov threshold crossed at t={state.time:.6g}")
                raise BlowupError(state.time, f"||(v,c)||_B221={row['besov_2_2_1']:.4g}", ledger)

            if landed is not None and any(abs(s - state.time) <= TINY for s in checkpoints):
                saved.append((state.time, state))
                if snapshot_dir is not None:
                    CompressibleServices.write_snapshot(state, snapshot_dir, f"checkpoint_t{state.time:.6f}")
            if snapshot_dir is not None and snapshot_stride > 0 and steps % snapshot_stride == 0:
                CompressibleServices.write_snapshot(state, snapshot_dir, f"step_{steps:06d}")

        logger.info(f"Compressible run {ledger.run_id} finished: {steps} steps, t={state.time:.6g}")
        return RunResult(final=state, ledger=ledger, steps=steps, checkpoints=saved)
