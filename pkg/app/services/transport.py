import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import RectBivariateSpline

from app.config import get_settings
from app.exceptions.lab import BlowupError, GridError, LedgerError
from app.schemas.fields import Grid, SpectralScalarField, SpectralVectorField
from app.schemas.ledger import RunLedger
from app.schemas.reports import CheckReport
from app.schemas.transport import FlowMapCloud, SyntheticVelocity, TransportRun, VelocityMode
from app.services.calibration import CalibrationServices
from app.services.littlewood_paley import LittlewoodPaleyServices
from app.services.spectral import SpectralServices

logger = logging.getLogger(__name__)

INTERPOLATION_PAD = 8
LOG_ESTIMATE_P = 4


def velocity_catalog(name: str, box_length: float, amplitude: float = 0.5) -> SyntheticVelocity:
    """Named synthetic velocities; 'shear' is the only divergence-free member besides 'zero'."""
    catalog = {
        "zero": (VelocityMode(kind="zero"),),
        "shear": (VelocityMode(kind="shear", amplitude=amplitude, m=1),),
        "compressible": (VelocityMode(kind="compressible", amplitude=amplitude, kx=1, ky=1, frequency=2.0),),
        "superposition": (
            VelocityMode(kind="shear", amplitude=0.5 * amplitude, m=2),
            VelocityMode(kind="compressible", amplitude=amplitude, kx=2, ky=0, frequency=1.0),
            VelocityMode(kind="compressible", amplitude=0.5 * amplitude, kx=1, ky=2, frequency=3.0),
        ),
    }
    if name not in catalog:
        raise ValueError(f"unknown velocity {name}; expected one of {sorted(catalog)}")
    return SyntheticVelocity(name=name, modes=catalog[name], box_length=box_length)


def _rk4_substeps(velocity: SyntheticVelocity, x, y, t0: float, t1: float, substeps: int, direction: float):
    """Integrate dX/dt = v(t, X) from t0 to t1 carrying J = int div v(t, X) dt."""
    h = (t1 - t0) / substeps
    J = np.zeros_like(x)

    def field(t, px, py):
        vx, vy = velocity.value(t, px, py)
        return vx, vy, velocity.divergence(t, px, py)

    t = t0
    for _ in range(substeps):
        a = field(t, x, y)
        b = field(t + h / 2, x + h / 2 * a[0], y + h / 2 * a[1])
        c = field(t + h / 2, x + h / 2 * b[0], y + h / 2 * b[1])
        d = field(t + h, x + h * c[0], y + h * c[1])
        x = x + h / 6 * (a[0] + 2 * b[0] + 2 * c[0] + d[0])
        y = y + h / 6 * (a[1] + 2 * b[1] + 2 * c[1] + d[1])
        J = J + direction * h / 6 * (a[2] + 2 * b[2] + 2 * c[2] + d[2])
        t += h
    return x, y, J


def _chunked(rows: int, count: int):
    bounds = np.linspace(0, rows, count + 1).astype(int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


class TransportServices:
    @staticmethod
    def sample_velocity(velocity: SyntheticVelocity, grid: Grid, t: float) -> SpectralVectorField:
        x, y = grid.coordinates
        return SpectralServices.from_physical(np.stack(velocity.value(t, x, y)), grid)

    @staticmethod
    def sample_divergence(velocity: SyntheticVelocity, grid: Grid, t: float) -> SpectralScalarField:
        x, y = grid.coordinates
        return SpectralServices.from_physical(velocity.divergence(t, x, y), grid)

    @staticmethod
    def transport_rhs(f: SpectralScalarField, velocity: SyntheticVelocity, t: float) -> SpectralScalarField:
        """-div(f v), the conservative form of d_t f + v.grad f + f div v = 0."""
        grid = f.grid
        x, y = grid.coordinates
        vx, vy = velocity.value(t, x, y)
        values = SpectralServices.fft_inverse(f)
        flux = SpectralServices.from_physical(np.stack([values * vx, values * vy]), grid)
        return -SpectralServices.div(flux)

    @staticmethod
    def diagnostics(f: SpectralScalarField, velocity: SyntheticVelocity, t: float) -> dict:
        grid = f.grid
        x, y = grid.coordinates
        gradient = velocity.gradient(t, x, y)
        return {
            "t": t,
            "f_inf": SpectralServices.lp_norm(f, np.inf),
            "f_b0_inf1": LittlewoodPaleyServices.besov_norm(f, 0, np.inf, 1),
            "f_mass": float(f.modes[0, 0].real) * grid.box_length**2,
            "grad_v_inf": float(np.sqrt((gradient**2).sum(axis=(0, 1))).max()),
            "div_v_b_half_4_1": LittlewoodPaleyServices.besov_norm(
                TransportServices.sample_divergence(velocity, grid, t), 0.5, LOG_ESTIMATE_P, 1
            ),
        }

    @staticmethod
    def solve_transport_spectral(
        f0: SpectralScalarField,
        velocity: SyntheticVelocity,
        T: float,
        dt: Optional[float] = None,
        cfl: float = 0.4,
        ledger: Optional[RunLedger] = None,
    ) -> TransportRun:
        if not velocity.periodic:
            raise GridError("solve_transport_spectral", f"velocity {velocity.name} is not periodic")
        grid = f0.grid
        if dt is None:
            dt = cfl * grid.spacing / max(velocity.speed_bound, 1e-12)
        steps = max(1, math.ceil(T / dt))
        dt = T / steps
        ledger = ledger if ledger is not None else RunLedger.transport(f"transport-{velocity.name}")
        logger.info(f"Spectral transport {velocity.name}: n={grid.n}, T={T:g}, steps={steps}")

        f = SpectralServices.dealias(f0)
        ledger.append(TransportServices.diagnostics(f, velocity, 0.0))
        rhs = TransportServices.transport_rhs
        for i in range(steps):
            t = i * dt
            k1 = rhs(f, velocity, t)
            k2 = rhs(f + k1.scale(dt / 2), velocity, t + dt / 2)
            k3 = rhs(f + k2.scale(dt / 2), velocity, t + dt / 2)
            k4 = rhs(f + k3.scale(dt), velocity, t + dt)
            f = f + (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(dt / 6.0)
            if not np.all(np.isfinite(f.modes)):
                raise BlowupError((i + 1) * dt, "non-finite transported field", ledger)
            t_next = T if i == steps - 1 else (i + 1) * dt
            ledger.append(TransportServices.diagnostics(f, velocity, t_next))
        return TransportRun(final=f, ledger=ledger, steps=steps, velocity=velocity)

    @staticmethod
    def solve_transport_oracle(
        f0: SpectralScalarField, velocity: SyntheticVelocity, T: float, substeps: int = 400
    ) -> np.ndarray:
        """f(T, x) = f0(foot) exp(-int div v) along the backward characteristic through x."""
        grid = f0.grid
        n, h, L = grid.n, grid.spacing, grid.box_length
        pad = INTERPOLATION_PAD
        axis = np.arange(-pad, n + pad) * h
        values = np.pad(SpectralServices.fft_inverse(f0), pad, mode="wrap")
        spline = RectBivariateSpline(axis, axis, values, kx=3, ky=3, s=0)
        x, y = grid.coordinates
        out = np.empty((n, n))

        def trace(rows: slice) -> None:
            if T == 0:
                fx, fy, J = x[rows], y[rows], np.zeros_like(x[rows])
            else:
                fx, fy, J = _rk4_substeps(velocity, x[rows], y[rows], T, 0.0, substeps, direction=-1.0)
            W = -J
            out[rows] = spline.ev(np.mod(fx, L), np.mod(fy, L)) * (np.expm1(W) + 1.0)

        chunks = _chunked(n, get_settings().threads)
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            list(pool.map(trace, chunks))
        return out

    @staticmethod
    def trace_flow_map(velocity: SyntheticVelocity, grid: Grid, T: float, substeps: int = 200) -> FlowMapCloud:
        x, y = grid.coordinates
        seeds = np.stack([x, y])
        if T == 0:
            return FlowMapCloud(seeds=seeds, positions=seeds.copy(), W=np.zeros_like(x), time=0.0)
        px, py, J = _rk4_substeps(velocity, x, y, 0.0, T, substeps, direction=1.0)
        return FlowMapCloud(seeds=seeds, positions=np.stack([px, py]), W=-J, time=T)

    @staticmethod
    def log_estimate_sides(
        ledger: RunLedger, constant: float, column: str = "f_b0_inf1", p: int = LOG_ESTIMATE_P
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(lhs, rhs, div-free rhs) of the logarithmic estimate for the B^0_{inf,1} norm in `column`."""
        if p != LOG_ESTIMATE_P:
            raise LedgerError("check_log_estimate", f"ledgers carry the p={LOG_ESTIMATE_P} divergence norm only")
        ledger.require(column, "grad_v_l1", "div_b_half_l1")
        lhs = ledger.column(column)
        initial = lhs[0]
        G = ledger.column("grad_v_l1")
        D = ledger.column("div_b_half_l1")
        with np.errstate(over="ignore"):
            rhs = constant * initial * (1.0 + np.exp(constant * G) * D**2) * (1.0 + G)
        return lhs, rhs, constant * initial * (1.0 + G)

    @staticmethod
    def fit_log_constant(calibration: Sequence[RunLedger], column: str = "f_b0_inf1") -> float:
        def worst(constant: float) -> float:
            ratios = []
            for ledger in calibration:
                lhs, rhs, _ = TransportServices.log_estimate_sides(ledger, constant, column)
                ratios.append(CalibrationServices.holdout_ratio(lhs, rhs, 1.0, 1.0))
            return max(ratios)

        constant = CalibrationServices.fit_monotone_constant(worst)
        logger.info(f"Logarithmic estimate constant fitted on {len(calibration)} run(s): C={constant:.6g}")
        return constant

    @staticmethod
    def check_log_estimate(
        ledger: RunLedger,
        constant: float,
        margin: float = 2.0,
        column: str = "f_b0_inf1",
        p: int = LOG_ESTIMATE_P,
        name: str = "log_estimate",
        operation: str = "transport_lab.check_log_estimate",
    ) -> CheckReport:
        """Holdout check of the logarithmic estimate with the constant scaled by the margin."""
        lhs, rhs, vishik = TransportServices.log_estimate_sides(ledger, margin * constant, column, p)
        worst = CalibrationServices.holdout_ratio(lhs, rhs, 1.0, 1.0)
        safe = np.where(rhs > 0, rhs, 1.0)
        ratios = np.where(rhs > 0, lhs / safe, 0.0)
        passed = worst <= 1.0
        detail = f"run={ledger.run_id} max_ratio={worst:.4g}"
        logger.info(f"{name} {ledger.run_id}: {'PASS' if passed else 'FAIL'} ({detail})")
        return CheckReport(
            name=name,
            operation=operation,
            passed=passed,
            constant=constant,
            margin=margin,
            detail=detail,
            columns=("t", "lhs", "rhs", "ratio", "rhs_divergence_free"),
            rows=list(zip(ledger.times, lhs, rhs, ratios, vishik)),
        )
