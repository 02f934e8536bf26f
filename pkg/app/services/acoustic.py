import logging
import math
from typing import Sequence, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid

from app.exceptions.lab import AcousticError
from app.schemas.acoustic import AcousticPair, StrichartzMeasurement
from app.schemas.fields import FlowState, Grid, SpectralScalarField, SpectralVectorField
from app.schemas.reports import CheckReport
from app.services.spectral import SpectralServices, reflect

logger = logging.getLogger(__name__)

WRAPAROUND_FRACTION = 0.45
MIN_TIME_SAMPLES = 64
WINDOW_SAFETY = 0.9
DUHAMEL_ORDER = (1.6, 2.4)

ComplexField = Union[SpectralScalarField, SpectralVectorField]


def unit_wavevector(grid: Grid) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(k_x/|k|, k_y/|k|, |k|) on the differentiated wavenumbers, zero where |k| = 0."""
    wn = grid.wavenumbers
    modulus = np.sqrt(wn.dk_sq)
    safe = np.where(modulus > 0, modulus, 1.0)
    return np.where(modulus > 0, wn.dkx / safe, 0.0), np.where(modulus > 0, wn.dky / safe, 0.0), modulus


def _complex(field: SpectralScalarField, modes: np.ndarray) -> SpectralScalarField:
    return field.with_modes(modes).model_copy(update={"complex_valued": True})


class AcousticServices:
    @staticmethod
    def make_acoustic(state: FlowState) -> AcousticPair:
        khat_x, khat_y, modulus = unit_wavevector(state.grid)
        v, c = state.v, state.c
        longitudinal = khat_x * v.x.modes + khat_y * v.y.modes
        s = longitudinal + c.modes
        upsilon = 1j * np.where(modulus > 0, s, c.modes)
        gamma = SpectralVectorField(x=_complex(v.x, khat_x * s), y=_complex(v.y, khat_y * s))
        return AcousticPair(gamma_field=gamma, upsilon_field=_complex(c, upsilon), eps=state.eps)

    @staticmethod
    def reassemble(
        pair: AcousticPair, solenoidal: SpectralVectorField, gamma_bar: float = 0.2, time: float = 0.0
    ) -> FlowState:
        """Inverse of make_acoustic given the divergence-free part P v."""
        grid = solenoidal.grid
        khat_x, khat_y, modulus = unit_wavevector(grid)
        gamma = pair.gamma_field
        s = khat_x * gamma.x.modes + khat_y * gamma.y.modes
        s_reflected = np.conj(reflect(s))
        longitudinal = np.where(modulus > 0, 0.5 * (s - s_reflected), 0.0)
        c_modes = np.where(modulus > 0, 0.5 * (s + s_reflected), -1j * pair.upsilon_field.modes)
        real = dict(complex_valued=False)
        v = SpectralVectorField(
            x=solenoidal.x.with_modes(solenoidal.x.modes + khat_x * longitudinal).model_copy(update=real),
            y=solenoidal.y.with_modes(solenoidal.y.modes + khat_y * longitudinal).model_copy(update=real),
        )
        c = solenoidal.x.with_modes(c_modes).model_copy(update=real)
        return FlowState(v=v, c=c, eps=pair.eps, gamma_bar=gamma_bar, time=time)

    @staticmethod
    def free_propagate(field: ComplexField, t: float, eps: float) -> ComplexField:
        """Solution at time t of (d_t + (i/eps)|D|) psi = 0."""
        if t < 0:
            raise AcousticError("free_propagate", f"negative propagation time {t}")
        if isinstance(field, SpectralVectorField):
            return SpectralVectorField(
                x=AcousticServices.free_propagate(field.x, t, eps),
                y=AcousticServices.free_propagate(field.y, t, eps),
            )
        _, _, modulus = unit_wavevector(field.grid)
        return _complex(field, field.modes * np.exp(-1j * t * modulus / eps))

    @staticmethod
    def acoustic_exact_step(state: FlowState, dt: float) -> FlowState:
        """Exact flow of d_t v + grad c / eps = 0, d_t c + div v / eps = 0; P v is untouched."""
        khat_x, khat_y, modulus = unit_wavevector(state.grid)
        v, c = state.v, state.c
        theta = modulus * dt / state.eps
        cos, sin = np.cos(theta), np.sin(theta)
        a = khat_x * v.x.modes + khat_y * v.y.modes
        a_new = a * cos - 1j * c.modes * sin
        c_new = c.modes * cos - 1j * a * sin
        shift = a_new - a
        return state.model_copy(
            update={
                "v": SpectralVectorField(
                    x=v.x.with_modes(v.x.modes + khat_x * shift),
                    y=v.y.with_modes(v.y.modes + khat_y * shift),
                ),
                "c": c.with_modes(c_new),
            }
        )

    @staticmethod
    def acoustic_source(f: SpectralVectorField, g: SpectralScalarField) -> SpectralVectorField:
        """Forcing of Gamma when d_t v + grad c / eps = f and d_t c + div v / eps = g: Qf - i grad |D|^-1 g."""
        khat_x, khat_y, _ = unit_wavevector(f.grid)
        s = khat_x * f.x.modes + khat_y * f.y.modes + g.modes
        return SpectralVectorField(x=_complex(f.x, khat_x * s), y=_complex(f.y, khat_y * s))

    @staticmethod
    def duhamel_defect(states: Sequence[FlowState], sources: Sequence[SpectralVectorField]) -> float:
        """Relative L2 gap between Gamma(T) and e^{-iT|D|/eps} Gamma(0) plus the trapezoid Duhamel integral.

        states[j] and sources[j] are sampled at states[j].time; T is the last sample.
        """
        if len(states) < 2 or len(states) != len(sources):
            raise AcousticError("duhamel_defect", f"{len(states)} states for {len(sources)} sources")
        eps = states[0].eps
        times = np.array([state.time for state in states])
        if np.any(np.diff(times) <= 0):
            raise AcousticError("duhamel_defect", "sample times must increase")
        T = times[-1]

        def stacked(field: SpectralVectorField) -> np.ndarray:
            return np.stack([field.x.modes, field.y.modes])

        start = AcousticServices.make_acoustic(states[0]).gamma_field
        end = AcousticServices.make_acoustic(states[-1]).gamma_field
        homogeneous = stacked(end) - stacked(AcousticServices.free_propagate(start, T - times[0], eps))
        integrand = np.stack(
            [stacked(AcousticServices.free_propagate(source, T - t, eps)) for t, source in zip(times, sources)]
        )
        gap = homogeneous - trapezoid(integrand, times, axis=0)
        scale = float(np.linalg.norm(homogeneous))
        if scale == 0.0:
            return 0.0 if not np.any(gap) else math.inf
        return float(np.linalg.norm(gap)) / scale

    @staticmethod
    def check_duhamel_consistency(
        defects: Sequence[Tuple[float, float]], order_range: Tuple[float, float] = DUHAMEL_ORDER
    ) -> CheckReport:
        """Duhamel defects (dt, defect) shrink at the order of the splitting and trapezoid rule."""
        defects = sorted(defects, key=lambda item: -item[0])
        if len(defects) < 2:
            raise AcousticError("check_duhamel_consistency", "need at least two step sizes")
        (dt0, d0), (dt1, d1) = defects[-2], defects[-1]
        if d1 == 0.0:
            order = math.inf if d0 > 0 else 0.0
        else:
            order = math.log(d0 / d1) / math.log(dt0 / dt1)
        passed = d1 == 0.0 or order_range[0] <= order <= order_range[1]
        detail = f"order={order:.3f} defects={[round(d, 12) for _, d in defects]}"
        logger.info(f"duhamel_consistency: {'PASS' if passed else 'FAIL'} ({detail})")
        return CheckReport(
            name="duhamel_consistency",
            operation="acoustic.duhamel_defect",
            passed=passed,
            detail=detail,
            columns=("dt", "defect"),
            rows=[(dt, d) for dt, d in defects],
        )

    @staticmethod
    def strichartz_exponents(p: float) -> Tuple[float, float]:
        """(time exponent r, eps decay exponent) of the dispersive estimate in L^r_t L^p_x."""
        if p < 2:
            raise AcousticError("strichartz_exponents", f"p must be >= 2, got {p}")
        if math.isinf(p):
            return 4.0, 0.25
        if p == 2:
            return math.inf, 0.0
        return 4.0 + 8.0 / (p - 2.0), 0.25 - 1.0 / (2.0 * p)

    @staticmethod
    def wraparound_window(grid: Grid, eps: float) -> float:
        return WRAPAROUND_FRACTION * grid.box_length * eps

    @staticmethod
    def acoustic_horizon(grid: Grid, eps_values: Sequence[float], T: float) -> float:
        """Largest end time at which no eps in the sweep has reached its wraparound window."""
        return min(T, WINDOW_SAFETY * AcousticServices.wraparound_window(grid, min(eps_values)))

    @staticmethod
    def measure_strichartz(
        initial: ComplexField, eps: float, T: float, p: float = math.inf, samples: int = MIN_TIME_SAMPLES
    ) -> StrichartzMeasurement:
        if T <= 0:
            raise AcousticError("measure_strichartz", f"empty time window T={T}")
        r, decay = AcousticServices.strichartz_exponents(p)
        grid = initial.grid
        window = AcousticServices.wraparound_window(grid, eps)
        post_wraparound = T >= window
        if post_wraparound:
            logger.warning(f"Strichartz window T={T:.4g} passes the wraparound time {window:.4g} (eps={eps})")
        times = np.linspace(0.0, T, max(samples, MIN_TIME_SAMPLES))
        values = [
            SpectralServices.lp_norm(AcousticServices.free_propagate(initial, t, eps), p) for t in times
        ]
        norm = SpectralServices.mixed_time_norm(times, values, r)
        return StrichartzMeasurement(
            eps=eps, T=T, p=p, r=r, decay_exponent=decay, norm=norm,
            scaled=norm / eps**decay, window=window, post_wraparound=post_wraparound,
            samples=times.size,
        )

    @staticmethod
    def check_strichartz_scaling(
        measurements: Sequence[StrichartzMeasurement], factor: float = 2.0, name: str = "strichartz_scaling"
    ) -> CheckReport:
        """norm / eps^decay agrees across the sweep within the factor."""
        scaled = np.array([m.scaled for m in measurements])
        spread = float(scaled.max() / scaled.min()) if scaled.min() > 0 else (1.0 if scaled.max() == 0 else math.inf)
        wrapped = [m.eps for m in measurements if m.post_wraparound]
        passed = spread <= factor and not wrapped
        detail = f"spread={spread:.4g} over eps={[m.eps for m in measurements]}"
        if wrapped:
            detail += f" post_wraparound={wrapped}"
        logger.info(f"{name}: {'PASS' if passed else 'FAIL'} ({detail})")
        return CheckReport(
            name=name,
            operation="acoustic.check_strichartz_scaling",
            passed=passed,
            constant=float(scaled.max()) if scaled.size else None,
            margin=factor,
            detail=detail,
            columns=("eps", "T", "p", "r", "norm", "scaled", "wraparound_flag"),
            rows=[(m.eps, m.T, m.p, m.r, m.norm, m.scaled, float(m.post_wraparound)) for m in measurements],
        )
