import logging
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.fft
from scipy.integrate import trapezoid

from app.config import get_settings
from app.exceptions.lab import GridError, LedgerError
from app.schemas.fields import Grid, SpectralScalarField, SpectralVectorField

logger = logging.getLogger(__name__)

FieldLike = Union[SpectralScalarField, SpectralVectorField]


def _workers() -> int:
    return get_settings().threads


def reflect(modes: np.ndarray) -> np.ndarray:
    """Coefficients re-indexed at -k."""
    return np.roll(modes[::-1, ::-1], 1, axis=(0, 1))


def scalar_components(obj) -> list:
    """Flatten a scalar, a vector, or a sequence of them into scalar components."""
    if isinstance(obj, SpectralScalarField):
        return [obj]
    if isinstance(obj, SpectralVectorField):
        return [obj.x, obj.y]
    components = []
    for item in obj:
        components.extend(scalar_components(item))
    return components


class SpectralServices:
    @staticmethod
    def fft_forward(values: np.ndarray, grid: Optional[Grid] = None) -> SpectralScalarField:
        values = np.asarray(values)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise GridError("fft_forward", f"expected square samples, got shape {values.shape}")
        n = values.shape[0]
        if n < 8 or n & (n - 1):
            raise GridError("fft_forward", f"sample size {n} is not a power of two >= 8")
        if grid is None:
            grid = Grid(n=n)
        elif grid.n != n:
            raise GridError("fft_forward", f"{n}x{n} samples on a grid with n={grid.n}")
        complex_valued = np.iscomplexobj(values)
        modes = scipy.fft.fft2(values, norm="forward", workers=_workers())
        return SpectralScalarField(
            grid=grid, modes=modes, dealiased=False, complex_valued=complex_valued
        )

    @staticmethod
    def fft_inverse(field: SpectralScalarField) -> np.ndarray:
        values = scipy.fft.ifft2(field.modes, norm="forward", workers=_workers())
        if field.complex_valued:
            return values
        return values.real

    @staticmethod
    def to_physical(obj: FieldLike) -> np.ndarray:
        """Samples of a scalar (n, n) or a vector (2, n, n)."""
        if isinstance(obj, SpectralVectorField):
            return np.stack([SpectralServices.fft_inverse(c) for c in obj.components])
        return SpectralServices.fft_inverse(obj)

    @staticmethod
    def from_physical(values: np.ndarray, grid: Grid, dealias: bool = True) -> FieldLike:
        values = np.asarray(values)
        if values.ndim == 3:
            vector = SpectralVectorField(
                x=SpectralServices.fft_forward(values[0], grid),
                y=SpectralServices.fft_forward(values[1], grid),
            )
            return SpectralServices.dealias(vector) if dealias else vector
        field = SpectralServices.fft_forward(values, grid)
        return SpectralServices.dealias(field) if dealias else field

    @staticmethod
    def dealias(obj: FieldLike) -> FieldLike:
        if isinstance(obj, SpectralVectorField):
            return SpectralVectorField(
                x=SpectralServices.dealias(obj.x), y=SpectralServices.dealias(obj.y)
            )
        mask = obj.grid.wavenumbers.dealias_mask
        return obj.with_modes(np.where(mask, obj.modes, 0.0), dealiased=True)

    @staticmethod
    def grad(field: SpectralScalarField) -> SpectralVectorField:
        wn = field.grid.wavenumbers
        return SpectralVectorField(
            x=field.with_modes(1j * wn.dkx * field.modes),
            y=field.with_modes(1j * wn.dky * field.modes),
        )

    @staticmethod
    def perp_grad(field: SpectralScalarField) -> SpectralVectorField:
        """(-d_y u, d_x u)"""
        wn = field.grid.wavenumbers
        return SpectralVectorField(
            x=field.with_modes(-1j * wn.dky * field.modes),
            y=field.with_modes(1j * wn.dkx * field.modes),
        )

    @staticmethod
    def div(vector: SpectralVectorField) -> SpectralScalarField:
        wn = vector.grid.wavenumbers
        modes = 1j * wn.dkx * vector.x.modes + 1j * wn.dky * vector.y.modes
        return vector.x.with_modes(modes).model_copy(
            update={"complex_valued": vector.x.complex_valued or vector.y.complex_valued}
        )

    @staticmethod
    def curl2d(vector: SpectralVectorField) -> SpectralScalarField:
        wn = vector.grid.wavenumbers
        modes = 1j * wn.dkx * vector.y.modes - 1j * wn.dky * vector.x.modes
        return vector.x.with_modes(modes).model_copy(
            update={"complex_valued": vector.x.complex_valued or vector.y.complex_valued}
        )

    @staticmethod
    def laplacian(field: SpectralScalarField) -> SpectralScalarField:
        return field.with_modes(-field.grid.wavenumbers.dk_sq * field.modes)

    @staticmethod
    def inv_laplacian(field: SpectralScalarField) -> SpectralScalarField:
        """Mean-free inverse of the Laplacian; the zero mode is set to zero."""
        dk_sq = field.grid.wavenumbers.dk_sq
        mean = field.modes[0, 0]
        if abs(mean) > 1e-13 * (1.0 + np.abs(field.modes).max()):
            logger.warning(f"inv_laplacian: input mean {mean:.3e} projected out")
        safe = np.where(dk_sq > 0, dk_sq, 1.0)
        modes = np.where(dk_sq > 0, -field.modes / safe, 0.0)
        return field.with_modes(modes)

    @staticmethod
    def leray_Q(vector: SpectralVectorField) -> SpectralVectorField:
        """Gradient part grad inv_laplacian div v."""
        wn = vector.grid.wavenumbers
        safe = np.where(wn.dk_sq > 0, wn.dk_sq, 1.0)
        longitudinal = (wn.dkx * vector.x.modes + wn.dky * vector.y.modes) / safe
        return SpectralVectorField(
            x=vector.x.with_modes(wn.dkx * longitudinal),
            y=vector.y.with_modes(wn.dky * longitudinal),
        )

    @staticmethod
    def leray_P(vector: SpectralVectorField) -> SpectralVectorField:
        """Projection onto divergence-free fields, v - Q v."""
        return vector - SpectralServices.leray_Q(vector)

    @staticmethod
    def multiply(a: SpectralScalarField, b: SpectralScalarField) -> SpectralScalarField:
        """Dealiased product formed in physical space."""
        product = SpectralServices.fft_inverse(a) * SpectralServices.fft_inverse(b)
        return SpectralServices.dealias(SpectralServices.fft_forward(product, a.grid))

    @staticmethod
    def pointwise_magnitude(obj) -> Tuple[Grid, np.ndarray]:
        components = scalar_components(obj)
        values = [SpectralServices.fft_inverse(c) for c in components]
        if len(values) == 1:
            return components[0].grid, np.abs(values[0])
        return components[0].grid, np.sqrt(sum(np.abs(v) ** 2 for v in values))

    @staticmethod
    def lp_norm_samples(values: np.ndarray, grid: Grid, p: float) -> float:
        magnitude = np.abs(values)
        if np.isinf(p):
            return float(magnitude.max())
        if p < 1:
            raise ValueError(f"p must be in [1, inf], got {p}")
        if p == 2:
            return float(np.sqrt(grid.cell_area * np.sum(magnitude**2)))
        return float((grid.cell_area * np.sum(magnitude**p)) ** (1.0 / p))

    @staticmethod
    def lp_norm(obj, p: float = 2) -> float:
        """Grid-quadrature L^p norm; vectors and tuples combine pointwise."""
        grid, magnitude = SpectralServices.pointwise_magnitude(obj)
        return SpectralServices.lp_norm_samples(magnitude, grid, p)

    @staticmethod
    def mixed_time_norm(times: Sequence[float], values: Iterable[float], r: float) -> float:
        """L^r in time (trapezoid) of already computed spatial norms."""
        times = np.asarray(times, dtype=float)
        values = np.asarray(list(values), dtype=float)
        if times.size == 0 or values.size == 0:
            raise LedgerError("mixed_time_norm", "empty sample series")
        if times.size != values.size:
            raise LedgerError("mixed_time_norm", "times and values differ in length")
        if times.size < 2:
            raise LedgerError("mixed_time_norm", "at least two samples are required")
        if np.any(np.diff(times) < 0):
            raise LedgerError("mixed_time_norm", "times must be nondecreasing")
        if np.isinf(r):
            return float(values.max())
        return float(trapezoid(values**r, times) ** (1.0 / r))
