import math
from functools import lru_cache
from typing import NamedTuple, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

DEFAULT_BOX_LENGTH = 16.0 * math.pi
VORTICITY_MEAN_TOLERANCE = 1e-10


class Wavenumbers(NamedTuple):
    index: np.ndarray
    kx: np.ndarray
    ky: np.ndarray
    k_abs: np.ndarray
    dkx: np.ndarray
    dky: np.ndarray
    dk_sq: np.ndarray
    dealias_mask: np.ndarray
    k_max: float


@lru_cache(maxsize=16)
def _wavenumbers(n: int, box_length: float) -> Wavenumbers:
    unit = 2.0 * math.pi / box_length
    index = np.fft.fftfreq(n, d=1.0 / n)
    k1 = unit * index
    kx, ky = np.meshgrid(k1, k1, indexing="ij")
    k_abs = np.hypot(kx, ky)
    # Nyquist wavenumber has no conjugate partner: differentiate it to zero
    kd = k1.copy()
    kd[n // 2] = 0.0
    dkx, dky = np.meshgrid(kd, kd, indexing="ij")
    dk_sq = dkx**2 + dky**2
    k_max = (2.0 / 3.0) * (n / 2) * unit
    mask = k_abs <= k_max
    arrays = [index, kx, ky, k_abs, dkx, dky, dk_sq, mask]
    for array in arrays:
        array.flags.writeable = False
    return Wavenumbers(*arrays, k_max)


class Grid(BaseModel):
    """Square periodic grid with n points per side and period box_length."""

    model_config = ConfigDict(frozen=True)

    n: int = Field(..., description="Points per dimension (power of two, >= 8)")
    box_length: float = Field(DEFAULT_BOX_LENGTH, gt=0, description="Period L")

    @field_validator("n")
    @classmethod
    def validate_n(cls, n: int) -> int:
        if n < 8:
            raise ValueError(f"n must be at least 8, got {n}")
        if n & (n - 1):
            raise ValueError(f"n must be a power of two, got {n}")
        return n

    @property
    def spacing(self) -> float:
        return self.box_length / self.n

    @property
    def fundamental(self) -> float:
        return 2.0 * math.pi / self.box_length

    @property
    def cell_area(self) -> float:
        return self.spacing**2

    @property
    def wavenumbers(self) -> Wavenumbers:
        return _wavenumbers(self.n, float(self.box_length))

    @property
    def k_max(self) -> float:
        return self.wavenumbers.k_max

    @property
    def coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.n) * self.spacing
        return np.meshgrid(x, x, indexing="ij")


class SpectralScalarField(BaseModel):
    """Scalar field carried by its Fourier coefficients (fft2 / n^2)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: Grid
    modes: np.ndarray
    dealiased: bool = False
    complex_valued: bool = False

    @model_validator(mode="after")
    def validate_shape(self) -> "SpectralScalarField":
        shape = (self.grid.n, self.grid.n)
        if self.modes.shape != shape:
            raise ValueError(f"modes shape {self.modes.shape} does not match grid {shape}")
        return self

    @classmethod
    def zeros(cls, grid: Grid, complex_valued: bool = False) -> "SpectralScalarField":
        modes = np.zeros((grid.n, grid.n), dtype=np.complex128)
        return cls(grid=grid, modes=modes, dealiased=True, complex_valued=complex_valued)

    def with_modes(self, modes: np.ndarray, dealiased: bool = None) -> "SpectralScalarField":
        return SpectralScalarField(
            grid=self.grid,
            modes=modes,
            dealiased=self.dealiased if dealiased is None else dealiased,
            complex_valued=self.complex_valued,
        )

    def scale(self, factor: complex) -> "SpectralScalarField":
        field = self.with_modes(self.modes * factor)
        if isinstance(factor, complex) and factor.imag != 0.0:
            field = field.model_copy(update={"complex_valued": True})
        return field

    def __add__(self, other: "SpectralScalarField") -> "SpectralScalarField":
        return SpectralScalarField(
            grid=self.grid,
            modes=self.modes + other.modes,
            dealiased=self.dealiased and other.dealiased,
            complex_valued=self.complex_valued or other.complex_valued,
        )

    def __sub__(self, other: "SpectralScalarField") -> "SpectralScalarField":
        return self + other.scale(-1.0)

    def __neg__(self) -> "SpectralScalarField":
        return self.scale(-1.0)


class SpectralVectorField(BaseModel):
    """Two scalar components on one grid."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    x: SpectralScalarField
    y: SpectralScalarField

    @model_validator(mode="after")
    def validate_components(self) -> "SpectralVectorField":
        if self.x.grid != self.y.grid:
            raise ValueError("vector components must share one grid")
        if self.x.dealiased != self.y.dealiased:
            raise ValueError("vector components must share dealias status")
        return self

    @classmethod
    def zeros(cls, grid: Grid, complex_valued: bool = False) -> "SpectralVectorField":
        return cls(
            x=SpectralScalarField.zeros(grid, complex_valued),
            y=SpectralScalarField.zeros(grid, complex_valued),
        )

    @property
    def grid(self) -> Grid:
        return self.x.grid

    @property
    def dealiased(self) -> bool:
        return self.x.dealiased

    @property
    def components(self) -> Tuple[SpectralScalarField, SpectralScalarField]:
        return self.x, self.y

    def scale(self, factor: complex) -> "SpectralVectorField":
        return SpectralVectorField(x=self.x.scale(factor), y=self.y.scale(factor))

    def __add__(self, other: "SpectralVectorField") -> "SpectralVectorField":
        return SpectralVectorField(x=self.x + other.x, y=self.y + other.y)

    def __sub__(self, other: "SpectralVectorField") -> "SpectralVectorField":
        return SpectralVectorField(x=self.x - other.x, y=self.y - other.y)

    def __neg__(self) -> "SpectralVectorField":
        return self.scale(-1.0)


class FlowState(BaseModel):
    """Rescaled compressible unknowns (v_eps, c_eps) at one time."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    v: SpectralVectorField
    c: SpectralScalarField
    eps: float = Field(..., gt=0, le=1, description="Mach number")
    gamma_bar: float = Field(0.2, gt=0, description="(gamma - 1) / 2")
    time: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def validate_grid(self) -> "FlowState":
        if self.v.grid != self.c.grid:
            raise ValueError("velocity and sound speed must share one grid")
        return self

    @property
    def grid(self) -> Grid:
        return self.c.grid


class IncompressibleState(BaseModel):
    """Vorticity of the incompressible reference flow."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    omega: SpectralScalarField
    time: float = Field(0.0, ge=0)

    @field_validator("omega")
    @classmethod
    def validate_zero_mean(cls, omega: SpectralScalarField) -> SpectralScalarField:
        # the curl of a periodic velocity has no k = 0 mode
        mean = abs(omega.modes[0, 0])
        if mean > VORTICITY_MEAN_TOLERANCE * max(1.0, float(np.max(np.abs(omega.modes)))):
            raise ValueError(f"vorticity must have zero mean, got k=0 mode {mean:.3g}")
        return omega

    @property
    def grid(self) -> Grid:
        return self.omega.grid
