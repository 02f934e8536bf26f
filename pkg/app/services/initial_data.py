import logging
import math
from typing import Tuple

import numpy as np

from app.schemas.experiment import parse_initial_spec
from app.schemas.fields import FlowState, Grid, SpectralScalarField, SpectralVectorField
from app.services.incompressible import IncompressibleServices
from app.services.spectral import SpectralServices

logger = logging.getLogger(__name__)

BUMP_WIDTH = 2.0
TAYLOR_GREEN_INDEX = 2


def _gaussian(grid: Grid, center: Tuple[float, float], width: float) -> np.ndarray:
    """Periodic distance Gaussian."""
    x, y = grid.coordinates
    L = grid.box_length
    dx = (x - center[0] + L / 2) % L - L / 2
    dy = (y - center[1] + L / 2) % L - L / 2
    return np.exp(-(dx**2 + dy**2) / (2.0 * width**2))


class InitialDataServices:
    @staticmethod
    def acoustic_bump(grid: Grid, amplitude: float = 1.0) -> Tuple[SpectralVectorField, SpectralScalarField]:
        """Localized compressible part (grad G, G) with G a Gaussian bump at the box center."""
        L = grid.box_length
        G = SpectralServices.from_physical(amplitude * _gaussian(grid, (L / 2, L / 2), BUMP_WIDTH), grid)
        return SpectralServices.grad(G), G

    @staticmethod
    def taylor_green(grid: Grid, amplitude: float = 1.0) -> SpectralVectorField:
        x, y = grid.coordinates
        k = TAYLOR_GREEN_INDEX * grid.fundamental
        vx = amplitude * np.sin(k * x) * np.cos(k * y)
        vy = -amplitude * np.cos(k * x) * np.sin(k * y)
        return SpectralServices.from_physical(np.stack([vx, vy]), grid)

    @staticmethod
    def vortex_pair(grid: Grid, amplitude: float = 1.0) -> SpectralVectorField:
        L = grid.box_length
        width = L / 16.0
        omega = _gaussian(grid, (0.4 * L, 0.5 * L), width) - _gaussian(grid, (0.6 * L, 0.5 * L), width)
        omega = SpectralServices.from_physical(amplitude * omega, grid)
        return IncompressibleServices.velocity_from_vorticity(omega)

    @staticmethod
    def random_scalar(grid: Grid, rng: np.random.Generator, rate: float = 4.0, slope: float = 2.0) -> SpectralScalarField:
        """Mean-free random field with shell norms ~ 2^{-slope q} rate^{-q}."""
        noise = SpectralServices.fft_forward(rng.standard_normal((grid.n, grid.n)), grid)
        xi = np.maximum(grid.wavenumbers.k_abs / grid.fundamental, 1.0)
        # white noise carries shell norms ~ xi; divide it out
        envelope = xi ** (-slope - 1.0) * xi ** (-math.log2(rate))
        modes = noise.modes * envelope
        modes[0, 0] = 0.0
        return SpectralServices.dealias(noise.with_modes(modes))

    @staticmethod
    def random_band(grid: Grid, rate: float, seed: int, amplitude: float = 1.0) -> Tuple[SpectralVectorField, SpectralScalarField]:
        rng = np.random.default_rng(seed)
        vx, vy, c = (InitialDataServices.random_scalar(grid, rng, rate) for _ in range(3))
        v = SpectralVectorField(x=vx, y=vy)
        peak = max(SpectralServices.lp_norm([v, c], np.inf), 1e-300)
        return v.scale(amplitude / peak), c.scale(amplitude / peak)

    @staticmethod
    def make_initial_data(
        spec: str, grid: Grid, eps: float, amplitude: float = 1.0, seed: int = 0, gamma_bar: float = 0.2
    ) -> FlowState:
        """Deterministic initial state; the family is the same for every eps except well-prepared-contrast."""
        name, rate = parse_initial_spec(spec)
        if name == "random-band":
            v, c = InitialDataServices.random_band(grid, rate, seed, amplitude)
        else:
            if name == "vortex-pair-ill":
                solenoidal = InitialDataServices.vortex_pair(grid, amplitude)
            else:
                solenoidal = InitialDataServices.taylor_green(grid, amplitude)
            scale = eps if name == "well-prepared-contrast" else 1.0
            v_acoustic, c = InitialDataServices.acoustic_bump(grid, scale * amplitude)
            v = solenoidal + v_acoustic
        logger.debug(f"Initial data {spec}: n={grid.n}, eps={eps:g}, amplitude={amplitude:g}")
        return FlowState(v=v, c=c, eps=eps, gamma_bar=gamma_bar, time=0.0)

    @staticmethod
    def transport_profile(grid: Grid) -> SpectralScalarField:
        """Smooth periodic f0 = g(y) h(x) with peak 1 at the grid point (L/4, 0), on the zero line of every shear."""
        x, y = grid.coordinates
        x0 = grid.spacing * (grid.n // 4)
        L = grid.box_length
        values = np.exp(np.cos(2 * math.pi * (x - x0) / L) + np.cos(2 * math.pi * y / L) - 2.0)
        return SpectralServices.from_physical(values, grid)
