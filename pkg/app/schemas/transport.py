import math
from typing import Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.schemas.fields import SpectralScalarField
from app.schemas.ledger import RunLedger

VelocityKind = Literal["shear", "compressible", "uniform-divergence", "zero"]


class VelocityMode(BaseModel):
    """One closed-form component of a synthetic velocity.

    shear: (A sin(2 pi m y / L), 0)
    compressible: A sin(frequency t) grad(cos(k.x) / |k|), k = 2 pi (kx, ky) / L
    uniform-divergence: (A / 2)(x - center), divergence A; not periodic, oracle only
    """

    model_config = ConfigDict(frozen=True)

    kind: VelocityKind
    amplitude: float = 0.0
    m: int = 1
    kx: int = 1
    ky: int = 0
    frequency: float = 1.0
    center: Tuple[float, float] = (0.0, 0.0)

    def _wave(self, box_length: float) -> Tuple[float, float, float]:
        kx = 2.0 * math.pi * self.kx / box_length
        ky = 2.0 * math.pi * self.ky / box_length
        return kx, ky, math.hypot(kx, ky)

    def value(self, t: float, x: np.ndarray, y: np.ndarray, box_length: float) -> Tuple[np.ndarray, np.ndarray]:
        zero = np.zeros_like(x)
        if self.kind == "shear":
            return self.amplitude * np.sin(2.0 * math.pi * self.m * y / box_length), zero
        if self.kind == "compressible":
            kx, ky, k = self._wave(box_length)
            s = -self.amplitude * math.sin(self.frequency * t) * np.sin(kx * x + ky * y) / k
            return s * kx, s * ky
        if self.kind == "uniform-divergence":
            return 0.5 * self.amplitude * (x - self.center[0]), 0.5 * self.amplitude * (y - self.center[1])
        return zero, zero

    def gradient(self, t: float, x: np.ndarray, y: np.ndarray, box_length: float) -> np.ndarray:
        """d v_i / d x_j as an array of shape (2, 2) + x.shape."""
        out = np.zeros((2, 2) + np.shape(x))
        if self.kind == "shear":
            wave = 2.0 * math.pi * self.m / box_length
            out[0, 1] = self.amplitude * wave * np.cos(wave * y)
        elif self.kind == "compressible":
            kx, ky, k = self._wave(box_length)
            s = -self.amplitude * math.sin(self.frequency * t) * np.cos(kx * x + ky * y) / k
            out[0, 0], out[0, 1] = s * kx * kx, s * kx * ky
            out[1, 0], out[1, 1] = s * ky * kx, s * ky * ky
        elif self.kind == "uniform-divergence":
            out[0, 0] = out[1, 1] = 0.5 * self.amplitude
        return out

    @property
    def periodic(self) -> bool:
        return self.kind != "uniform-divergence"

    @property
    def speed_bound(self) -> float:
        return abs(self.amplitude) if self.periodic else math.inf


class SyntheticVelocity(BaseModel):
    """Closed-form time-dependent velocity: a superposition of VelocityMode terms."""

    model_config = ConfigDict(frozen=True)

    name: str
    modes: Tuple[VelocityMode, ...]
    box_length: float = Field(..., gt=0)

    def value(self, t: float, x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        vx, vy = np.zeros_like(x, dtype=float), np.zeros_like(x, dtype=float)
        for mode in self.modes:
            ux, uy = mode.value(t, x, y, self.box_length)
            vx, vy = vx + ux, vy + uy
        return vx, vy

    def gradient(self, t: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return sum((m.gradient(t, x, y, self.box_length) for m in self.modes), np.zeros((2, 2) + np.shape(x)))

    def divergence(self, t: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        gradient = self.gradient(t, x, y)
        return gradient[0, 0] + gradient[1, 1]

    @property
    def periodic(self) -> bool:
        return all(m.periodic for m in self.modes)

    @property
    def divergence_free(self) -> bool:
        return all(m.kind in ("shear", "zero") or m.amplitude == 0 for m in self.modes)

    @property
    def speed_bound(self) -> float:
        return sum(m.speed_bound for m in self.modes)


class FlowMapCloud(BaseModel):
    """Particle positions psi(t, x_i) and W_i(t) = -int_0^t div v(s, psi(s, x_i)) ds."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    seeds: np.ndarray
    positions: np.ndarray
    W: np.ndarray
    time: float = Field(..., ge=0)


class TransportRun(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    final: SpectralScalarField
    ledger: RunLedger
    steps: int
    velocity: SyntheticVelocity
