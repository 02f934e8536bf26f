import math
from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.schemas.fields import Grid


class DyadicPartition(BaseModel):
    """Radial multipliers chi and phi(2^-q .) sampled at the grid wavenumbers."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: Grid
    unit: float = Field(..., gt=0, description="Wavenumber at which xi = 1")
    xi: np.ndarray
    chi: np.ndarray
    phi: Tuple[np.ndarray, ...]
    q_max: int = Field(..., ge=0)

    def multiplier(self, q: int) -> np.ndarray:
        return self.chi if q == -1 else self.phi[q]

    @property
    def shells(self) -> range:
        return range(-1, self.q_max + 1)


ProfileKind = Literal["data", "constant", "power", "exp"]


class BesovProfile(BaseModel):
    """Weight Psi on {-1} u N; values[i] holds Psi(i - 1)."""

    model_config = ConfigDict(frozen=True)

    values: Tuple[float, ...]
    ratio_bound: float
    growth_exponent: float
    diverges: bool
    kind: ProfileKind = "data"
    parameter: Optional[float] = None
    degenerate: bool = False
    normalization: Optional[float] = None

    @property
    def q_stored_max(self) -> int:
        return len(self.values) - 2

    def psi(self, q: int) -> float:
        return self.evaluate(float(q))

    def evaluate(self, x: float) -> float:
        """Psi at a real argument x >= -1."""
        if x < -1:
            raise ValueError(f"profile argument must be >= -1, got {x}")
        if self.kind == "constant":
            return self.values[0]
        if self.kind == "power":
            return (x + 2.0) ** self.parameter
        if self.kind == "exp":
            return math.exp(self.parameter * x)
        axis = np.arange(len(self.values), dtype=float) - 1.0
        return float(np.interp(x, axis, self.values))

    def weights(self, q_max: int) -> np.ndarray:
        return np.array([self.psi(q) for q in range(-1, q_max + 1)])
