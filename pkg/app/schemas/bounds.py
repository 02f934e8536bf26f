import math
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from app.schemas.littlewood_paley import BesovProfile


class LifespanModel(BaseModel):
    model_config = ConfigDict(frozen=True)

    profile: BesovProfile
    alpha: float = Field(..., ge=0)
    beta: float = Field(..., gt=0, le=1)
    C0: float = Field(1.0, gt=0)
    eta: Optional[float] = None

    @classmethod
    def from_profile(cls, profile: BesovProfile, C0: float = 1.0, eta: Optional[float] = None) -> "LifespanModel":
        alpha = profile.growth_exponent
        beta = 1.0 if alpha <= 1.0 else 1.0 / alpha
        return cls(profile=profile, alpha=alpha, beta=beta, C0=C0, eta=eta)


class LifespanPrediction(BaseModel):
    model_config = ConfigDict(frozen=True)

    eps: float
    T: float = Field(..., description="(1/C0) log log Psi(log 1/eps)")
    defined: bool
    T_phi: float = Field(..., description="(1/C0) log(-log(Phi) / 2)")
    defined_phi: bool

    @property
    def ratio(self) -> float:
        if self.T > 0 and self.T_phi > 0:
            return self.T_phi / self.T
        return math.nan
