from pydantic import BaseModel, ConfigDict, Field

from app.schemas.fields import SpectralScalarField, SpectralVectorField


class AcousticPair(BaseModel):
    """Gamma = Qv - i grad |D|^-1 c and Upsilon = |D|^-1 div v + i c."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    gamma_field: SpectralVectorField
    upsilon_field: SpectralScalarField
    eps: float = Field(..., gt=0, le=1)


class StrichartzMeasurement(BaseModel):
    model_config = ConfigDict(frozen=True)

    eps: float
    T: float
    p: float
    r: float
    decay_exponent: float
    norm: float
    scaled: float = Field(..., description="norm / eps^decay_exponent")
    window: float = Field(..., description="Pre-wraparound time 0.45 L eps")
    post_wraparound: bool
    samples: int
