import hashlib
import math
from typing import Literal, Optional, Tuple, get_args

from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.schemas.fields import DEFAULT_BOX_LENGTH, Grid

ExperimentName = Literal[
    "acoustic-decay", "incompressible-limit", "transport-log", "strichartz-sweep", "lifespan-table", "selftest"
]
EXPERIMENTS = get_args(ExperimentName)
INITIAL_CATALOG = ("taylor-green-ill", "vortex-pair-ill", "random-band", "well-prepared-contrast")


def parse_initial_spec(spec: str) -> Tuple[str, Optional[float]]:
    """'random-band:4' -> ('random-band', 4.0); plain names carry no parameter."""
    name, _, parameter = spec.partition(":")
    if name not in INITIAL_CATALOG:
        raise ValueError(f"unknown initial data {name}; expected one of {', '.join(INITIAL_CATALOG)}")
    if name == "random-band":
        if not parameter:
            raise ValueError("random-band needs a decay rate, e.g. random-band:4")
        rate = float(parameter)
        if not rate > 0:
            raise ValueError(f"random-band decay rate must be positive, got {rate}")
        return name, rate
    if parameter:
        raise ValueError(f"initial data {name} takes no parameter")
    return name, None


def parse_profile_spec(spec: str) -> Tuple[str, Optional[float]]:
    """'constant' | 'power:a' | 'exp:a' | 'from-data'"""
    kind, _, parameter = spec.partition(":")
    if kind in ("constant", "from-data"):
        if parameter:
            raise ValueError(f"profile {kind} takes no parameter")
        return kind, None
    if kind in ("power", "exp"):
        if not parameter:
            raise ValueError(f"profile {kind} needs an exponent, e.g. {kind}:1")
        alpha = float(parameter)
        if not alpha > 0:
            raise ValueError(f"profile exponent must be positive, got {alpha}")
        return kind, alpha
    raise ValueError(f"unknown profile {spec}; expected constant, power:a, exp:a or from-data")


class ExperimentConfig(BaseModel):
    """Flat experiment configuration; every key has a default except the experiment name."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    experiment: ExperimentName
    n: int = 256
    box_length: float = Field(DEFAULT_BOX_LENGTH, gt=0)
    eps: Tuple[float, ...] = (0.2, 0.1, 0.05, 0.025)
    T: float = Field(1.0, gt=0)
    gamma: float = Field(1.4, gt=1)
    initial: str = "taylor-green-ill"
    amplitude: float = Field(1.0, gt=0)
    seed: int = Field(12345, ge=0)
    profile: str = "from-data"
    output_dir: str = "runs"
    snapshot_stride: int = Field(0, ge=0)
    snapshot_interval: float = Field(0.1, gt=0)
    cfl: float = Field(0.4, gt=0, lt=1)
    max_dt: float = Field(0.01, gt=0)
    margin: float = Field(2.0, ge=1)

    @field_validator("n")
    @classmethod
    def validate_n(cls, n: int) -> int:
        if n < 8:
            raise ValueError(f"n must be at least 8, got {n}")
        if n & (n - 1):
            raise ValueError(f"n must be a power of two, got {n}")
        return n

    @field_validator("eps", mode="before")
    @classmethod
    def split_eps(cls, value):
        if isinstance(value, str):
            return tuple(float(item) for item in value.split(",") if item.strip())
        return value

    @field_validator("eps")
    @classmethod
    def validate_eps(cls, eps: Tuple[float, ...]) -> Tuple[float, ...]:
        if not eps:
            raise ValueError("eps needs at least one value")
        for value in eps:
            if not 0.0 < value <= 1.0 or math.isnan(value):
                raise ValueError("eps must be in (0,1]")
        return eps

    @field_validator("initial")
    @classmethod
    def validate_initial(cls, spec: str) -> str:
        parse_initial_spec(spec)
        return spec

    @field_validator("profile")
    @classmethod
    def validate_profile(cls, spec: str) -> str:
        parse_profile_spec(spec)
        return spec

    @property
    def grid(self) -> Grid:
        return Grid(n=self.n, box_length=self.box_length)

    @property
    def gamma_bar(self) -> float:
        return (self.gamma - 1.0) / 2.0

    def canonical_text(self) -> str:
        lines = []
        for key, value in self.model_dump().items():
            if isinstance(value, tuple):
                value = ",".join(repr(v) for v in value)
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode("utf-8")).hexdigest()[:16]
