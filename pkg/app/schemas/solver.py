from typing import List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field

from app.schemas.fields import FlowState, IncompressibleState
from app.schemas.ledger import RunLedger
from app.schemas.littlewood_paley import BesovProfile


class StepperConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    cfl: float = Field(0.4, gt=0, lt=1, description="Advective CFL number")
    max_dt: float = Field(0.01, gt=0)
    grad_threshold: float = Field(1e4, gt=0, description="Blowup bound on ||grad v||_inf")
    besov_threshold: float = Field(1e8, gt=0, description="Blowup bound on ||(v, c)||_{B^2_{2,1}}")
    dealias_every_step: bool = True
    fixed_dt: Optional[float] = Field(None, gt=0)
    profile: Optional[BesovProfile] = None
    # test hooks
    nonlinear: bool = True
    acoustic: bool = True
    project_incompressible: bool = False


class RunResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    final: Union[FlowState, IncompressibleState]
    ledger: RunLedger
    steps: int
    checkpoints: List[Tuple[float, Union[FlowState, IncompressibleState]]] = []

    def at(self, time: float, tolerance: float = 1e-12):
        for t, state in self.checkpoints:
            if abs(t - time) <= tolerance:
                return state
        return None
