import math
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel


class CheckReport(BaseModel):
    """Verdict of one bound or property check, with the constant it used."""

    name: str
    operation: str
    passed: bool
    constant: Optional[float] = None
    margin: Optional[float] = None
    detail: str = ""
    columns: Tuple[str, ...] = ()
    rows: List[Tuple[float, ...]] = []

    def summary_line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        constant = "-" if self.constant is None else f"{self.constant:.6g}"
        margin = "-" if self.margin is None else f"{self.margin:g}"
        return f"{status} {self.name} [{self.operation}] C={constant} margin={margin} {self.detail}".rstrip()

    def write_csv(self, path: Path) -> Path:
        table = np.array(self.rows, dtype=float).reshape(len(self.rows), len(self.columns))
        np.savetxt(path, table, delimiter=",", fmt="%.17g", header=",".join(self.columns), comments="")
        return Path(path)


class SummaryLine(BaseModel):
    status: str
    name: str
    operation: str
    constant: Optional[float] = None
    margin: Optional[float] = None
    detail: str = ""

    @classmethod
    def parse(cls, line: str) -> "SummaryLine":
        status, name, operation, constant, margin, *rest = line.split(" ", 5)
        constant = constant.removeprefix("C=")
        margin = margin.removeprefix("margin=")
        return cls(
            status=status,
            name=name,
            operation=operation.strip("[]"),
            constant=None if constant == "-" else _finite_or_none(float(constant)),
            margin=None if margin == "-" else float(margin),
            detail=rest[0] if rest else "",
        )


def _finite_or_none(value: float) -> Optional[float]:
    return value if math.isfinite(value) else None


class ExperimentOutcome(BaseModel):
    experiment: str
    exit_code: int
    run_dir: str
    reports: List[CheckReport] = []

    @property
    def passed(self) -> bool:
        return self.exit_code == 0
