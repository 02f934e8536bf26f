import logging
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
from pydantic import BaseModel
from scipy.integrate import cumulative_trapezoid

from app.exceptions.lab import LedgerError

logger = logging.getLogger(__name__)

LEDGER_VERSION = "v1"
HEADER_PREFIX = "# machlab ledger"

COMPRESSIBLE_COLUMNS = (
    "t",
    "grad_v_inf",
    "grad_c_inf",
    "div_v_inf",
    "omega_inf",
    "energy_l2",
    "v_l2",
    "besov_2_2_1",
    "besov_hetero",
    "omega_b0_inf1",
    "div_b0_inf1",
    "grad_c_b0_inf1",
    "qv_inf",
    "c_inf",
    "acoustic_inf",
    "qv_c_inf",
    "div_b_half_4_1",
)
COMPRESSIBLE_ACCUMULATORS = {
    "V_eps": ("grad_v_inf", "grad_c_inf"),
    "grad_v_l1": ("grad_v_inf",),
    "div_v_l1": ("div_v_inf",),
    "acoustic_l1": ("acoustic_inf",),
    "div_b0_l1": ("div_b0_inf1",),
    "grad_c_b0_l1": ("grad_c_b0_inf1",),
    "div_b_half_l1": ("div_b_half_4_1",),
}
INCOMPRESSIBLE_COLUMNS = ("t", "omega_inf", "omega_l2", "energy_l2", "omega_b0_inf1", "grad_v_inf")
INCOMPRESSIBLE_ACCUMULATORS = {"grad_v_l1": ("grad_v_inf",)}
TRANSPORT_COLUMNS = ("t", "f_inf", "f_b0_inf1", "f_mass", "grad_v_inf", "div_v_b_half_4_1")
TRANSPORT_ACCUMULATORS = {"grad_v_l1": ("grad_v_inf",), "div_b_half_l1": ("div_v_b_half_4_1",)}


class RunLedger(BaseModel):
    """Per-step norm history of one run; accumulators are trapezoid integrals in t."""

    run_id: str
    config_hash: str = ""
    columns: Tuple[str, ...]
    accumulators: Dict[str, Tuple[str, ...]] = {}
    rows: List[Tuple[float, ...]] = []

    @classmethod
    def compressible(cls, run_id: str, config_hash: str = "") -> "RunLedger":
        return cls(run_id=run_id, config_hash=config_hash, columns=COMPRESSIBLE_COLUMNS,
                   accumulators=COMPRESSIBLE_ACCUMULATORS)

    @classmethod
    def incompressible(cls, run_id: str, config_hash: str = "") -> "RunLedger":
        return cls(run_id=run_id, config_hash=config_hash, columns=INCOMPRESSIBLE_COLUMNS,
                   accumulators=INCOMPRESSIBLE_ACCUMULATORS)

    @classmethod
    def transport(cls, run_id: str, config_hash: str = "") -> "RunLedger":
        return cls(run_id=run_id, config_hash=config_hash, columns=TRANSPORT_COLUMNS,
                   accumulators=TRANSPORT_ACCUMULATORS)

    def __len__(self) -> int:
        return len(self.rows)

    def append(self, values: Dict[str, float]) -> None:
        missing = [c for c in self.columns if c not in values]
        if missing:
            raise LedgerError("append", f"missing columns {missing}")
        t = float(values["t"])
        if self.rows and t <= self.rows[-1][0]:
            raise LedgerError("append", f"time {t!r} does not follow {self.rows[-1][0]!r}")
        self.rows.append(tuple(float(values[c]) for c in self.columns))

    def require(self, *names: str) -> None:
        known = set(self.columns) | set(self.accumulators)
        missing = [n for n in names if n not in known]
        if missing:
            raise LedgerError("require", f"ledger {self.run_id} lacks columns {missing}")
        if not self.rows:
            raise LedgerError("require", f"ledger {self.run_id} is empty")

    def column(self, name: str) -> np.ndarray:
        if name in self.accumulators:
            return self.accumulated(name)
        if name not in self.columns:
            raise LedgerError("column", f"ledger {self.run_id} has no column {name}")
        index = self.columns.index(name)
        return np.array([row[index] for row in self.rows], dtype=float)

    @property
    def times(self) -> np.ndarray:
        return self.column("t")

    def accumulated(self, name: str) -> np.ndarray:
        sources = self.accumulators[name]
        integrand = sum(self.column(s) for s in sources)
        if len(self.rows) < 2:
            return np.zeros(len(self.rows))
        return cumulative_trapezoid(integrand, self.times, initial=0.0)

    def final(self, name: str) -> float:
        values = self.column(name)
        if values.size == 0:
            raise LedgerError("final", f"ledger {self.run_id} is empty")
        return float(values[-1])

    def until(self, t_end: float) -> "RunLedger":
        """Copy restricted to t <= t_end; the last row is interpolated at t_end when it falls between rows."""
        self.require("t")
        times = self.times
        if t_end >= times[-1]:
            return self.model_copy(deep=True)
        if t_end <= times[0]:
            raise LedgerError("until", f"horizon {t_end!r} precedes the first row of {self.run_id}")
        data = np.asarray(self.rows, dtype=float)
        kept = [tuple(row) for row in data[times < t_end]]
        if not np.isclose(kept[-1][0], t_end, rtol=0.0, atol=1e-12):
            kept.append(tuple(float(np.interp(t_end, times, data[:, i])) for i in range(data.shape[1])))
        return self.model_copy(update={"rows": kept}, deep=True)

    def table(self) -> Tuple[Tuple[str, ...], np.ndarray]:
        names = self.columns + tuple(self.accumulators)
        data = np.column_stack([self.column(n) for n in names]) if self.rows else np.empty((0, len(names)))
        return names, data

    def to_csv(self, path: Path) -> Path:
        path = Path(path)
        names, data = self.table()
        spec = ";".join(f"{k}:{'+'.join(v)}" for k, v in self.accumulators.items())
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{HEADER_PREFIX} {LEDGER_VERSION} run_id={self.run_id} "
                     f"config_hash={self.config_hash} accumulators={spec}\n")
            fh.write(",".join(names) + "\n")
            np.savetxt(fh, data, delimiter=",", fmt="%.17g")
        return path

    @classmethod
    def from_csv(cls, path: Path) -> "RunLedger":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                meta = fh.readline().strip()
                names = tuple(fh.readline().strip().split(","))
                data = np.loadtxt(fh, delimiter=",", ndmin=2)
        except (OSError, ValueError) as e:
            logger.error(f"Failed to read ledger {path}: {str(e)}")
            raise LedgerError("from_csv", f"{path}: {str(e)}")

        if data.size == 0:
            data = np.empty((0, len(names)))
        if not meta.startswith(f"{HEADER_PREFIX} {LEDGER_VERSION}"):
            raise LedgerError("from_csv", f"{path}: not a {LEDGER_VERSION} ledger")
        fields = dict(item.split("=", 1) for item in meta.split()[4:] if "=" in item)
        accumulators = _parse_accumulators(fields.get("accumulators", ""))
        columns = tuple(n for n in names if n not in accumulators)
        if not columns or columns[0] != "t":
            raise LedgerError("from_csv", f"{path}: first column must be t")
        if data.size and data.shape[1] != len(names):
            raise LedgerError("from_csv", f"{path}: {data.shape[1]} values for {len(names)} columns")
        keep = [names.index(c) for c in columns]
        ledger = cls(run_id=fields.get("run_id", Path(path).stem),
                     config_hash=fields.get("config_hash", ""),
                     columns=columns, accumulators=accumulators)
        for row in data:
            ledger.append(dict(zip(columns, row[keep])))
        return ledger


def _parse_accumulators(spec: str) -> Dict[str, Tuple[str, ...]]:
    accumulators = {}
    for item in filter(None, spec.split(";")):
        name, sources = item.split(":", 1)
        accumulators[name] = tuple(sources.split("+"))
    return accumulators

