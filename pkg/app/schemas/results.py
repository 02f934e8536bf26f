from typing import Dict, List, Optional

from pydantic import BaseModel

from app.schemas.reports import SummaryLine


class RunInfo(BaseModel):
    run_id: str
    experiment: str
    config_hash: str
    checks: int
    failed: int
    passed: Optional[bool] = None


class RunSummary(BaseModel):
    run_id: str
    lines: List[SummaryLine]


class LedgerList(BaseModel):
    run_id: str
    ledgers: List[str]


class LedgerColumns(BaseModel):
    run_id: str
    name: str
    ledger_id: str
    config_hash: str
    # non-finite samples (e.g. an unset hetero norm) are sent as null
    columns: Dict[str, List[Optional[float]]]
