import logging
from pathlib import Path
from typing import List

from fastapi import APIRouter, Depends, status

from app.config import get_settings
from app.schemas.results import LedgerColumns, LedgerList, RunInfo, RunSummary
from app.services.results import ResultsServices

logger = logging.getLogger(__name__)

ERROR_MESSAGES = {
    status.HTTP_400_BAD_REQUEST: ("Bad request", "Malformed ledger or summary"),
    status.HTTP_404_NOT_FOUND: ("Not found", "Run not found"),
}

ERROR_RESPONSES = {
    status_code: {
        "description": description,
        "content": {"application/json": {"example": {"detail": message}}},
    }
    for status_code, (description, message) in ERROR_MESSAGES.items()
}

runs_router = APIRouter(prefix="/runs", tags=["runs"], responses=ERROR_RESPONSES)


def get_output_root() -> Path:
    return Path(get_settings().output_dir)


@runs_router.get(
    "",
    response_model=List[RunInfo],
    status_code=status.HTTP_200_OK,
    summary="List runs",
    description="Experiment output directories under the configured output root, with their verdicts",
)
def list_runs(root: Path = Depends(get_output_root)) -> List[RunInfo]:
    return ResultsServices.list_runs(root)


@runs_router.get(
    "/{run_id}/summary",
    response_model=RunSummary,
    status_code=status.HTTP_200_OK,
    summary="Get run summary",
    description="Parsed summary lines: status, check name, operation, fitted constant, margin, detail",
)
def get_summary(run_id: str, root: Path = Depends(get_output_root)) -> RunSummary:
    return ResultsServices.read_summary(root, run_id)


@runs_router.get(
    "/{run_id}/ledgers",
    response_model=LedgerList,
    status_code=status.HTTP_200_OK,
    summary="List ledgers of a run",
)
def list_ledgers(run_id: str, root: Path = Depends(get_output_root)) -> LedgerList:
    return ResultsServices.list_ledgers(root, run_id)


@runs_router.get(
    "/{run_id}/ledgers/{name:path}",
    response_model=LedgerColumns,
    status_code=status.HTTP_200_OK,
    summary="Get ledger columns",
    description="""
    Ledger columns, accumulators included, as JSON arrays.

    **Examples:**
    - `/runs/acoustic-decay-0123456789abcdef/ledgers/ledgers/eps=0.1.csv`
    - `/runs/selftest-0123456789abcdef/ledgers/transport-log/ledgers/shear.csv`
    """,
)
def get_ledger(run_id: str, name: str, root: Path = Depends(get_output_root)) -> LedgerColumns:
    return ResultsServices.read_ledger(root, run_id, name)
