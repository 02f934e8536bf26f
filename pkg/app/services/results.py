import logging
import math
from pathlib import Path
from typing import List

from app.exceptions.lab import LedgerError, RunNotFoundException
from app.schemas.ledger import RunLedger
from app.schemas.reports import SummaryLine
from app.schemas.results import LedgerColumns, LedgerList, RunInfo, RunSummary

logger = logging.getLogger(__name__)

SUMMARY_FILE = "summary.txt"


class ResultsServices:
    @staticmethod
    def run_path(root: Path, run_id: str) -> Path:
        path = Path(root) / run_id
        if "/" in run_id or run_id.startswith(".") or not (path / SUMMARY_FILE).is_file():
            raise RunNotFoundException(run_id)
        return path

    @staticmethod
    def list_runs(root: Path) -> List[RunInfo]:
        root = Path(root)
        if not root.is_dir():
            logger.warning(f"Output directory {root} does not exist")
            return []
        runs = []
        for path in sorted(p for p in root.iterdir() if (p / SUMMARY_FILE).is_file()):
            try:
                lines = ResultsServices.read_summary(root, path.name).lines
            except LedgerError:
                logger.warning(f"Skipping run {path.name}: unreadable summary")
                continue
            experiment, _, config_hash = path.name.rpartition("-")
            failed = sum(1 for line in lines if line.status != "PASS")
            runs.append(
                RunInfo(
                    run_id=path.name,
                    experiment=experiment or path.name,
                    config_hash=config_hash if experiment else "",
                    checks=len(lines),
                    failed=failed,
                    passed=(failed == 0) if lines else None,
                )
            )
        return runs

    @staticmethod
    def read_summary(root: Path, run_id: str) -> RunSummary:
        path = ResultsServices.run_path(root, run_id) / SUMMARY_FILE
        try:
            text = path.read_text(encoding="utf-8")
            lines = [SummaryLine.parse(line) for line in text.splitlines() if line.strip()]
        except (OSError, ValueError) as e:
            logger.error(f"Failed to read summary of {run_id}: {str(e)}")
            raise LedgerError("read_summary", f"{run_id}: {str(e)}")
        return RunSummary(run_id=run_id, lines=lines)

    @staticmethod
    def list_ledgers(root: Path, run_id: str) -> LedgerList:
        """Ledger CSVs of a run, nested experiment directories included, relative to the run."""
        path = ResultsServices.run_path(root, run_id)
        names = sorted(
            p.relative_to(path).as_posix() for p in path.rglob("*.csv") if p.parent.name == "ledgers"
        )
        return LedgerList(run_id=run_id, ledgers=names)

    @staticmethod
    def read_ledger(root: Path, run_id: str, name: str) -> LedgerColumns:
        if name not in ResultsServices.list_ledgers(root, run_id).ledgers:
            raise RunNotFoundException(f"{run_id}/{name}")
        ledger = RunLedger.from_csv(ResultsServices.run_path(root, run_id) / name)
        names, data = ledger.table()
        columns = {
            column: [float(v) if math.isfinite(v) else None for v in data[:, i]]
            for i, column in enumerate(names)
        }
        return LedgerColumns(
            run_id=run_id, name=name, ledger_id=ledger.run_id, config_hash=ledger.config_hash, columns=columns
        )
