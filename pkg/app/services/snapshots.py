import logging
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from app.exceptions.lab import GridError
from app.schemas.fields import Grid

logger = logging.getLogger(__name__)

MAGIC = b"MLF1"
HEADER = np.dtype([("magic", "S4"), ("n", "<u4"), ("L", "<f8"), ("count", "<u4")])
SAMPLE = np.dtype("<f8")


class SnapshotServices:
    """Binary real-space snapshots: header then row-major little-endian blocks."""

    @staticmethod
    def write(path: Path, grid: Grid, fields: Sequence[np.ndarray]) -> Path:
        path = Path(path)
        blocks = [np.asarray(values) for values in fields]
        for values in blocks:
            if values.shape != (grid.n, grid.n):
                raise GridError("snapshot write", f"field shape {values.shape}")
        path.parent.mkdir(parents=True, exist_ok=True)
        header = np.array([(MAGIC, grid.n, grid.box_length, len(blocks))], dtype=HEADER)
        with open(path, "wb") as fh:
            header.tofile(fh)
            for values in blocks:
                np.ascontiguousarray(values, dtype=SAMPLE).tofile(fh)
        logger.debug(f"Snapshot written: {path} ({len(fields)} fields)")
        return path

    @staticmethod
    def read(path: Path) -> Tuple[Grid, List[np.ndarray]]:
        with open(path, "rb") as fh:
            header = np.fromfile(fh, dtype=HEADER, count=1)
            if header.size != 1 or header["magic"][0] != MAGIC:
                raise GridError("snapshot read", f"{path} is not an MLF1 snapshot")
            n = int(header["n"][0])
            grid = Grid(n=n, box_length=float(header["L"][0]))
            count = int(header["count"][0])
            data = np.fromfile(fh, dtype=SAMPLE, count=count * n * n)
        if data.size != count * n * n:
            raise GridError("snapshot read", f"{path} is truncated")
        return grid, [block.reshape(n, n) for block in np.split(data, count)] if count else []
