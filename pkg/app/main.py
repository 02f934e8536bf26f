from fastapi import FastAPI, Request, status
from fastapi.responses import JSONResponse
from app.config import get_settings
from app.routes import runs_router
from app.exceptions.lab import (
    LabBaseException,
    RunNotFoundException,
    LedgerError,
    ConfigError,
)
import logging
import sys


logging.basicConfig(
    level=get_settings().log_level,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    handlers=[logging.StreamHandler(sys.stdout)],
)

logger = logging.getLogger(__name__)
logger.info("Results API starting...")

app = FastAPI(title="machlab results")


@app.exception_handler(LabBaseException)
async def lab_exception_handler(request: Request, exc: LabBaseException):
    if isinstance(exc, RunNotFoundException):
        return JSONResponse(
            status_code=status.HTTP_404_NOT_FOUND, content={"detail": str(exc)}
        )
    elif isinstance(exc, (LedgerError, ConfigError)):
        return JSONResponse(
            status_code=status.HTTP_400_BAD_REQUEST,
            content={"detail": str(exc)}
        )

    logger.error(f"Unhandled lab error: {str(exc)}")
    return JSONResponse(
        status_code=status.HTTP_400_BAD_REQUEST,
        content={"detail": "Could not read the run"},
    )


app.include_router(runs_router, tags=["runs"])


@app.get("/")
async def health_check():
    return {"status": "healthy"}
