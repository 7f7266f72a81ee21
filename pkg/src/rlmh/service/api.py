"""FastAPI application.

Configuration problems answer 422, failures while running answer 500; both
carry an :class:`ErrorResponse` body. A run in which some replicate hit the
catastrophic-failure detector still succeeds and reports ``n_failed``.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import ConfigError, RlmhError
from . import ops
from .schemas import (
    ErrorResponse,
    ExportRequest,
    ExportResponse,
    RunRequest,
    RunResponse,
    SweepRequest,
    SweepResponse,
)

app = FastAPI(title="rlmh", version=__version__)


@app.exception_handler(ConfigError)
async def _config_error(request: Request, exc: ConfigError):
    body = ErrorResponse(kind="config", error=type(exc).__name__, message=str(exc), key=exc.key)
    return JSONResponse(status_code=422, content=body.model_dump())


@app.exception_handler(RlmhError)
async def _runtime_error(request: Request, exc: RlmhError):
    body = ErrorResponse(kind="runtime", error=type(exc).__name__, message=str(exc))
    return JSONResponse(status_code=500, content=body.model_dump())


@app.exception_handler(OSError)
async def _os_error(request: Request, exc: OSError):
    body = ErrorResponse(kind="runtime", error=type(exc).__name__, message=str(exc))
    return JSONResponse(status_code=500, content=body.model_dump())


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/runs", response_model=RunResponse)
def create_run(req: RunRequest) -> RunResponse:
    return ops.run(req)


@app.post("/sweeps", response_model=SweepResponse)
def create_sweep(req: SweepRequest) -> SweepResponse:
    return ops.run_sweep(req)


@app.post("/policy-grids", response_model=ExportResponse)
def create_policy_grid(req: ExportRequest) -> ExportResponse:
    return ops.export_policy(req)
