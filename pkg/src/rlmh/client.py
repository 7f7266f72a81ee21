"""Clients for the service: in-process or over HTTP, with one interface.

Both raise :class:`ConfigError` for configuration problems and
:class:`RlmhError` for failures while running.
"""

from __future__ import annotations

from typing import Protocol

from .errors import ConfigError, RlmhError
from .service import ops
from .service.schemas import (
    ExportRequest,
    ExportResponse,
    RunRequest,
    RunResponse,
    SweepRequest,
    SweepResponse,
)


class Client(Protocol):
    def run(self, req: RunRequest) -> RunResponse: ...
    def sweep(self, req: SweepRequest) -> SweepResponse: ...
    def export_policy(self, req: ExportRequest) -> ExportResponse: ...


class LocalClient:
    """Calls the service operations directly, no server needed."""

    def run(self, req: RunRequest) -> RunResponse:
        return ops.run(req)

    def sweep(self, req: SweepRequest) -> SweepResponse:
        return ops.run_sweep(req)

    def export_policy(self, req: ExportRequest) -> ExportResponse:
        return ops.export_policy(req)


class RemoteError(RlmhError):
    pass


class RemoteClient:
    """Talks to a running service; ``http`` may be any httpx-compatible client."""

    def __init__(self, base_url: str = "http://127.0.0.1:8000", http=None, timeout: float | None = None):
        import httpx

        self._http = http or httpx.Client(base_url=base_url, timeout=timeout)

    def _post(self, path: str, req, model):
        resp = self._http.post(path, json=req.model_dump(mode="json"))
        if resp.status_code == 200:
            return model.model_validate(resp.json())
        try:
            body = resp.json()
        except ValueError:
            body = {}
        message = body.get("message") or str(body.get("detail") or resp.text)
        if resp.status_code == 422:
            raise ConfigError(message, key=body.get("key"))
        raise RemoteError(f"server error {resp.status_code}: {message}")

    def run(self, req: RunRequest) -> RunResponse:
        return self._post("/runs", req, RunResponse)

    def sweep(self, req: SweepRequest) -> SweepResponse:
        return self._post("/sweeps", req, SweepResponse)

    def export_policy(self, req: ExportRequest) -> ExportResponse:
        return self._post("/policy-grids", req, ExportResponse)
