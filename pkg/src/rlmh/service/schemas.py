"""Request and response models shared by the HTTP service and its clients."""

from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RunRequest(_Model):
    config: str = Field(..., description="YAML or JSON configuration document")
    overrides: list[str] = Field(default_factory=list, description="dotted key=value overrides")
    seed: Optional[int] = None
    replicates: Optional[int] = Field(None, ge=1)
    out: Optional[str] = None


class SweepRequest(RunRequest):
    grid: list[float]


class ExportRequest(_Model):
    checkpoint: str
    bbox: tuple[float, float, float, float]
    resolution: int = Field(40, ge=1)
    out: str


class ReplicateOut(_Model):
    replicate: int
    failed: bool
    failure: Optional[str] = None
    failure_iteration: Optional[int] = None
    summary: Optional[dict[str, Any]] = None
    evaluations: dict[str, int]
    param_hashes: dict[str, str] = Field(default_factory=dict)
    paths: dict[str, str] = Field(default_factory=dict)


class RunResponse(_Model):
    out_dir: str
    config_hash: str
    n_failed: int
    replicates: list[ReplicateOut]
    mmd_percentiles: Optional[dict[str, float]] = None

    @property
    def catastrophic(self) -> bool:
        return self.n_failed > 0


class SweepRowOut(_Model):
    eps: float
    p25: float
    p50: float
    p75: float
    n_ok: int
    n_failed: int


class SweepResponse(_Model):
    out_dir: str
    table: str
    rows: list[SweepRowOut]


class ExportResponse(_Model):
    path: str
    rows: int


class ErrorResponse(_Model):
    kind: Literal["config", "runtime"]
    error: str
    message: str
    key: Optional[str] = None
