"""Service operations: the code path shared by the HTTP routes and the in-process client."""

from __future__ import annotations

import math
from pathlib import Path

from ..errors import InvalidValue
from ..harness.config import RunConfig, load_config
from ..harness.runner import run_experiment
from ..harness.sweep import mmd_percentiles, policy_grid_export, sweep
from ..neuralnet import load_params
from .schemas import (
    ExportRequest,
    ExportResponse,
    ReplicateOut,
    RunRequest,
    RunResponse,
    SweepRequest,
    SweepResponse,
    SweepRowOut,
)


def resolve_config(req: RunRequest) -> RunConfig:
    overrides = list(req.overrides)
    if req.seed is not None:
        overrides.append(f"seed={req.seed}")
    if req.replicates is not None:
        overrides.append(f"replicates={req.replicates}")
    if req.out is not None:
        overrides.append(f"output_dir={req.out}")
    return load_config(req.config, overrides)


def _finite(d: dict | None) -> dict | None:
    # JSON has no NaN; missing metrics travel as null
    if d is None:
        return None
    return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}


def run(req: RunRequest) -> RunResponse:
    cfg = resolve_config(req)
    result = run_experiment(cfg)
    reps = []
    for r in result.replicates:
        doc = r.to_dict()
        doc["summary"] = _finite(doc["summary"])
        reps.append(ReplicateOut(**doc))
    mmds = result.mmds()
    pct = dict(zip(("p25", "p50", "p75"), mmd_percentiles(mmds))) if mmds else None
    return RunResponse(out_dir=str(result.out_dir), config_hash=cfg.config_hash(),
                       n_failed=sum(r.failed for r in result.replicates), replicates=reps,
                       mmd_percentiles=pct)


def run_sweep(req: SweepRequest) -> SweepResponse:
    cfg = resolve_config(req)
    rows = sweep(cfg, req.grid, cfg.output_dir)
    out = Path(cfg.output_dir)
    return SweepResponse(
        out_dir=str(out),
        table=str(out / "sweep.csv"),
        rows=[SweepRowOut(eps=r.eps, p25=r.p25, p50=r.p50, p75=r.p75, n_ok=r.n_ok, n_failed=r.n_failed)
              for r in rows],
    )


def export_policy(req: ExportRequest) -> ExportResponse:
    if not Path(req.checkpoint).is_file():
        raise InvalidValue(f"checkpoint: no such file {req.checkpoint!r}", key="checkpoint")
    actor = load_params(req.checkpoint)
    path = policy_grid_export(actor, req.bbox, req.resolution, req.out)
    return ExportResponse(path=str(path), rows=(req.resolution + 1) ** 2)
