"""Constant step-size sweeps and policy-grid export."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..ddpg import NeuralPolicy
from ..errors import InvalidValue, RlmhError, UnsupportedDimension
from ..neuralnet import MlpParams
from .config import RunConfig
from .runner import build_reference, build_target, run_replicate

log = logging.getLogger(__name__)

PERCENTILES = (25, 50, 75)


@dataclass
class SweepRow:
    eps: float
    p25: float
    p50: float
    p75: float
    n_ok: int
    n_failed: int

    def as_list(self) -> list:
        return [self.eps, self.p25, self.p50, self.p75, self.n_ok, self.n_failed]


def mmd_percentiles(values: Sequence[float]) -> tuple[float, float, float]:
    """25/50/75th percentiles, linear interpolation between order statistics."""
    if not len(values):
        return (float("nan"),) * 3
    return tuple(float(v) for v in np.percentile(np.asarray(values, dtype=float), PERCENTILES))


def sweep(template: RunConfig, grid: Sequence[float], out_dir: str | Path | None = None) -> list[SweepRow]:
    """One constant-step-size run per grid point per replicate.

    Failed cells are recorded and the sweep carries on.
    """
    grid = [float(e) for e in grid]
    if not grid:
        raise InvalidValue("grid: the step-size grid is empty", key="grid")
    out = Path(out_dir or template.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    target = build_target(template)
    reference = build_reference(template, target)
    rows = []
    for i, eps in enumerate(grid):
        cfg = template.model_copy(update={"tuner": "none", "policy": "constant", "step_size": eps,
                                          "write_trace": False})
        mmds, failed = [], 0
        for r in range(template.replicates):
            try:
                res = run_replicate(cfg, r, None, target, reference)
            except RlmhError as exc:
                log.warning("sweep cell eps=%g replicate %d failed: %s", eps, r, exc)
                failed += 1
                continue
            if res.summary is None or not np.isfinite(res.summary.mmd):
                failed += 1
            else:
                mmds.append(res.summary.mmd)
        rows.append(SweepRow(eps, *mmd_percentiles(mmds), len(mmds), failed))
    write_sweep_table(rows, out / "sweep.csv")
    return rows


def write_sweep_table(rows: list[SweepRow], path: Path) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eps", "mmd_p25", "mmd_p50", "mmd_p75", "n_ok", "n_failed"])
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row.as_list()])
    return path


def policy_grid(actor: MlpParams, bbox: Sequence[float], resolution: int) -> np.ndarray:
    """Evaluate eps_theta on a regular (resolution+1)^2 grid over [x1lo, x1hi] x [x2lo, x2hi]."""
    if actor.n_in != 2:
        raise UnsupportedDimension(f"policy grids need a 2-D target, actor takes {actor.n_in} inputs")
    if resolution < 1:
        raise InvalidValue("resolution: must be at least 1", key="resolution")
    x1lo, x1hi, x2lo, x2hi = map(float, bbox)
    g1 = np.linspace(x1lo, x1hi, resolution + 1)
    g2 = np.linspace(x2lo, x2hi, resolution + 1)
    xx1, xx2 = np.meshgrid(g1, g2, indexing="ij")
    pts = np.column_stack([xx1.ravel(), xx2.ravel()])
    eps = NeuralPolicy(actor).batch(pts)
    return np.column_stack([pts, eps])


def policy_grid_export(actor: MlpParams, bbox: Sequence[float], resolution: int, path: str | Path) -> Path:
    grid = policy_grid(actor, bbox, resolution)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x1", "x2", "eps"])
        for row in grid:
            w.writerow([repr(float(v)) for v in row])
    return path


def read_summary(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
