"""Sample-quality metrics: Gaussian-kernel MMD with a median-heuristic lengthscale."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import (
    DegenerateLengthscale,
    DimensionMismatch,
    InvalidParameter,
    TooFewSamples,
    WindowTooLarge,
)
from .kernels import Transition
from .targets import ReferenceSet

BLOCK = 2048


@dataclass(frozen=True)
class KernelConfig:
    lengthscale: float

    def __post_init__(self):
        if not self.lengthscale > 0:
            raise InvalidParameter("lengthscale must be positive")


@dataclass(frozen=True)
class RunSummary:
    aar: float
    mean_esjd: float
    mmd: float
    n_eval: int
    nonfinite_count: int
    lengthscale: float

    def to_dict(self) -> dict:
        return asdict(self)


def _as_samples(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    return a


def _thin_to(samples: np.ndarray, max_points: int | None) -> np.ndarray:
    m = samples.shape[0]
    if max_points is None or m <= max_points:
        return samples
    idx = np.linspace(0, m - 1, max_points).round().astype(int)
    return samples[idx]


def median_heuristic(samples, exclude_diagonal: bool = False, max_points: int | None = None) -> float:
    """Half the median of all pairwise distances ||y_i - y_j||, 1 <= i, j <= m.

    The zero self-distances are part of the index set unless
    ``exclude_diagonal`` is set. ``max_points`` evaluates the heuristic on an
    evenly spaced subsample, which keeps the O(m^2) cost bounded.
    """
    y = _thin_to(_as_samples(samples), max_points)
    m = y.shape[0]
    if m < 2:
        raise TooFewSamples("the median heuristic needs at least two samples")
    off = pdist(y)
    dists = np.concatenate([off, off]) if exclude_diagonal else np.concatenate([np.zeros(m), off, off])
    ell = 0.5 * float(np.median(dists))
    if not ell > 0:
        raise DegenerateLengthscale("median pairwise distance is zero")
    return ell


def gaussian_kernel(x, y, cfg: KernelConfig) -> float:
    """exp(-||x - y||^2 / lengthscale^2)."""
    diff = np.atleast_1d(np.asarray(x, dtype=np.float64)) - np.atleast_1d(np.asarray(y, dtype=np.float64))
    return float(np.exp(-(diff @ diff) / cfg.lengthscale**2))


def _kernel_sum(a: np.ndarray, b: np.ndarray, ell: float) -> float:
    total = 0.0
    for i in range(0, a.shape[0], BLOCK):
        blk = cdist(a[i:i + BLOCK], b, "sqeuclidean")
        total += float(np.exp(-blk / ell**2).sum())
    return total


def mmd_squared(p_samples, q_samples, cfg: KernelConfig) -> float:
    """Biased (V-statistic) MMD^2, diagonal terms included."""
    x, y = _as_samples(p_samples), _as_samples(q_samples)
    if x.shape[1] != y.shape[1]:
        raise DimensionMismatch(f"sample dimensions differ: {x.shape[1]} vs {y.shape[1]}")
    if x.shape[0] < 1 or y.shape[0] < 1:
        raise TooFewSamples("MMD needs at least one sample on each side")
    n, m = x.shape[0], y.shape[0]
    sxx = _kernel_sum(x, x, cfg.lengthscale)
    syy = _kernel_sum(y, y, cfg.lengthscale)
    sxy = _kernel_sum(x, y, cfg.lengthscale)
    # grouped so identical sample sets cancel exactly
    return (sxx / n**2 - sxy / (n * m)) + (syy / m**2 - sxy / (n * m))


def mmd(p_samples, q_samples, cfg: KernelConfig) -> float:
    return float(np.sqrt(max(0.0, mmd_squared(p_samples, q_samples, cfg))))


def summarize(trace: Sequence[Transition], eval_window: int, reference: ReferenceSet | None,
              cfg: KernelConfig | None = None, max_reference_points: int = 2000) -> RunSummary:
    """Statistics over the last ``eval_window`` transitions of a run.

    With no kernel config the lengthscale comes from the median heuristic on
    the reference samples. Without a reference the MMD is reported as NaN.
    """
    if eval_window < 1 or eval_window > len(trace):
        raise WindowTooLarge(f"window {eval_window} does not fit a trace of length {len(trace)}")
    window = trace[len(trace) - eval_window:]
    accepted = np.array([t.accepted for t in window], dtype=float)
    jumps = np.array([t.x - t.x_next for t in window])
    states = np.array([t.x_next for t in window])
    nonfinite = sum(bool(t.nonfinite) for t in window)
    if reference is None:
        return RunSummary(float(accepted.mean()), float(np.mean(np.sum(jumps**2, axis=1))),
                          float("nan"), eval_window, nonfinite, float("nan"))
    if cfg is None:
        cfg = KernelConfig(median_heuristic(reference.samples, max_points=max_reference_points))
    return RunSummary(
        aar=float(accepted.mean()),
        mean_esjd=float(np.mean(np.sum(jumps**2, axis=1))),
        mmd=mmd(states, reference.samples, cfg),
        n_eval=eval_window,
        nonfinite_count=nonfinite,
        lengthscale=cfg.lengthscale,
    )
