"""Dense linear algebra and random-number plumbing used by every other module.

Everything here works in float64. Cholesky is the only factorization; all
quantities a Langevin kernel needs (inverse, inverse square root, determinant)
are derived from it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, NonFinite, NotSpd, NotSymmetric

SYMMETRY_RTOL = 1e-12
LOG_2PI = float(np.log(2.0 * np.pi))


def as_vector(x, dim: int | None = None) -> np.ndarray:
    """Coerce ``x`` to a finite 1-D float64 array, optionally checking its length."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1:
        raise DimensionMismatch(f"expected a vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise DimensionMismatch(f"expected length {dim}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise NonFinite("vector has non-finite entries")
    return v


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular ``lower`` with ``lower @ lower.T`` equal to the factored matrix."""

    lower: np.ndarray

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def matrix(self) -> np.ndarray:
        return self.lower @ self.lower.T


def cholesky(m) -> CholeskyFactor:
    """Factor a symmetric positive definite matrix.

    Raises NotSymmetric when the relative asymmetry exceeds 1e-12 and NotSpd
    when a pivot is not strictly positive.
    """
    a = np.atleast_2d(np.asarray(m, dtype=np.float64))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFinite("matrix has non-finite entries")
    scale = max(float(np.max(np.abs(a))), np.finfo(float).tiny)
    if np.max(np.abs(a - a.T)) > SYMMETRY_RTOL * scale:
        raise NotSymmetric("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    try:
        lower = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotSpd(str(exc)) from None
    if not np.all(np.diag(lower) > 0.0) or not np.all(np.isfinite(lower)):
        raise NotSpd("non-positive pivot")
    return CholeskyFactor(lower)


def _check_dim(factor: CholeskyFactor, v: np.ndarray) -> None:
    if v.shape[0] != factor.dim:
        raise DimensionMismatch(f"factor has dimension {factor.dim}, vector has {v.shape[0]}")


def spd_solve(factor: CholeskyFactor, v) -> np.ndarray:
    """Solve ``(L L^T) w = v``."""
    v = np.asarray(v, dtype=np.float64)
    _check_dim(factor, v)
    y = solve_triangular(factor.lower, v, lower=True)
    return solve_triangular(factor.lower.T, y, lower=False)


def spd_inverse(factor: CholeskyFactor) -> np.ndarray:
    inv = spd_solve(factor, np.eye(factor.dim))
    return 0.5 * (inv + inv.T)


def spd_logdet(factor: CholeskyFactor) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(factor.lower))))


def mvn_sample(mean, cov_factor: CholeskyFactor, rng: "RngStream", z=None) -> np.ndarray:
    """Draw ``mean + L z`` with ``z`` standard normal.

    Passing ``z`` explicitly freezes the noise, which is how tests pin draws.
    """
    mean = np.asarray(mean, dtype=np.float64)
    _check_dim(cov_factor, mean)
    if z is None:
        z = rng.normal(mean.shape[0])
    return mean + cov_factor.lower @ z


def mvn_logpdf(x, mean, cov_factor: CholeskyFactor) -> float:
    x = np.asarray(x, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    _check_dim(cov_factor, x)
    _check_dim(cov_factor, mean)
    r = solve_triangular(cov_factor.lower, x - mean, lower=True)
    d = x.shape[0]
    return -0.5 * d * LOG_2PI - 0.5 * spd_logdet(cov_factor) - 0.5 * float(r @ r)


class RngStream:
    """A reproducible random stream keyed by ``(seed, stream_id)``.

    Distinct stream ids map to distinct spawn keys of a numpy SeedSequence, so
    replicates draw from statistically independent PCG64 streams.
    """

    def __init__(self, seed: int, stream_id: int = 0, _path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._key = (self.stream_id, *_path)
        ss = np.random.SeedSequence(self.seed, spawn_key=self._key)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def normal(self, size=None) -> np.ndarray:
        return self.generator.standard_normal(size)

    def uniform(self, size=None):
        return self.generator.random(size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size=size)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self.generator.choice(n, size=size, replace=replace)

    def spawn(self, child_id: int) -> "RngStream":
        """Derive an independent stream for a sub-task (e.g. network init)."""
        return RngStream(self.seed, self.stream_id, (*self._key[1:], int(child_id)))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"
