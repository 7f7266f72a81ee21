"""Metropolis-Hastings kernels with a position-dependent step size.

Two proposals are supported:

* ``rmala``: Riemannian MALA with preconditioner ``G(x) = G0 / eps(x)``, i.e.
  ``x* ~ N(x + eps(x) G0^{-1} grad log p(x), 2 eps(x) G0^{-1})``.
* ``barker``: the Barker proposal with a per-state scale ``sigma(x)``.

All acceptance arithmetic is carried out in log space. A proposal that lands
somewhere the density, gradient or step size is non-finite is rejected with
``alpha = 0`` and flagged on the transition.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .errors import InvalidParameter, NonFinite
from .numkit import LOG_2PI, CholeskyFactor, RngStream, cholesky, spd_inverse, spd_logdet
from .targets import TargetDistribution

EPS_MIN = 1e-6
EPS_MAX = 10.0
LOG_2 = float(np.log(2.0))
KERNELS = ("rmala", "barker", "mala")


class StepSizePolicy(Protocol):
    def __call__(self, x: np.ndarray) -> float: ...


@dataclass(frozen=True)
class ConstantPolicy:
    eps: float

    def __post_init__(self):
        if not EPS_MIN <= self.eps <= EPS_MAX:
            raise InvalidParameter(f"step size {self.eps} outside [{EPS_MIN}, {EPS_MAX}]")

    def __call__(self, x) -> float:
        return float(self.eps)


@dataclass(frozen=True)
class FunctionPolicy:
    """Wrap any callable returning a step size, clamping into the admissible range."""

    fn: Callable[[np.ndarray], float]

    def __call__(self, x) -> float:
        return float(np.clip(self.fn(x), EPS_MIN, EPS_MAX))


@dataclass(frozen=True)
class Preconditioner:
    """Fixed SPD matrix G0 with the factorizations the RMALA kernel needs."""

    g0: np.ndarray
    g0_inv: np.ndarray
    g0_inv_chol: CholeskyFactor
    logdet_g0: float

    @property
    def dim(self) -> int:
        return self.g0.shape[0]

    @classmethod
    def from_matrix(cls, g0) -> "Preconditioner":
        factor = cholesky(g0)
        g0_inv = spd_inverse(factor)
        return cls(factor.matrix(), g0_inv, cholesky(g0_inv), spd_logdet(factor))

    @classmethod
    def from_covariance(cls, cov) -> "Preconditioner":
        """G0 = cov^{-1}, so the proposal covariance is proportional to ``cov``."""
        inv_factor = cholesky(cov)
        g0 = spd_inverse(inv_factor)
        return cls(g0, inv_factor.matrix(), inv_factor, -spd_logdet(inv_factor))

    @classmethod
    def identity(cls, dim: int) -> "Preconditioner":
        eye = np.eye(dim)
        return cls(eye, eye.copy(), CholeskyFactor(eye.copy()), 0.0)


@dataclass(frozen=True)
class Point:
    """A chain state with its cached log-density and gradient."""

    x: np.ndarray
    log_p: float
    grad: np.ndarray

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.log_p) and np.all(np.isfinite(self.grad)))


def evaluate(target: TargetDistribution, x) -> Point:
    """Evaluate log p and its gradient without raising on non-finite results."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        return Point(x, -np.inf, np.full(x.shape, np.nan))
    with np.errstate(all="ignore"):
        try:
            log_p = float(target.log_density_fn(x))
            grad = np.asarray(target.grad_fn(x), dtype=np.float64)
        except (FloatingPointError, OverflowError, ValueError):
            return Point(x, -np.inf, np.full(x.shape, np.nan))
    if np.isnan(log_p):
        log_p = -np.inf
    return Point(x, log_p, grad)


def _as_point(target: TargetDistribution, x) -> Point:
    return x if isinstance(x, Point) else evaluate(target, x)


@dataclass
class Transition:
    """One MDP step: state (x, x*), action (eps(x), eps(x*)) and outcome."""

    x: np.ndarray
    x_star: np.ndarray
    x_next: np.ndarray
    alpha: float
    accepted: bool
    action: tuple[float, float]
    log_q_fwd: float
    log_q_rev: float
    log_p_x: float
    log_p_x_star: float
    log_alpha: float
    nonfinite: bool = False
    reward: float | None = None
    point_next: Point | None = field(default=None, repr=False)


# --- RMALA ------------------------------------------------------------------


def _rmala_mean(p: Point, eps: float, pc: Preconditioner) -> np.ndarray:
    return p.x + eps * (pc.g0_inv @ p.grad)


def _rmala_log_q(y: np.ndarray, p: Point, eps: float, pc: Preconditioner) -> float:
    """log N(y; nu(x), 2 eps G0^{-1})."""
    r = y - _rmala_mean(p, eps, pc)
    d = y.shape[0]
    logdet_cov = d * np.log(2.0 * eps) - pc.logdet_g0
    return -0.5 * d * LOG_2PI - 0.5 * logdet_cov - float(r @ pc.g0 @ r) / (4.0 * eps)


def rmala_propose(x, policy: StepSizePolicy, pc: Preconditioner, target: TargetDistribution,
                  rng: RngStream, z=None) -> tuple[np.ndarray, float]:
    p = _as_point(target, x)
    if not p.finite:
        raise NonFinite("log-density or gradient is non-finite at the current state")
    eps = float(policy(p.x))
    return _rmala_propose_eps(p, eps, pc, rng, z)


def _rmala_propose_eps(p: Point, eps: float, pc: Preconditioner, rng: RngStream, z=None):
    if z is None:
        z = rng.normal(p.x.shape[0])
    nu = _rmala_mean(p, eps, pc)
    x_star = nu + np.sqrt(2.0 * eps) * (pc.g0_inv_chol.lower @ z)
    return x_star, _rmala_log_q(x_star, p, eps, pc)


def rmala_accept_log_ratio(x, x_star, policy: StepSizePolicy, pc: Preconditioner,
                           target: TargetDistribution) -> float:
    """log p(x*) - log p(x) + log q(x | x*) - log q(x* | x); not clamped."""
    p, ps = _as_point(target, x), _as_point(target, x_star)
    return _rmala_log_ratio(p, ps, float(policy(p.x)), float(policy(ps.x)), pc)[0]


def _rmala_log_ratio(p: Point, ps: Point, eps_x: float, eps_s: float, pc: Preconditioner):
    log_q_fwd = _rmala_log_q(ps.x, p, eps_x, pc)
    log_q_rev = _rmala_log_q(p.x, ps, eps_s, pc)
    return ps.log_p - p.log_p + log_q_rev - log_q_fwd, log_q_fwd, log_q_rev


# --- Barker -----------------------------------------------------------------


def _barker_log_q(y: np.ndarray, p: Point, sigma: float) -> float:
    """Exact log-density of the Barker proposal from ``p`` to ``y``."""
    delta = y - p.x
    w = delta / sigma
    terms = LOG_2 - np.log(sigma) - 0.5 * LOG_2PI - 0.5 * w * w - np.logaddexp(0.0, -delta * p.grad)
    return float(np.sum(terms))


def barker_propose(x, policy: StepSizePolicy, target: TargetDistribution, rng: RngStream,
                   z=None, u=None) -> np.ndarray:
    p = _as_point(target, x)
    if not p.finite:
        raise NonFinite("log-density or gradient is non-finite at the current state")
    return _barker_propose_sigma(p, float(policy(p.x)), rng, z, u)


def _barker_propose_sigma(p: Point, sigma: float, rng: RngStream, z=None, u=None) -> np.ndarray:
    d = p.x.shape[0]
    z = sigma * (rng.normal(d) if z is None else np.asarray(z, dtype=np.float64))
    u = rng.uniform(d) if u is None else np.asarray(u, dtype=np.float64)
    with np.errstate(over="ignore"):
        keep = 1.0 / (1.0 + np.exp(-z * p.grad))
    b = np.where(u < keep, 1.0, -1.0)
    return p.x + b * z


def barker_accept_log_ratio(x, x_star, policy: StepSizePolicy, target: TargetDistribution) -> float:
    p, ps = _as_point(target, x), _as_point(target, x_star)
    return _barker_log_ratio(p, ps, float(policy(p.x)), float(policy(ps.x)))[0]


def _barker_log_ratio(p: Point, ps: Point, sig_x: float, sig_s: float):
    log_q_fwd = _barker_log_q(ps.x, p, sig_x)
    log_q_rev = _barker_log_q(p.x, ps, sig_s)
    return ps.log_p - p.log_p + log_q_rev - log_q_fwd, log_q_fwd, log_q_rev


# --- log q for arbitrary kernels (used by tests and rewards) -----------------


def proposal_log_density(kernel: str, y, x, eps: float, pc: Preconditioner | None,
                         target: TargetDistribution) -> float:
    p = _as_point(target, x)
    y = np.asarray(y, dtype=np.float64)
    if kernel == "barker":
        return _barker_log_q(y, p, eps)
    if kernel == "mala" or pc is None:
        pc = Preconditioner.identity(p.x.shape[0])
    return _rmala_log_q(y, p, eps, pc)


# --- the MH step ------------------------------------------------------------


def mh_step(kernel: str, x, policy: StepSizePolicy, pc: Preconditioner | None,
            target: TargetDistribution, rng: RngStream, u=None) -> Transition:
    """One propose / accept-reject cycle.

    ``x`` may be a raw vector or a cached ``Point``; passing the previous
    transition's ``point_next`` means each step costs exactly one log-density
    and one gradient evaluation, whichever kernel is used. ``u`` forces the
    acceptance uniform.
    """
    if kernel not in KERNELS:
        raise InvalidParameter(f"unknown kernel {kernel!r}")
    p = _as_point(target, x)
    if not p.finite:
        raise NonFinite("log-density or gradient is non-finite at the current state")
    if kernel == "mala" or (kernel == "rmala" and pc is None):
        pc = Preconditioner.identity(p.x.shape[0])

    eps_x = float(policy(p.x))
    with np.errstate(all="ignore"):
        if kernel == "barker":
            x_star = _barker_propose_sigma(p, eps_x, rng)
        else:
            x_star, _ = _rmala_propose_eps(p, eps_x, pc, rng)
        if u is None:
            u = rng.uniform()
        ps = evaluate(target, x_star)
        eps_s = float(policy(x_star)) if np.all(np.isfinite(x_star)) else np.nan
        ok = ps.finite and np.isfinite(eps_s)
        if ok:
            if kernel == "barker":
                log_ratio, log_q_fwd, log_q_rev = _barker_log_ratio(p, ps, eps_x, eps_s)
            else:
                log_ratio, log_q_fwd, log_q_rev = _rmala_log_ratio(p, ps, eps_x, eps_s, pc)
            ok = bool(np.isfinite(log_q_fwd)) and not np.isnan(log_ratio)

    if not ok:
        # certain rejection, p-invariance preserved
        return Transition(
            x=p.x, x_star=x_star, x_next=p.x, alpha=0.0, accepted=False,
            action=(eps_x, eps_s), log_q_fwd=np.nan, log_q_rev=np.nan,
            log_p_x=p.log_p, log_p_x_star=ps.log_p, log_alpha=-np.inf,
            nonfinite=True, point_next=p,
        )

    log_alpha = min(0.0, float(log_ratio))
    alpha = float(np.exp(log_alpha))
    accepted = bool(u < alpha)
    nxt = ps if accepted else p
    return Transition(
        x=p.x, x_star=x_star, x_next=nxt.x, alpha=alpha, accepted=accepted,
        action=(eps_x, eps_s), log_q_fwd=float(log_q_fwd), log_q_rev=float(log_q_rev),
        log_p_x=p.log_p, log_p_x_star=ps.log_p, log_alpha=log_alpha, point_next=nxt,
    )
