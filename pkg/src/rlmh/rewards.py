"""Per-transition rewards for training the step-size policy."""

from __future__ import annotations

import enum
import math

import numpy as np

from .errors import IncompleteTransition, OutOfRange
from .kernels import Transition

ALPHA_FLOOR = 1e-300
JUMP_FLOOR = 1e-150


class RewardKind(str, enum.Enum):
    SJD = "sjd"
    RB_SJD = "rb_sjd"
    LESJD = "lesjd"
    CDLB = "cdlb"


def _xlogx(a: float) -> float:
    return 0.0 if a <= 0.0 else a * math.log(a)


def entropy_term(alpha: float) -> float:
    """Binary entropy of the accept/reject coin, zero at both endpoints."""
    if not 0.0 <= alpha <= 1.0:
        raise OutOfRange(f"alpha={alpha} outside [0, 1]")
    return -_xlogx(alpha) - _xlogx(1.0 - alpha)


def _require(t: Transition, *names: str) -> None:
    for name in names:
        value = getattr(t, name, None)
        if value is None:
            raise IncompleteTransition(f"transition is missing {name}")


def compute_reward(kind: RewardKind | str, t: Transition) -> float:
    kind = RewardKind(kind)
    _require(t, "x", "x_star", "x_next", "alpha")
    alpha = float(t.alpha)
    if kind is RewardKind.SJD:
        d = t.x - t.x_next
        return float(d @ d)
    jump = t.x - t.x_star
    if not np.all(np.isfinite(jump)):
        # only reachable for non-finite proposals, where alpha is 0
        jump = np.zeros_like(t.x)
    if kind is RewardKind.RB_SJD:
        return alpha * float(jump @ jump)
    if kind is RewardKind.LESJD:
        return math.log(max(alpha, ALPHA_FLOOR)) + 2.0 * math.log(max(float(np.linalg.norm(jump)), JUMP_FLOOR))

    _require(t, "log_p_x", "log_p_x_star", "log_q_fwd")
    if alpha == 0.0:
        return 0.0
    exploit = alpha * (t.log_p_x_star - t.log_p_x)
    explore = -alpha * t.log_q_fwd
    return float(exploit + entropy_term(alpha) + explore)


def exploration_bound(alpha: float, log_q_fwd: float) -> float:
    """Inner bracket of the exploration lower bound at a realised (x, x*).

    -(1 - a) log(1 - a) - a [log q(x*|x) + log a]; equals the entropy term plus
    -a log q(x*|x).
    """
    return -_xlogx(1.0 - alpha) - alpha * log_q_fwd - _xlogx(alpha)


def attach_reward(kind: RewardKind | str, t: Transition) -> Transition:
    t.reward = compute_reward(kind, t)
    return t
