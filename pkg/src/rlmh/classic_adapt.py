"""Window-based multiplicative tuners for a constant step size.

Every ``window`` iterations the step size is multiplied or divided by
``factor`` and clamped to ``[lo, hi]``. Two rules are provided: matching the
average acceptance rate to 0.574, and hill-climbing on the mean squared jump
distance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientData, InvalidParameter
from .kernels import Transition

TARGET_AAR = 0.574


@dataclass
class TunerState:
    eps: float = 0.1
    window: int = 5000
    factor: float = 1.05
    lo: float = 1e-4
    hi: float = 2.0
    direction: int = 1  # +1 for the last move up, -1 for down
    history: list[float] = field(default_factory=list)  # per-window statistic, most recent first
    _n: int = 0
    _sum: float = 0.0

    def __post_init__(self):
        if self.window < 1 or self.factor <= 1 or not 0 < self.lo < self.hi:
            raise InvalidParameter("invalid tuner settings")
        self.eps = float(np.clip(self.eps, self.lo, self.hi))

    def _move(self, direction: int) -> float:
        self.direction = direction
        scaled = self.eps * self.factor if direction > 0 else self.eps / self.factor
        self.eps = float(np.clip(scaled, self.lo, self.hi))
        return self.eps


def update_step_size_esjd(st: TunerState) -> float:
    """Repeat the last move if the latest window's ESJD beat the one before, else reverse."""
    if len(st.history) < 2:
        raise InsufficientData("ESJD tuning compares two full windows")
    d1, d2 = st.history[0], st.history[1]
    return st._move(st.direction if d1 > d2 else -st.direction)


def update_step_size_aar(st: TunerState, two_window: bool = False) -> float:
    """Raise eps when the window acceptance rate exceeds 0.574, lower it otherwise.

    With ``two_window`` the history holds acceptance rates and the rule
    instead keeps the last direction while |AAR - 0.574| shrinks.
    """
    if not st.history:
        raise InsufficientData("AAR tuning needs one full window")
    if two_window:
        if len(st.history) < 2:
            return st._move(1 if st.history[0] > TARGET_AAR else -1)
        dev1 = abs(st.history[0] - TARGET_AAR)
        dev2 = abs(st.history[1] - TARGET_AAR)
        return st._move(st.direction if dev1 < dev2 else -st.direction)
    return st._move(1 if st.history[0] > TARGET_AAR else -1)


class WindowTuner:
    """Feeds transitions into a :class:`TunerState` and fires the update rule per window."""

    def __init__(self, rule: str, state: TunerState, two_window: bool = False):
        if rule not in ("aar", "esjd"):
            raise InvalidParameter(f"unknown tuner rule {rule!r}")
        self.rule = rule
        self.state = state
        self.two_window = two_window
        self.n_updates = 0

    @property
    def eps(self) -> float:
        return self.state.eps

    def observe(self, t: Transition) -> bool:
        """Record one transition; returns True when the step size was updated."""
        st = self.state
        if self.rule == "aar":
            st._sum += float(t.accepted)
        else:
            jump = t.x - t.x_next
            st._sum += float(jump @ jump)
        st._n += 1
        if st._n < st.window:
            return False
        st.history.insert(0, st._sum / st._n)
        del st.history[2:]
        st._n, st._sum = 0, 0.0
        if self.rule == "aar":
            update_step_size_aar(st, self.two_window)
        elif len(st.history) < 2:
            st._move(st.direction)  # exploratory first move
        else:
            update_step_size_esjd(st)
        self.n_updates += 1
        return True
