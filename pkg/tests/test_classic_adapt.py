import numpy as np
import pytest

from rlmh.errors import InsufficientData, InvalidParameter
from rlmh.kernels import Transition
from rlmh.classic_adapt import TunerState, WindowTuner, update_step_size_aar, update_step_size_esjd


def test_esjd_rule_examples():
    st = TunerState(eps=0.1, direction=1, history=[2.0, 1.0])
    assert update_step_size_esjd(st) == pytest.approx(0.105)
    st = TunerState(eps=0.1, direction=1, history=[1.0, 2.0])
    assert update_step_size_esjd(st) == pytest.approx(0.1 / 1.05)
    assert st.direction == -1
    st = TunerState(eps=1.99, direction=1, history=[2.0, 1.0])
    assert update_step_size_esjd(st) == 2.0
    st = TunerState(eps=1e-4, direction=-1, history=[2.0, 1.0])
    assert update_step_size_esjd(st) == 1e-4
    with pytest.raises(InsufficientData):
        update_step_size_esjd(TunerState(history=[1.0]))


def test_aar_rule_examples():
    for aar, expected in ((0.80, 0.105), (0.30, 0.1 / 1.05), (0.574, 0.1 / 1.05)):
        st = TunerState(eps=0.1, history=[aar])
        assert update_step_size_aar(st) == pytest.approx(expected, rel=1e-12)
    with pytest.raises(InsufficientData):
        update_step_size_aar(TunerState())


def test_aar_two_window_variant():
    st = TunerState(eps=0.1, direction=1, history=[0.6, 0.7])
    assert update_step_size_aar(st, two_window=True) == pytest.approx(0.105)
    st = TunerState(eps=0.1, direction=1, history=[0.8, 0.7])
    assert update_step_size_aar(st, two_window=True) == pytest.approx(0.1 / 1.05)


def test_invalid_settings():
    with pytest.raises(InvalidParameter):
        TunerState(factor=1.0)
    with pytest.raises(InvalidParameter):
        WindowTuner("median", TunerState())


def fake(accepted: bool, jump: float) -> Transition:
    x = np.zeros(1)
    nxt = x + jump if accepted else x
    return Transition(x=x, x_star=x + jump, x_next=nxt, alpha=float(accepted), accepted=accepted,
                      action=(0.1, 0.1), log_q_fwd=0.0, log_q_rev=0.0, log_p_x=0.0, log_p_x_star=0.0,
                      log_alpha=0.0)


def test_window_tuner_fires_once_per_window_and_moves_by_factor():
    tuner = WindowTuner("aar", TunerState(eps=0.1, window=10))
    fired = [tuner.observe(fake(True, 1.0)) for _ in range(30)]
    assert fired.count(True) == 3 and fired[9] and fired[19] and fired[29]
    assert tuner.eps == pytest.approx(0.1 * 1.05**3)


def test_esjd_tuner_explores_then_follows_improvement():
    tuner = WindowTuner("esjd", TunerState(eps=0.1, window=5))
    for _ in range(5):
        tuner.observe(fake(True, 1.0))
    assert tuner.eps == pytest.approx(0.105)  # exploratory first move
    for _ in range(5):
        tuner.observe(fake(True, 2.0))  # improved: keep going up
    assert tuner.eps == pytest.approx(0.105 * 1.05)
    for _ in range(5):
        tuner.observe(fake(True, 0.5))  # worse: reverse
    assert tuner.eps == pytest.approx(0.105)
