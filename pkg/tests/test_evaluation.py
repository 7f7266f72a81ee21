import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import mmd2_naive
from rlmh.errors import DegenerateLengthscale, DimensionMismatch, WindowTooLarge
from rlmh.evaluation import KernelConfig, gaussian_kernel, median_heuristic, mmd, mmd_squared, summarize
from rlmh.kernels import ConstantPolicy, Preconditioner, evaluate, mh_step
from rlmh.numkit import RngStream
from rlmh.targets import ReferenceSet, make_reference, make_target


def test_median_heuristic_examples():
    assert median_heuristic(np.array([0.0, 1.0, 3.0])) == 0.5
    with pytest.raises(DegenerateLengthscale):
        median_heuristic(np.ones((5, 2)))
    pts = np.random.default_rng(0).normal(size=(40, 2))
    assert median_heuristic(3.0 * pts) == pytest.approx(3.0 * median_heuristic(pts), rel=1e-12)


def test_median_heuristic_matches_enumeration():
    pts = np.random.default_rng(1).normal(size=(30, 2))
    d = [np.linalg.norm(a - b) for a in pts for b in pts]
    assert median_heuristic(pts) == pytest.approx(0.5 * np.median(d), rel=1e-12)
    off = [np.linalg.norm(a - b) for i, a in enumerate(pts) for j, b in enumerate(pts) if i != j]
    assert median_heuristic(pts, exclude_diagonal=True) == pytest.approx(0.5 * np.median(off), rel=1e-12)


def test_kernel_examples():
    cfg = KernelConfig(1.0)
    assert gaussian_kernel([0.3, 1.0], [0.3, 1.0], cfg) == 1.0
    assert gaussian_kernel([0.0], [1.0], cfg) == pytest.approx(math.exp(-1), abs=1e-15)
    assert gaussian_kernel([0.0, 2.0], [1.0, -1.0], KernelConfig(2.0)) == gaussian_kernel(
        [1.0, -1.0], [0.0, 2.0], KernelConfig(2.0))


def test_mmd_examples():
    a = np.random.default_rng(0).normal(size=(300, 2))
    assert mmd(a, a, KernelConfig(0.7)) < 1e-12
    assert mmd_squared([[0.0]], [[1.0]], KernelConfig(1.0)) == pytest.approx(2 * (1 - math.exp(-1)), abs=1e-12)
    assert mmd([[0.0]], [[1.0]], KernelConfig(1.0)) == pytest.approx(1.124385, abs=1e-6)
    with pytest.raises(DimensionMismatch):
        mmd(np.zeros((3, 2)), np.zeros((3, 1)), KernelConfig(1.0))


def test_blocked_equals_naive(monkeypatch):
    import rlmh.evaluation as ev

    monkeypatch.setattr(ev, "BLOCK", 37)
    r = np.random.default_rng(2)
    x, y = r.normal(size=(200, 2)), r.normal(0.3, 1.2, size=(200, 2))
    assert mmd_squared(x, y, KernelConfig(0.9)) == pytest.approx(mmd2_naive(x, y, 0.9), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 12), st.integers(1, 12))
def test_mmd_symmetric_nonnegative(seed, n, m):
    r = np.random.default_rng(seed)
    x, y = r.normal(size=(n, 2)), r.normal(size=(m, 2))
    cfg = KernelConfig(1.3)
    assert mmd(x, y, cfg) >= 0
    assert mmd(x, y, cfg) == pytest.approx(mmd(y, x, cfg), abs=1e-12)


def test_mmd_matches_feature_grid_embedding():
    x, y = np.array([0.0, 0.5, 1.7]), np.array([-0.4, 1.0])
    ell = 1.0
    # k(a,b) = c * integral phi_a(t) phi_b(t) dt with Gaussian bumps of width ell/2
    t = np.linspace(-8, 9, 20001)

    def emb(pts):
        return np.mean([np.exp(-2 * (t - p) ** 2 / ell**2) for p in pts], axis=0)

    c = math.sqrt(4 / (math.pi * ell**2))
    approx = c * np.trapezoid((emb(x) - emb(y)) ** 2, t)
    assert mmd_squared(x, y, KernelConfig(ell)) == pytest.approx(approx, abs=1e-3)


def _run(n, eps=1.0, seed=0):
    tgt = make_target("gaussian2d")
    rng = RngStream(seed)
    p = evaluate(tgt, np.zeros(2))
    trace = []
    for _ in range(n):
        t = mh_step("rmala", p, ConstantPolicy(eps), Preconditioner.identity(2), tgt, rng)
        trace.append(t)
        p = t.point_next
    return trace


def test_summarize_examples():
    ref = make_reference(make_target("gaussian2d"), n_samples=1000, seed=1)
    trace = _run(5000)
    s = summarize(trace, 5000, ref)
    alphas = np.array([t.alpha for t in trace])
    acc = np.array([t.accepted for t in trace], dtype=float)
    assert abs(s.aar - alphas.mean()) < 3 * acc.std() / math.sqrt(len(acc))
    with pytest.raises(WindowTooLarge):
        summarize(trace, 5001, ref)

    stuck = [t for t in _run(50) if not t.accepted][:10]
    s0 = summarize(stuck, len(stuck), None)
    assert s0.aar == 0.0 and s0.mean_esjd == 0.0 and math.isnan(s0.mmd)


def test_mmd_discriminates_shifted_copy():
    ref = make_reference(make_target("gaussian2d"), n_samples=500, seed=1)
    cfg = KernelConfig(median_heuristic(ref.samples))
    assert mmd(ref.samples, ref.samples, cfg) < mmd(ref.samples + 1.0, ref.samples, cfg)
    assert ReferenceSet(ref.samples + 1.0).dim == 2
