import math

import numpy as np
import pytest
from scipy.stats import chisquare

from gradchecks import actor_error, critic_error
from oracles import fd_grad, rel_err
from rlmh.ddpg import (
    TRANSFORM,
    DdpgConfig,
    DdpgState,
    NeuralPolicy,
    ReplayBuffer,
    critic_loss_grad,
    ddpg_update,
    eps_dagger_polynomial,
    initial_step_size,
    pretrain_actor,
    soft_update,
)
from rlmh.errors import BufferTooSmall, InvalidParameter
from rlmh.kernels import EPS_MAX, EPS_MIN
from rlmh.neuralnet import MlpParams, mlp_init, mlp_layout, n_params
from rlmh.numkit import RngStream
from rlmh.targets import ReferenceSet, make_reference, make_target


def test_eps_dagger_polynomial():
    assert eps_dagger_polynomial(1.0) == pytest.approx(7.3, abs=1e-12)
    assert eps_dagger_polynomial(0.1) == pytest.approx(1.369, abs=1e-12)
    assert eps_dagger_polynomial(0.5) == pytest.approx(-0.075, abs=1e-12)


def test_initial_step_size_clamps():
    # eps0 = ell * sqrt(lambda_min) / d^(1/3); choose the lengthscale to hit eps0 = 0.5
    ref = ReferenceSet(np.random.default_rng(0).normal(size=(500, 1)))
    ell = 0.5 / math.sqrt(float(np.linalg.eigvalsh(np.atleast_2d(ref.covariance))[0]))
    assert initial_step_size(ref, lengthscale=ell) == EPS_MIN
    ell = 0.1 / math.sqrt(float(np.linalg.eigvalsh(np.atleast_2d(ref.covariance))[0]))
    assert initial_step_size(ref, lengthscale=ell) == pytest.approx(1.369, abs=1e-9)


def test_transform_range_and_midpoint():
    actor = MlpParams(mlp_layout(2), np.zeros(n_params(mlp_layout(2))))
    assert NeuralPolicy(actor)(np.zeros(2)) == pytest.approx(5.0000005, abs=1e-12)
    noisy = NeuralPolicy(mlp_init(mlp_layout(2), RngStream(1)), noise_sd=2.0, rng=RngStream(2))
    xs = np.random.default_rng(0).normal(size=(1000, 2)) * 3
    draws = np.array([noisy(x) for x in xs for _ in range(10)])
    assert np.all((draws > EPS_MIN) & (draws < EPS_MAX))
    u = np.random.default_rng(1).normal(size=1_000_000) * 5
    e = TRANSFORM(u)
    assert np.all((e > EPS_MIN) & (e < EPS_MAX))
    assert np.allclose(TRANSFORM.inverse(TRANSFORM(u[:100])), u[:100], atol=1e-8)


def test_noise_free_policy_is_deterministic():
    actor = mlp_init(mlp_layout(2), RngStream(3))
    x = np.array([0.3, -0.2])
    from rlmh.neuralnet import forward

    assert NeuralPolicy(actor)(x) == float(TRANSFORM(forward(actor, x)[0][0, 0]))


def test_pretrain_reaches_tolerance_on_gaussian_reference():
    ref = make_reference(make_target("gaussian2d"), n_samples=2000, seed=0)
    actor = mlp_init(mlp_layout(2), RngStream(5))
    out, report = pretrain_actor(actor, ref, 1.369, RngStream(6))
    eps = NeuralPolicy(out).batch(ref.samples)
    assert np.max(np.abs(eps - 1.369) / 1.369) < 0.05
    assert report.converged


def test_pretrain_noop_cases():
    ref = make_reference(make_target("gaussian2d"), n_samples=300, seed=0)
    actor = mlp_init(mlp_layout(2), RngStream(5))
    same, _ = pretrain_actor(actor, ref, 1.0, RngStream(6), lr=0.0)
    assert np.array_equal(same.flat, actor.flat)
    const = MlpParams(actor.layout, np.zeros(actor.flat.size))
    const.flat[-1] = float(TRANSFORM.inverse(2.0))
    kept, _ = pretrain_actor(const, ref, 2.0, RngStream(6))
    assert np.array_equal(kept.flat, const.flat)
    with pytest.raises(InvalidParameter):
        pretrain_actor(actor, ref, EPS_MAX, RngStream(6))


def test_critic_gradient_single_transition_linear():
    r = np.random.default_rng(0)
    critic = MlpParams([(6, 1)], r.normal(size=7))
    s, a, y = r.normal(size=(1, 4)), r.uniform(0.1, 2, size=(1, 2)), r.normal(size=1)
    _, g = critic_loss_grad(critic, s, a, y)

    def loss(flat):
        q = np.hstack([s, a]) @ flat[:6] + flat[6]
        return float((y[0] - q[0]) ** 2)

    assert rel_err(g, fd_grad(loss, critic.flat)) < 1e-5


@pytest.mark.parametrize("seed", range(5))
def test_critic_and_actor_gradients(seed):
    assert critic_error(seed) < 1e-5
    assert actor_error(seed) < 1e-5


def test_soft_update():
    layout = [(1, 1)]
    t, o = MlpParams(layout, np.zeros(2)), MlpParams(layout, np.full(2, 2.0))
    assert np.array_equal(soft_update(t, o, 0.0).flat, t.flat)
    assert np.array_equal(soft_update(t, o, 1.0).flat, o.flat)
    assert np.allclose(soft_update(t, o, 0.5).flat, 1.0)


def filled_buffer(n=200, d=2, capacity=500):
    buf = ReplayBuffer(capacity, d)
    r = np.random.default_rng(0)
    for i in range(n):
        buf.add(r.normal(size=2 * d), r.uniform(0.1, 2, size=2), float(r.normal()), r.normal(size=2 * d))
    return buf


def test_replay_ring_and_uniform_sampling():
    buf = ReplayBuffer(3, 1)
    for i in range(5):
        buf.add([i, i], [1.0, 1.0], float(i), [i, i])
    assert len(buf) == 3 and sorted(buf.rewards) == [2.0, 3.0, 4.0]
    with pytest.raises(BufferTooSmall):
        buf.sample(4, RngStream(0))

    buf = filled_buffer(50)
    rng = RngStream(1)
    counts = np.zeros(50)
    for _ in range(4000):
        counts[buf.sample_indices(5, rng)] += 1
    assert chisquare(counts).pvalue > 1e-3


def test_zero_rates_leave_everything_unchanged():
    cfg = DdpgConfig(lr_actor=0.0, lr_critic=0.0, eta=0.0, tau=0.0, batch_size=16)
    st = DdpgState.create(2, RngStream(0), cfg)
    before = [p.flat.copy() for p in (st.actor, st.critic, st.target_actor, st.target_critic)]
    ddpg_update(st, filled_buffer(), RngStream(1))
    after = [p.flat for p in (st.actor, st.critic, st.target_actor, st.target_critic)]
    assert all(np.array_equal(a, b) for a, b in zip(before, after))
    assert st.r_bar == 0.0


def test_frozen_state_stops_learning():
    st = DdpgState.create(2, RngStream(0), DdpgConfig(batch_size=16), noise_sd=0.3).frozen()
    h = st.actor.flat.copy(), st.critic.flat.copy()
    ddpg_update(st, filled_buffer(), RngStream(1))
    assert np.array_equal(h[0], st.actor.flat) and np.array_equal(h[1], st.critic.flat)
    assert st.noise_sd == 0.0


def test_update_moves_parameters():
    st = DdpgState.create(2, RngStream(0), DdpgConfig(lr_actor=1e-2, batch_size=16))
    a0, c0 = st.actor.flat.copy(), st.critic.flat.copy()
    info = ddpg_update(st, filled_buffer(), RngStream(1))
    assert not np.array_equal(a0, st.actor.flat) and not np.array_equal(c0, st.critic.flat)
    assert set(info) == {"critic_loss", "mean_q", "r_bar"}
    assert st.critic.n_in == 6


def test_config_validation():
    with pytest.raises(InvalidParameter):
        DdpgConfig(tau=1.5)
    with pytest.raises(InvalidParameter):
        DdpgConfig(reward_centring="nope")
