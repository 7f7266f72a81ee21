"""Reward-centred DDPG for learning a position-dependent step size.

The MDP has state ``s = [x, x*]`` (current and proposed point) and action
``a = [eps(x), eps(x*)]``. The actor is a network ``u_theta: R^d -> R`` whose
output passes through :class:`ActionTransform` to give the step size; it is
applied separately to both halves of the state. The critic sees the
concatenation ``(x, x*, eps(x), eps(x*))``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BufferTooSmall, DegenerateCovariance, InvalidParameter, ShapeMismatch
from .kernels import EPS_MAX, EPS_MIN, Transition
from .neuralnet import MlpParams, apply_update, backward, forward, mlp_init, mlp_layout
from .numkit import RngStream
from .targets import ReferenceSet

log = logging.getLogger(__name__)

# coefficients of the cubic that maps the curvature heuristic to an initial step size
EPS_DAGGER_COEFFS = (29.0, -26.0, 3.0, 1.3)
WARM_START_SHRINK = 0.1


@dataclass(frozen=True)
class ActionTransform:
    """eps = eps_min + (eps_max - eps_min) * sigmoid(u)."""

    eps_min: float = EPS_MIN
    eps_max: float = EPS_MAX

    def __call__(self, u):
        return self.eps_min + (self.eps_max - self.eps_min) / (1.0 + np.exp(-np.asarray(u, dtype=np.float64)))

    def derivative(self, u):
        s = 1.0 / (1.0 + np.exp(-np.asarray(u, dtype=np.float64)))
        return (self.eps_max - self.eps_min) * s * (1.0 - s)

    def inverse(self, eps):
        frac = (np.asarray(eps, dtype=np.float64) - self.eps_min) / (self.eps_max - self.eps_min)
        return np.log(frac) - np.log1p(-frac)


TRANSFORM = ActionTransform()


class NeuralPolicy:
    """Step-size policy backed by an actor network, with optional exploration noise.

    Noise is added to the raw network output before the transform, so every
    returned step size stays inside (eps_min, eps_max).
    """

    def __init__(self, actor: MlpParams, noise_sd: float = 0.0, rng: RngStream | None = None,
                 transform: ActionTransform = TRANSFORM):
        if noise_sd > 0 and rng is None:
            raise InvalidParameter("a noisy policy needs an rng")
        self.actor = actor
        self.noise_sd = float(noise_sd)
        self.rng = rng
        self.transform = transform

    def raw(self, x) -> np.ndarray:
        return forward(self.actor, x)[0][:, 0]

    def batch(self, xs) -> np.ndarray:
        """Noise-free step sizes for each row of ``xs``."""
        return self.transform(self.raw(xs))

    def __call__(self, x) -> float:
        return select_action(self.actor, x, self.noise_sd, self.rng, self.transform)


def select_action(actor: MlpParams, x, noise_sd: float, rng: RngStream | None,
                  transform: ActionTransform = TRANSFORM) -> float:
    u = float(forward(actor, x)[0][0, 0])
    if noise_sd > 0:
        u += noise_sd * float(rng.normal())
    return float(transform(u))


# --- initial step size ------------------------------------------------------


def eps_dagger_polynomial(eps0: float) -> float:
    a1, a2, a3, a4 = EPS_DAGGER_COEFFS
    return a1 * eps0**3 + a2 * eps0**2 + a3 * eps0 + a4


def curvature_step_size(lengthscale: float, covariance, d: int) -> float:
    """lengthscale / (sqrt(lambda_max(cov^{-1})) * d^{1/3})."""
    cov = np.atleast_2d(np.asarray(covariance, dtype=np.float64))
    eig = np.linalg.eigvalsh(cov)
    if not np.all(np.isfinite(eig)) or eig[0] <= 0:
        raise DegenerateCovariance("reference covariance is not positive definite")
    # lambda_max of the precision is 1 / lambda_min of the covariance
    return float(lengthscale * np.sqrt(eig[0]) / d ** (1.0 / 3.0))


def initial_step_size(reference: ReferenceSet, d: int | None = None,
                      lengthscale: float | None = None, max_points: int = 2000) -> float:
    """Clamped cubic correction of the curvature heuristic."""
    from .evaluation import median_heuristic

    d = reference.dim if d is None else int(d)
    if lengthscale is None:
        lengthscale = median_heuristic(reference.samples, max_points=max_points)
    eps0 = curvature_step_size(lengthscale, reference.covariance, d)
    return float(np.clip(eps_dagger_polynomial(eps0), EPS_MIN, EPS_MAX))


# --- pre-training -----------------------------------------------------------


@dataclass(frozen=True)
class PretrainReport:
    max_rel_dev: float
    mean_abs_dev: float
    converged: bool
    epochs: int


def _rel_devs(actor: MlpParams, ys: np.ndarray, eps_dagger: float, transform: ActionTransform):
    eps = transform(forward(actor, ys)[0][:, 0])
    return np.abs(eps - eps_dagger) / eps_dagger


def pretrain_actor(actor: MlpParams, reference: ReferenceSet, eps_dagger: float, rng: RngStream,
                   epochs: int = 100, batch_size: int = 16, lr: float = 0.01,
                   tolerance: float = 0.05, warm_start: bool = True,
                   transform: ActionTransform = TRANSFORM) -> tuple[MlpParams, PretrainReport]:
    """Regress eps_theta(y) onto the constant eps_dagger over the reference samples.

    Plain minibatch SGD on the mean squared error. With ``warm_start`` the
    output-layer weights are first shrunk and the output bias shifted so the
    mean raw output matches the target; the SGD then refines that. Failure to reach ``tolerance`` is reported,
    not raised.
    """
    if not transform.eps_min < eps_dagger < transform.eps_max:
        raise InvalidParameter(f"eps_dagger={eps_dagger} outside the admissible step-size range")
    ys = reference.samples
    m = ys.shape[0]
    actor = actor.copy()
    if lr > 0 and warm_start and _rel_devs(actor, ys, eps_dagger, transform).max() >= tolerance:
        fan_in = actor.layout[-1][0]
        out_w = slice(actor.flat.size - 1 - fan_in, actor.flat.size - 1)
        actor.flat[out_w] *= WARM_START_SHRINK
        u = forward(actor, ys)[0][:, 0]
        actor.flat[-1] += float(transform.inverse(eps_dagger) - u.mean())

    done = 0
    for epoch in range(epochs if lr > 0 else 0):
        order = rng.generator.permutation(m)
        for start in range(0, m, batch_size):
            idx = order[start:start + batch_size]
            out, tape = forward(actor, ys[idx])
            u = out[:, 0]
            resid = transform(u) - eps_dagger
            dy = (2.0 / len(idx)) * resid * transform.derivative(u)
            g, _ = backward(actor, tape, dy[:, None])
            actor.flat -= lr * g
        done = epoch + 1
        if _rel_devs(actor, ys, eps_dagger, transform).max() < tolerance:
            break

    dev = _rel_devs(actor, ys, eps_dagger, transform)
    report = PretrainReport(float(dev.max()), float(np.mean(dev) * eps_dagger),
                            bool(dev.max() < tolerance), done)
    if not report.converged:
        log.warning("actor pre-training did not converge: max relative deviation %.3g", report.max_rel_dev)
    return actor, report


# --- replay buffer ----------------------------------------------------------


class ReplayBuffer:
    """Fixed-capacity ring of (s, a, r, s') tuples stored in flat arrays."""

    def __init__(self, capacity: int, dim: int):
        if capacity < 1:
            raise InvalidParameter("capacity must be positive")
        self.capacity = int(capacity)
        self.dim = int(dim)
        self.states = np.empty((capacity, 2 * dim))
        self.actions = np.empty((capacity, 2))
        self.rewards = np.empty(capacity)
        self.next_states = np.empty((capacity, 2 * dim))
        self.cursor = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, state, action, reward: float, next_state) -> None:
        i = self.cursor
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def add_transition(self, t: Transition, next_t: Transition) -> None:
        """Store ``t`` with next state taken from the following step ``next_t``."""
        if t.reward is None:
            raise InvalidParameter("transition has no reward attached")
        self.add(np.concatenate([t.x, t.x_star]), t.action, t.reward,
                 np.concatenate([next_t.x, next_t.x_star]))

    def sample_indices(self, n: int, rng: RngStream) -> np.ndarray:
        if n > self.size:
            raise BufferTooSmall(f"buffer holds {self.size} transitions, minibatch needs {n}")
        return rng.choice(self.size, n, replace=False)

    def sample(self, n: int, rng: RngStream):
        idx = self.sample_indices(n, rng)
        return self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx]


# --- DDPG -------------------------------------------------------------------


@dataclass(frozen=True)
class DdpgConfig:
    lr_actor: float = 1e-6
    lr_critic: float = 1e-2
    tau: float = 0.005
    gamma: float = 0.99
    eta: float = 1e-3
    batch_size: int = 48
    clip_norm: float = 1.0
    buffer_capacity: int = 25_000
    hidden: tuple[int, ...] = (8, 8)
    reward_centring: str = "td-residual"

    def __post_init__(self):
        if not 0 <= self.tau <= 1:
            raise InvalidParameter("tau must lie in [0, 1]")
        if not 0 <= self.gamma < 1:
            raise InvalidParameter("gamma must lie in [0, 1)")
        if self.reward_centring not in ("td-residual", "raw-reward"):
            raise InvalidParameter(f"unknown reward centring {self.reward_centring!r}")
        if min(self.lr_actor, self.lr_critic, self.eta) < 0 or self.clip_norm <= 0:
            raise InvalidParameter("learning rates must be non-negative and clip_norm positive")


@dataclass
class DdpgState:
    actor: MlpParams
    critic: MlpParams
    target_actor: MlpParams
    target_critic: MlpParams
    cfg: DdpgConfig = field(default_factory=DdpgConfig)
    r_bar: float = 0.0
    noise_sd: float = 0.0
    transform: ActionTransform = TRANSFORM
    n_updates: int = 0

    def __post_init__(self):
        if self.target_actor.layout != self.actor.layout or self.target_critic.layout != self.critic.layout:
            raise ShapeMismatch("target networks must share the online layouts")

    @classmethod
    def create(cls, dim: int, rng: RngStream, cfg: DdpgConfig | None = None,
               actor: MlpParams | None = None, noise_sd: float = 0.0) -> "DdpgState":
        cfg = cfg or DdpgConfig()
        if actor is None:
            actor = mlp_init(mlp_layout(dim, cfg.hidden, 1), rng.spawn(1))
        critic = mlp_init(mlp_layout(2 * dim + 2, cfg.hidden, 1), rng.spawn(2))
        return cls(actor, critic, actor.copy(), critic.copy(), cfg, noise_sd=noise_sd)

    @property
    def dim(self) -> int:
        return self.actor.n_in

    def policy(self, rng: RngStream | None = None, explore: bool = True) -> NeuralPolicy:
        sd = self.noise_sd if explore else 0.0
        return NeuralPolicy(self.actor, sd, rng, self.transform)

    def frozen(self) -> "DdpgState":
        """Copy with all learning switched off."""
        cfg = replace(self.cfg, lr_actor=0.0, lr_critic=0.0, eta=0.0, tau=0.0)
        return replace(self, cfg=cfg, noise_sd=0.0)


def soft_update(target: MlpParams, online: MlpParams, tau: float) -> MlpParams:
    if target.layout != online.layout:
        raise ShapeMismatch("soft update needs matching layouts")
    if not 0.0 <= tau <= 1.0:
        raise InvalidParameter("tau must lie in [0, 1]")
    if tau == 0.0:
        return target.copy()
    if tau == 1.0:
        return online.copy()
    return MlpParams(target.layout, (1.0 - tau) * target.flat + tau * online.flat)


def policy_actions(actor: MlpParams, states: np.ndarray, transform: ActionTransform = TRANSFORM):
    """Actions [eps(x), eps(x*)] for a batch of states, plus what the gradient needs."""
    d = actor.n_in
    n = states.shape[0]
    stacked = np.vstack([states[:, :d], states[:, d:]])
    out, tape = forward(actor, stacked)
    u = out[:, 0]
    actions = transform(u).reshape(2, n).T
    return actions, u, tape


def critic_value(critic: MlpParams, states: np.ndarray, actions: np.ndarray):
    out, tape = forward(critic, np.hstack([states, actions]))
    return out[:, 0], tape


def td_targets(st: DdpgState, rewards, next_states) -> np.ndarray:
    a_next, _, _ = policy_actions(st.target_actor, next_states, st.transform)
    q_next, _ = critic_value(st.target_critic, next_states, a_next)
    return (rewards - st.r_bar) + st.cfg.gamma * q_next


def critic_loss_grad(critic: MlpParams, states, actions, targets):
    """Mean squared TD error and its gradient with respect to the critic parameters."""
    q, tape = critic_value(critic, states, actions)
    resid = targets - q
    n = len(targets)
    g, _ = backward(critic, tape, (-2.0 / n) * resid[:, None])
    return float(np.mean(resid**2)), g


def actor_objective_grad(actor: MlpParams, critic: MlpParams, states,
                         transform: ActionTransform = TRANSFORM):
    """Mean critic value at the policy's actions and its gradient in the actor parameters."""
    n = states.shape[0]
    actions, u, a_tape = policy_actions(actor, states, transform)
    q, c_tape = critic_value(critic, states, actions)
    _, d_in = backward(critic, c_tape, np.full((n, 1), 1.0 / n))
    dq_da = d_in[:, -2:]
    du = np.concatenate([dq_da[:, 0], dq_da[:, 1]]) * transform.derivative(u)
    g, _ = backward(actor, a_tape, du[:, None])
    return float(np.mean(q)), g


def ddpg_update(st: DdpgState, buffer: ReplayBuffer, rng: RngStream) -> dict:
    """One reward-centred DDPG pass, in the order of the algorithm box.

    Critic descent, actor ascent, average-reward update, then the two soft
    target updates.
    """
    cfg = st.cfg
    s, a, r, s_next = buffer.sample(cfg.batch_size, rng)
    targets = td_targets(st, r, s_next)

    loss, g_critic = critic_loss_grad(st.critic, s, a, targets)
    st.critic = apply_update(st.critic, -g_critic, cfg.lr_critic, cfg.clip_norm)

    mean_q, g_actor = actor_objective_grad(st.actor, st.critic, s, st.transform)
    st.actor = apply_update(st.actor, g_actor, cfg.lr_actor, cfg.clip_norm)

    if cfg.reward_centring == "td-residual":
        q_now, _ = critic_value(st.critic, s, a)
        st.r_bar += cfg.eta * cfg.lr_critic * float(np.mean(targets - q_now))
    else:
        # exponential moving average of sampled rewards
        st.r_bar += cfg.eta * (float(np.mean(r)) - st.r_bar)

    st.target_critic = soft_update(st.target_critic, st.critic, cfg.tau)
    st.target_actor = soft_update(st.target_actor, st.actor, cfg.tau)
    st.n_updates += 1
    return {"critic_loss": loss, "mean_q": mean_q, "r_bar": st.r_bar}
