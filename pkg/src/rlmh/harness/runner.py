"""Train-then-freeze experiment runs.

A replicate runs ``total_iterations`` MH steps. During the first
``total - freeze_window`` steps the chosen tuner adapts the step size; after
that every parameter is frozen and the chain is an ordinary p-invariant MH
chain, whose states are scored against the reference samples.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..ddpg import (
    TRANSFORM,
    DdpgConfig,
    DdpgState,
    NeuralPolicy,
    ReplayBuffer,
    ddpg_update,
    initial_step_size,
    pretrain_actor,
)
from ..errors import CatastrophicFailure, InvalidValue, RlmhError
from ..evaluation import KernelConfig, RunSummary, summarize
from ..kernels import EPS_MAX, EPS_MIN, ConstantPolicy, Preconditioner, Transition, evaluate, mh_step
from ..neuralnet import MlpParams, load_params, mlp_init, mlp_layout, save_params
from ..numkit import RngStream
from ..rewards import attach_reward
from ..targets import ReferenceSet, TargetDistribution, make_reference, make_target
from ..classic_adapt import TunerState, WindowTuner
from .config import RunConfig, dump_config

log = logging.getLogger(__name__)


class RunError(RlmhError, RuntimeError):
    """A module error raised mid-run, annotated with where it happened."""

    def __init__(self, replicate: int, iteration: int, cause: Exception):
        super().__init__(f"replicate {replicate}, iteration {iteration}: {type(cause).__name__}: {cause}")
        self.replicate = replicate
        self.iteration = iteration
        self.cause = cause


class EvalCounter:
    """Counts log-density and gradient calls made through a wrapped target."""

    def __init__(self, target: TargetDistribution):
        self.log_density = 0
        self.gradient = 0
        inner_lp, inner_g = target.log_density_fn, target.grad_fn

        def lp(x):
            self.log_density += 1
            return inner_lp(x)

        def g(x):
            self.gradient += 1
            return inner_g(x)

        self.target = TargetDistribution(target.name, target.dim, lp, g, target.sampler, target.params)

    def as_dict(self) -> dict:
        return {"log_density": self.log_density, "gradient": self.gradient}


@dataclass
class ReplicateResult:
    replicate: int
    summary: RunSummary | None
    failure: str | None
    failure_iteration: int | None
    evaluations: dict
    param_hashes: dict = field(default_factory=dict)
    eps_trace: np.ndarray | None = None
    paths: dict = field(default_factory=dict)
    actor: MlpParams | None = None

    @property
    def failed(self) -> bool:
        return self.failure is not None

    def to_dict(self) -> dict:
        return {
            "replicate": self.replicate,
            "failed": self.failed,
            "failure": self.failure,
            "failure_iteration": self.failure_iteration,
            "summary": None if self.summary is None else self.summary.to_dict(),
            "evaluations": self.evaluations,
            "param_hashes": self.param_hashes,
            "paths": self.paths,
        }


def params_hash(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
    return h.hexdigest()[:16]


# --- setup helpers ----------------------------------------------------------


def build_target(cfg: RunConfig) -> TargetDistribution:
    return make_target(cfg.target, **cfg.target_params)


def build_reference(cfg: RunConfig, target: TargetDistribution) -> ReferenceSet:
    if cfg.reference.path:
        return ReferenceSet.load(cfg.reference.path)
    return make_reference(target, cfg.reference.n_samples, cfg.reference.seed, cfg.reference.thin)


def build_preconditioner(cfg: RunConfig, reference: ReferenceSet, dim: int) -> Preconditioner:
    if cfg.kernel == "mala" or cfg.g0_source == "identity":
        return Preconditioner.identity(dim)
    if cfg.g0_source == "file":
        g0 = np.loadtxt(cfg.g0_file, delimiter=",", ndmin=2)
        if g0.shape != (dim, dim):
            raise InvalidValue(f"g0_file: expected a {dim}x{dim} matrix, got {g0.shape}", key="g0_file")
        return Preconditioner.from_matrix(g0)
    return Preconditioner.from_covariance(reference.covariance)


def _initial_eps(cfg: RunConfig, reference: ReferenceSet) -> float:
    if cfg.step_size != "auto":
        return float(cfg.step_size)
    if cfg.tuner in ("aar", "esjd"):
        return 0.1
    eps = initial_step_size(reference)
    # pre-training needs a target strictly inside the action range
    inner = float(np.clip(eps, 2 * EPS_MIN, 0.99 * EPS_MAX))
    if inner != eps:
        log.warning("step-size heuristic hit a clamp bound (%g); using %g", eps, inner)
    return inner


# --- catastrophic-failure detector -------------------------------------------


class FailureDetector:
    def __init__(self, cfg: RunConfig, eps_min: float, eps_max: float):
        s = cfg.failure
        span = eps_max - eps_min
        self.lo = eps_min + s.saturation_tol * span
        self.hi = eps_max - s.saturation_tol * span
        self.clamp_fraction = s.clamp_fraction
        self.reject_episodes = s.reject_episodes
        self.check_clamp = cfg.tuner == "ddpg"
        self._all_reject_run = 0

    def end_episode(self, eps: np.ndarray, accepted: np.ndarray, iteration: int,
                    params: list[np.ndarray] = ()) -> None:
        if self.check_clamp:
            clamped = np.mean((eps <= self.lo) | (eps >= self.hi))
            if clamped >= self.clamp_fraction:
                raise CatastrophicFailure(
                    f"step size at a clamp bound for {clamped:.0%} of an episode", iteration)
        for p in params:
            if not np.all(np.isfinite(p)):
                raise CatastrophicFailure("non-finite network parameter", iteration)
        self._all_reject_run = self._all_reject_run + 1 if not np.any(accepted) else 0
        if self._all_reject_run >= self.reject_episodes:
            raise CatastrophicFailure(
                f"every proposal rejected for {self._all_reject_run} consecutive episodes", iteration)


# --- a single replicate -----------------------------------------------------


class _TraceWriter:
    def __init__(self, path: Path | None, dim: int):
        self.path = path
        self._fh = None
        if path is not None:
            self._fh = open(path, "w", newline="\n", encoding="utf-8")
            self._w = csv.writer(self._fh, lineterminator="\n")
            self._w.writerow(["iteration", *[f"x{i + 1}" for i in range(dim)],
                              "accepted", "alpha", "reward", "eps", "phase"])

    def row(self, n: int, t: Transition, phase: str) -> None:
        if self._fh is None:
            return
        self._w.writerow([n, *[repr(float(v)) for v in t.x_next], int(t.accepted),
                          repr(float(t.alpha)), repr(float(t.reward)), repr(float(t.action[0])), phase])

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def run_replicate(cfg: RunConfig, replicate: int, out_dir: Path | None = None,
                  target: TargetDistribution | None = None,
                  reference: ReferenceSet | None = None) -> ReplicateResult:
    """Run one replicate on its own RNG stream and write its artifacts under ``out_dir``."""
    base_target = target or build_target(cfg)
    reference = reference or build_reference(cfg, base_target)
    counter = EvalCounter(base_target)
    tgt = counter.target
    d = tgt.dim
    pc = build_preconditioner(cfg, reference, d)
    rng = RngStream(cfg.seed, replicate)
    chain_rng = rng.spawn(0)
    update_rng = rng.spawn(3)

    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    writer = _TraceWriter(out_dir / "trace.csv" if (out_dir is not None and cfg.write_trace) else None, d)

    eps0 = _initial_eps(cfg, reference)
    tuner = None
    ddpg_state = None
    buffer = None
    pretrain_report = None
    if cfg.tuner in ("aar", "esjd"):
        tuner = WindowTuner(cfg.tuner, TunerState(eps=eps0, window=cfg.resolved_tuner_window()),
                            two_window=cfg.tuner_two_window)
        policy = ConstantPolicy(tuner.eps)
    elif cfg.tuner == "ddpg":
        dcfg = DdpgConfig(
            lr_actor=cfg.ddpg.lr_actor, lr_critic=cfg.ddpg.lr_critic, tau=cfg.ddpg.tau,
            gamma=cfg.ddpg.gamma, eta=cfg.ddpg.eta, batch_size=cfg.ddpg.batch_size,
            clip_norm=cfg.ddpg.clip_norm, buffer_capacity=cfg.ddpg.buffer_capacity,
            hidden=tuple(cfg.ddpg.hidden), reward_centring=cfg.ddpg.reward_centring,
        )
        actor = mlp_init(mlp_layout(d, dcfg.hidden, 1), rng.spawn(1))
        p = cfg.pretrain
        actor, pretrain_report = pretrain_actor(
            actor, reference, eps0, rng.spawn(4), epochs=p.epochs, batch_size=p.batch_size,
            lr=p.lr, tolerance=p.tolerance)
        noise = eps0 if cfg.ddpg.noise_sd == "auto" else float(cfg.ddpg.noise_sd)
        ddpg_state = DdpgState.create(d, rng, dcfg, actor=actor, noise_sd=noise)
        buffer = ReplayBuffer(dcfg.buffer_capacity, d)
        policy = ddpg_state.policy(chain_rng)
    elif cfg.policy == "neural":
        policy = NeuralPolicy(load_params(cfg.actor_checkpoint))
    else:
        policy = ConstantPolicy(eps0)

    detector = FailureDetector(cfg, TRANSFORM.eps_min, TRANSFORM.eps_max)
    n_train = cfg.train_iterations
    point = evaluate(tgt, reference.mean)
    trace: list[Transition] = []
    eps_hist = np.empty(cfg.total_iterations)
    pending: Transition | None = None
    ep_eps, ep_acc = [], []
    hashes: dict[str, str] = {}
    failure = None
    failure_iter = None
    paths: dict[str, str] = {}

    def snapshot(tag: str) -> None:
        if ddpg_state is not None:
            hashes[tag] = params_hash(ddpg_state.actor.flat, ddpg_state.critic.flat,
                                      ddpg_state.target_actor.flat, ddpg_state.target_critic.flat,
                                      [ddpg_state.r_bar])
            if out_dir is not None:
                paths[f"actor_{tag}"] = str(save_params(ddpg_state.actor, out_dir / f"actor_{tag}.csv"))
                paths[f"critic_{tag}"] = str(save_params(ddpg_state.critic, out_dir / f"critic_{tag}.csv"))
                meta = {"r_bar": ddpg_state.r_bar, "updates": ddpg_state.n_updates,
                        "iteration": n, "config_hash": cfg.config_hash()}
                (out_dir / f"checkpoint_{tag}.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        elif tuner is not None:
            hashes[tag] = params_hash([tuner.eps])
        else:
            hashes[tag] = params_hash([eps0])

    n = 0
    try:
        for n in range(cfg.total_iterations):
            training = n < n_train
            if n == n_train:
                # freeze: no further adaptation, no exploration noise
                if ddpg_state is not None:
                    ddpg_state = ddpg_state.frozen()
                    policy = ddpg_state.policy(None, explore=False)
                snapshot("freeze")
            t = mh_step(cfg.kernel, point, policy, pc, tgt, chain_rng)
            attach_reward(cfg.reward, t)
            point = t.point_next
            trace.append(t)
            eps_hist[n] = t.action[0]
            writer.row(n, t, "train" if training else "frozen")

            if buffer is not None and pending is not None and n <= n_train:
                buffer.add_transition(pending, t)
            pending = t

            if not training:
                continue
            if tuner is not None and tuner.observe(t):
                policy = ConstantPolicy(tuner.eps)
            ep_eps.append(t.action[0])
            ep_acc.append(t.accepted)
            if (n + 1) % cfg.episode_length == 0 or n + 1 == n_train:
                params = [] if ddpg_state is None else [ddpg_state.actor.flat, ddpg_state.critic.flat]
                if tuner is not None or ddpg_state is not None:
                    detector.end_episode(np.array(ep_eps), np.array(ep_acc), n, params)
                ep_eps, ep_acc = [], []
                if ddpg_state is not None and len(buffer) >= ddpg_state.cfg.batch_size:
                    for _ in range(cfg.ddpg.passes_per_episode):
                        ddpg_update(ddpg_state, buffer, update_rng)
                    policy = ddpg_state.policy(chain_rng)
        snapshot("final")
    except CatastrophicFailure as exc:
        failure, failure_iter = exc.reason, exc.iteration
        log.warning("replicate %d aborted: %s", replicate, exc)
    except RlmhError as exc:
        raise RunError(replicate, n, exc) from exc
    finally:
        writer.close()

    summary = None
    if failure is None:
        kcfg = KernelConfig(cfg.mmd_lengthscale) if cfg.mmd_lengthscale else None
        summary = summarize(trace, cfg.freeze_window, reference, kcfg)

    result = ReplicateResult(
        replicate=replicate, summary=summary, failure=failure, failure_iteration=failure_iter,
        evaluations=counter.as_dict(), param_hashes=hashes, eps_trace=eps_hist[: len(trace)],
        actor=None if ddpg_state is None else ddpg_state.actor,
    )
    if out_dir is not None:
        if writer.path is not None:
            paths["trace"] = str(writer.path)
        paths["summary"] = str(out_dir / "summary.json")
        result.paths = paths
        doc = result.to_dict()
        doc["config_hash"] = cfg.config_hash()
        doc["initial_step_size"] = eps0
        if pretrain_report is not None:
            doc["pretrain"] = {"max_rel_dev": pretrain_report.max_rel_dev,
                               "converged": pretrain_report.converged,
                               "epochs": pretrain_report.epochs}
        if tuner is not None:
            doc["final_step_size"] = tuner.eps
        (out_dir / "summary.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return result


# --- experiments ------------------------------------------------------------


@dataclass
class ExperimentResult:
    out_dir: Path
    replicates: list[ReplicateResult]

    @property
    def any_failed(self) -> bool:
        return any(r.failed for r in self.replicates)

    def mmds(self) -> list[float]:
        return [r.summary.mmd for r in self.replicates if r.summary is not None]


def _replicate_task(args):
    cfg_doc, replicate, out_dir = args
    cfg = RunConfig.model_validate(cfg_doc)
    return run_replicate(cfg, replicate, Path(out_dir) if out_dir else None)


def run_experiment(cfg: RunConfig, out_dir: str | Path | None = None) -> ExperimentResult:
    """Run every replicate, write per-replicate artifacts and an aggregate summary."""
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(dump_config(cfg))
    tasks = [(cfg.model_dump(mode="json"), r, str(out / f"replicate_{r:03d}")) for r in range(cfg.replicates)]
    if cfg.workers > 1 and cfg.replicates > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_replicate_task, tasks))
    else:
        target = build_target(cfg)
        reference = build_reference(cfg, target)
        results = [run_replicate(cfg, r, Path(o), target, reference) for _, r, o in tasks]
    results.sort(key=lambda r: r.replicate)
    doc = {
        "config_hash": cfg.config_hash(),
        "replicates": [r.to_dict() for r in results],
        "n_failed": sum(r.failed for r in results),
    }
    mmds = [r.summary.mmd for r in results if r.summary is not None]
    if mmds:
        doc["mmd_percentiles"] = dict(zip(("p25", "p50", "p75"), map(float, np.percentile(mmds, [25, 50, 75]))))
    (out / "summary.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return ExperimentResult(out, results)
