"""Behavioral cloning and adversarial imitation by random search.

The imitation loop never reads environment rewards for any update: returns
fed to the policy step are sums of discriminator rewards over each rollout,
and env rewards are only used for the evaluation column of the metrics.
"""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import RngStream, RunningStats, stats_merge
from .dataset import ExpertDataset, dataset_stats
from .discriminator import (DiscBatch, disc_reward_batch, disc_train_step, init_discriminator,
                            load_discriminator, save_discriminator)
from .errors import InvalidArgument, NumericalFailure, ParseError
from .metrics import MetricsRow
from .policy import PolicyParams, load_policy, normalize, save_policy
from .search import ArsConfig, apply_update, collect_pair_rollouts, evaluate_policy, make_pairs, sample_directions

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class BcConfig:
    ridge_lambda: float = 1e-6
    solver: str = "closed-form"
    iterations: int = 10_000
    lr: float = 0.01

    def __post_init__(self):
        if self.ridge_lambda < 0:
            raise InvalidArgument("ridge_lambda must be >= 0")
        if self.solver not in ("closed-form", "iterative"):
            raise InvalidArgument(f"unknown BC solver {self.solver!r}")
        if self.iterations < 1 or not self.lr > 0:
            raise InvalidArgument("iterative BC needs iterations >= 1 and lr > 0")


@dataclass(frozen=True)
class AilsrsConfig:
    ars: ArsConfig = field(default_factory=ArsConfig)
    disc_lr: float = 0.00025
    disc_iters: int = 3
    bc_pretrain: bool = False
    max_iterations: int = 100_000
    eval_every: int = 1
    reward_after_disc_update: bool = True
    disc_batch_size: int = 0          # 0: one episode length

    def __post_init__(self):
        if not self.disc_lr > 0 or self.disc_iters < 1 or self.eval_every < 1 or self.max_iterations < 0:
            raise InvalidArgument(f"invalid AilsrsConfig: {self}")
        if self.disc_batch_size < 0:
            raise InvalidArgument("disc_batch_size must be >= 0")


def bc_objective(theta, x, y, ridge_lambda=0.0) -> float:
    """mean_k ||y_k - theta x_k||^2 + ridge_lambda * ||theta||_F^2 over normalized states x."""
    r = y - x @ theta.T
    return float(np.mean(np.sum(r * r, axis=1)) + ridge_lambda * np.sum(theta * theta))


def _bc_closed_form(x, y, lam):
    m, n = x.shape
    gram = x.T @ x / m + lam * np.eye(n)
    if lam == 0 and np.linalg.cond(gram) > 1e12:
        raise NumericalFailure("BC normal matrix is singular; use ridge_lambda > 0")
    return np.linalg.solve(gram, x.T @ y / m).T


def _bc_adam(x, y, cfg: BcConfig):
    m, n = x.shape
    theta = np.zeros((y.shape[1], n))
    mom, vel = np.zeros_like(theta), np.zeros_like(theta)
    b1, b2, eps = 0.9, 0.999, 1e-8
    for t in range(1, cfg.iterations + 1):
        grad = -2.0 * (y - x @ theta.T).T @ x / m + 2.0 * cfg.ridge_lambda * theta
        mom = b1 * mom + (1 - b1) * grad
        vel = b2 * vel + (1 - b2) * grad * grad
        # linear decay keeps the final iterate close to the minimizer
        lr = cfg.lr * (1.0 - (t - 1) / cfg.iterations)
        theta = theta - lr * (mom / (1 - b1 ** t)) / (np.sqrt(vel / (1 - b2 ** t)) + eps)
    return theta


def bc_fit(dataset: ExpertDataset, env, cfg: BcConfig = BcConfig(),
           normalizer: RunningStats | None = None) -> PolicyParams:
    """Least-squares regression of expert actions on normalized expert states.

    Without an explicit ``normalizer`` one is fit on the expert states, and the
    returned policy carries it.
    """
    dataset.check_env(env)
    states, actions = dataset.pairs()
    if normalizer is None:
        normalizer = stats_merge(RunningStats.empty(env.state_dim), states)
    x = normalize(normalizer, states)
    if cfg.solver == "closed-form":
        theta = _bc_closed_form(x, actions, cfg.ridge_lambda)
    else:
        theta = _bc_adam(x, actions, cfg)
    meta = {"trainer": "bc", "solver": cfg.solver, "ridge_lambda": cfg.ridge_lambda,
            "episodes": len(dataset)}
    return PolicyParams(theta, normalizer, env.name, meta)


def sample_pairs(states: np.ndarray, actions: np.ndarray, batch_size: int, stream: RngStream):
    """Uniform sample without replacement over the rows; all rows if too few."""
    total = len(states)
    if batch_size >= total:
        return states, actions
    idx = stream.choice_without_replacement(total, batch_size)
    return states[idx], actions[idx]


def sample_policy_pairs(rollouts, batch_size: int, stream: RngStream):
    """(states, actions) sampled across all steps of ``rollouts`` (Trajectory list)."""
    if not rollouts:
        raise InvalidArgument("need at least one rollout")
    states = np.concatenate([t.states for t in rollouts])
    actions = np.concatenate([t.actions for t in rollouts])
    return sample_pairs(states, actions, batch_size, stream)


@dataclass
class AilsrsState:
    """Everything needed to continue training bit-exactly from ``iteration``."""
    policy: PolicyParams
    disc: object
    iteration: int


def initial_state(env, dataset: ExpertDataset, cfg: AilsrsConfig, seed: int) -> AilsrsState:
    st = dataset_stats(dataset)
    disc = init_discriminator(env.state_dim, env.action_dim, RngStream.derive(seed, "disc-init"),
                              np.concatenate([st["state_mean"], st["action_mean"]]),
                              np.concatenate([st["state_std"], st["action_std"]]))
    if cfg.bc_pretrain:
        policy = bc_fit(dataset, env)
    else:
        policy = PolicyParams.zeros(env.action_dim, env.state_dim, env.name)
    return AilsrsState(policy, disc, 0)


def save_checkpoint(state: AilsrsState, seed: int, directory) -> None:
    """Layout: policy.txt (theta + normalizer), discriminator.json, state.json."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_policy(state.policy, d / "policy.txt")
    save_discriminator(state.disc, d / "discriminator.json")
    meta = {"format": "ailsrs-checkpoint", "version": CHECKPOINT_VERSION, "iteration": state.iteration,
            "seed": seed, "rng": {"scheme": "philox-derived", "master_seed": seed,
                                  "next_iteration": state.iteration + 1}}
    (d / "state.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_checkpoint(directory, env=None):
    """Returns (AilsrsState, seed)."""
    d = Path(directory)
    try:
        meta = json.loads((d / "state.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read checkpoint state in {d}: {exc}") from None
    if meta.get("format") != "ailsrs-checkpoint" or meta.get("version") != CHECKPOINT_VERSION:
        raise ParseError(f"unsupported checkpoint in {d}")
    policy = load_policy(d / "policy.txt", env)
    disc = load_discriminator(d / "discriminator.json")
    return AilsrsState(policy, disc, int(meta["iteration"])), int(meta["seed"])


def ailsrs_iteration(env, expert_states, expert_actions, state: AilsrsState, cfg: AilsrsConfig,
                     seed: int, workers: int = 1):
    """One training iteration; a pure function of (state, seed, config).

    Returns (new state, info dict with mean_surrogate_return, sigma_r, disc_loss).
    """
    t = state.iteration + 1
    policy, disc = state.policy, state.disc
    ars = cfg.ars
    deltas = sample_directions(RngStream.derive(seed, "directions", t), ars, env.action_dim, env.state_dim)
    states, actions, _ = collect_pair_rollouts(env, policy, deltas, ars, seed, t, workers)
    flat_s = states.reshape(-1, env.state_dim)
    flat_a = actions.reshape(-1, env.action_dim)

    if not cfg.reward_after_disc_update:
        surrogate = disc_reward_batch(disc, states, actions).sum(axis=1)
    batch_size = cfg.disc_batch_size or env.horizon
    losses = []
    for k in range(cfg.disc_iters):
        es, ea = sample_pairs(expert_states, expert_actions, batch_size,
                              RngStream.derive(seed, "disc-expert", t, k))
        ps, pa = sample_pairs(flat_s, flat_a, batch_size, RngStream.derive(seed, "disc-policy", t, k))
        disc, loss = disc_train_step(disc, DiscBatch.from_pairs(es, ea, ps, pa), cfg.disc_lr)
        losses.append(loss)
    if cfg.reward_after_disc_update:
        surrogate = disc_reward_batch(disc, states, actions).sum(axis=1)
    if not np.all(np.isfinite(surrogate)):
        raise NumericalFailure(f"non-finite surrogate return at iteration {t}")

    theta, report = apply_update(policy.theta, make_pairs(surrogate), deltas, ars, t)
    stats = stats_merge(policy.normalizer, flat_s) if ars.variant == "ars-v2" else policy.normalizer
    new_policy = PolicyParams(theta, stats, env.name, policy.metadata)
    info = {"mean_surrogate_return": float(surrogate.mean()), "sigma_r": report.sigma_r,
            "disc_loss": float(np.mean(losses)), "degenerate": report.degenerate}
    return AilsrsState(new_policy, disc, t), info


def ailsrs_train(env, dataset: ExpertDataset, cfg: AilsrsConfig, seed: int, workers: int = 1,
                 on_iteration=None, resume: AilsrsState | None = None,
                 checkpoint_dir=None, checkpoint_every: int = 0):
    """Adversarial imitation with ARS-V2 on discriminator rewards.

    Returns (policy, discriminator, metrics rows). A row is emitted for the
    starting point and after every ``eval_every``-th iteration and the last one;
    ``eval_env_return`` is a deterministic evaluation of the unperturbed policy.
    """
    dataset.check_env(env)
    expert_states, expert_actions = dataset.pairs()
    state = resume or initial_state(env, dataset, cfg, seed)
    rows = []
    start = time.perf_counter()

    def evaluate(st, info):
        ev = evaluate_policy(env, st.policy, seed, st.iteration, cfg.ars.eval_episodes, workers)
        row = MetricsRow(seed, st.iteration, float(ev.mean()), info.get("mean_surrogate_return", 0.0),
                         info.get("sigma_r", 0.0), info.get("disc_loss", 0.0), time.perf_counter() - start)
        if not row.is_finite():
            raise NumericalFailure(f"non-finite metrics at iteration {st.iteration}: {row}")
        rows.append(row)
        if on_iteration is not None:
            on_iteration(row)

    if resume is None:
        evaluate(state, {})
    while state.iteration < cfg.max_iterations:
        state, info = ailsrs_iteration(env, expert_states, expert_actions, state, cfg, seed, workers)
        if state.iteration % cfg.eval_every == 0 or state.iteration == cfg.max_iterations:
            evaluate(state, info)
        if checkpoint_dir and checkpoint_every and state.iteration % checkpoint_every == 0:
            save_checkpoint(state, seed, checkpoint_dir)

    meta = dict(state.policy.metadata)
    meta.update({"trainer": "ailsrs", "iterations": state.iteration, "seed": seed,
                 "expert_episodes": len(dataset)})
    policy = PolicyParams(state.policy.theta, state.policy.normalizer, env.name, meta)
    return policy, state.disc, rows


def config_dict(cfg) -> dict:
    return asdict(cfg)
