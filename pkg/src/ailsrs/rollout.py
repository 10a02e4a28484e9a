"""Episode execution and episode returns."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import RngStream, RunningStats
from .discriminator import disc_reward_batch
from .policy import PolicyParams, act_batch


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray        # (length, n) raw states; states[k] is where actions[k] was taken
    actions: np.ndarray       # (length, p) clamped actions actually applied
    env_rewards: np.ndarray   # (length,)
    env_name: str = ""
    seed_info: tuple = (0, 0)

    @property
    def episode_length(self) -> int:
        return int(self.env_rewards.shape[0])

    @classmethod
    def empty(cls, n: int, p: int, env_name: str = "") -> "Trajectory":
        return cls(np.zeros((0, n)), np.zeros((0, p)), np.zeros(0), env_name)


@dataclass(frozen=True)
class ReturnPair:
    r_plus: float
    r_minus: float
    direction_index: int


def _rollout_chunk(env, thetas, stats, s0):
    batch, horizon = s0.shape[0], env.horizon
    states = np.empty((batch, horizon, env.state_dim))
    actions = np.empty((batch, horizon, env.action_dim))
    rewards = np.empty((batch, horizon))
    s = s0
    for k in range(horizon):
        states[:, k] = s
        s, a, r = env.transition(s, act_batch(thetas, stats, s))
        actions[:, k] = a
        rewards[:, k] = r
    return states, actions, rewards


def rollout_batch(env, thetas: np.ndarray, stats: RunningStats, streams, workers: int = 1):
    """Run len(streams) full episodes at once.

    ``thetas`` is a single (p, n) matrix or one (p, n) matrix per episode.
    Episodes are split into ``workers`` contiguous chunks run on a thread
    pool; chunking never changes the numbers produced.
    Returns (states, actions, rewards) of shapes (B, T, n), (B, T, p), (B, T).
    """
    s0 = env.reset_batch(streams)
    batch = s0.shape[0]
    workers = max(1, min(int(workers), batch))
    if workers == 1:
        return _rollout_chunk(env, thetas, stats, s0)
    bounds = np.linspace(0, batch, workers + 1).astype(int)
    jobs = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            th = thetas if thetas.ndim == 2 else thetas[lo:hi]
            jobs.append(pool.submit(_rollout_chunk, env, th, stats, s0[lo:hi]))
        parts = [j.result() for j in jobs]
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(3))


def run_episode(env, policy: PolicyParams, stream: RngStream, collect_stats: bool = False):
    """Run one episode; returns (trajectory, visited states or None)."""
    policy.check_env(env)
    states, actions, rewards = rollout_batch(env, policy.theta, policy.normalizer, [stream])
    traj = Trajectory(states[0], actions[0], rewards[0], env.name,
                      (stream.master_seed, stream.stream_id))
    return traj, (states[0].copy() if collect_stats else None)


def env_return(traj: Trajectory) -> float:
    return float(np.sum(traj.env_rewards))


def surrogate_return(traj: Trajectory, disc) -> float:
    if traj.episode_length == 0:
        return 0.0
    return float(np.sum(disc_reward_batch(disc, traj.states, traj.actions)))
