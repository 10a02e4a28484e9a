"""Parameter-space random search: the basic (BRS) and the reward-std scaled
(ARS-V2) update, and the expert-training loop built on them.

Streams are derived from (seed, purpose, iteration, index) so the numbers a
run produces do not depend on rollout scheduling. Both members of an
antithetic pair start from the same initial state.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .core import RngStream, stats_merge
from .errors import InvalidArgument, NumericalFailure
from .metrics import MetricsRow
from .policy import PolicyParams
from .rollout import ReturnPair, rollout_batch

SIGMA_FLOOR = 1e-9
VARIANTS = ("ars-v2", "brs")
RESET_SHARING = ("iteration", "pair")


@dataclass(frozen=True)
class ArsConfig:
    alpha: float = 0.02
    n_directions: int = 320
    nu: float = 0.03
    variant: str = "ars-v2"
    eval_episodes: int = 1
    reset_sharing: str = "iteration"

    def __post_init__(self):
        if not self.alpha > 0 or not self.nu > 0 or self.n_directions < 1:
            raise InvalidArgument(f"invalid ArsConfig: {self}")
        if self.variant not in VARIANTS:
            raise InvalidArgument(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.reset_sharing not in RESET_SHARING:
            raise InvalidArgument(f"unknown reset_sharing {self.reset_sharing!r}; choose from {RESET_SHARING}")
        if self.eval_episodes < 1:
            raise InvalidArgument("eval_episodes must be >= 1")


@dataclass(frozen=True)
class UpdateReport:
    sigma_r: float
    update_norm: float
    mean_return_plus: float
    mean_return_minus: float
    iteration: int
    degenerate: bool = False


def sample_directions(stream: RngStream, cfg: ArsConfig, p: int, n: int) -> np.ndarray:
    """N i.i.d. standard-normal (p, n) directions stacked as (N, p, n)."""
    return stream.normal((cfg.n_directions, p, n))


def _unpack(pairs, deltas, theta):
    deltas = np.asarray(deltas, dtype=float)
    if len(pairs) != len(deltas):
        raise InvalidArgument(f"{len(pairs)} return pairs but {len(deltas)} directions")
    if len(pairs) == 0:
        raise InvalidArgument("need at least one direction")
    if deltas.shape[1:] != theta.shape:
        raise InvalidArgument(f"direction shape {deltas.shape[1:]} != theta shape {theta.shape}")
    order = sorted(range(len(pairs)), key=lambda i: pairs[i].direction_index)
    r_plus = np.array([pairs[i].r_plus for i in order], dtype=float)
    r_minus = np.array([pairs[i].r_minus for i in order], dtype=float)
    if not (np.all(np.isfinite(r_plus)) and np.all(np.isfinite(r_minus))):
        raise NumericalFailure("non-finite rollout return")
    if [pairs[i].direction_index for i in order] != list(range(len(pairs))):
        raise InvalidArgument("direction indices must be 0..N-1")
    return r_plus, r_minus, deltas


def _weighted_sum(weights, deltas):
    acc = weights[0] * deltas[0]
    for w, d in zip(weights[1:], deltas[1:]):
        acc = acc + w * d
    return acc


def brs_update(theta, pairs, deltas, cfg: ArsConfig) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    r_plus, r_minus, deltas = _unpack(pairs, deltas, theta)
    return theta + (cfg.alpha / len(r_plus)) * _weighted_sum(r_plus - r_minus, deltas)


def ars_update(theta, pairs, deltas, cfg: ArsConfig, iteration: int = 0):
    """ARS-V2 step, alpha / (N sigma_R) * sum_i (r+_i - r-_i) delta_i.

    sigma_R is the population std of all 2N returns. When it is below
    SIGMA_FLOOR the step is skipped and the report is flagged degenerate.
    """
    theta = np.asarray(theta, dtype=float)
    r_plus, r_minus, deltas = _unpack(pairs, deltas, theta)
    sigma = float(np.std(np.concatenate([r_plus, r_minus])))
    degenerate = sigma < SIGMA_FLOOR
    if degenerate:
        new_theta = theta.copy()
    else:
        step = _weighted_sum(r_plus - r_minus, deltas) * (cfg.alpha / (len(r_plus) * sigma))
        new_theta = theta + step
    report = UpdateReport(sigma, float(np.linalg.norm(new_theta - theta)),
                          float(r_plus.mean()), float(r_minus.mean()), iteration, degenerate)
    return new_theta, report


def pair_thetas(theta, deltas, nu):
    """Stack perturbed parameters as rows 2i (= +) and 2i+1 (= -)."""
    out = np.empty((2 * len(deltas),) + theta.shape)
    out[0::2] = theta + nu * deltas
    out[1::2] = theta - nu * deltas
    return out


def reset_streams(seed, iteration, n_directions, sharing="iteration"):
    """Initial-state streams for the 2N rollouts of one iteration.

    "pair": each antithetic pair gets its own initial state.
    "iteration": all 2N rollouts start from one common initial state.
    """
    streams = []
    for i in range(n_directions):
        idx = 0 if sharing == "iteration" else i
        streams.append(RngStream.derive(seed, "reset", iteration, idx))
        streams.append(RngStream.derive(seed, "reset", iteration, idx))
    return streams


def collect_pair_rollouts(env, policy: PolicyParams, deltas, cfg: ArsConfig, seed, iteration, workers=1):
    """2N rollouts of the antithetic pairs under the policy's normalizer snapshot."""
    thetas = pair_thetas(policy.theta, deltas, cfg.nu)
    streams = reset_streams(seed, iteration, len(deltas), cfg.reset_sharing)
    return rollout_batch(env, thetas, policy.normalizer, streams, workers)


def evaluate_policy(env, policy: PolicyParams, seed, iteration, episodes=1, workers=1) -> np.ndarray:
    """True-env returns of the unperturbed policy on dedicated eval streams."""
    streams = [RngStream.derive(seed, "eval", iteration, e) for e in range(episodes)]
    _, _, rewards = rollout_batch(env, policy.theta, policy.normalizer, streams, workers)
    return rewards.sum(axis=1)


def make_pairs(returns) -> list:
    return [ReturnPair(float(returns[2 * i]), float(returns[2 * i + 1]), i)
            for i in range(len(returns) // 2)]


def apply_update(theta, pairs, deltas, cfg, iteration):
    if cfg.variant == "brs":
        r = np.array([[q.r_plus, q.r_minus] for q in pairs])
        new_theta = brs_update(theta, pairs, deltas, cfg)
        report = UpdateReport(float(np.std(r)), float(np.linalg.norm(new_theta - theta)),
                              float(r[:, 0].mean()), float(r[:, 1].mean()), iteration)
        return new_theta, report
    return ars_update(theta, pairs, deltas, cfg, iteration)


def train_expert(env, cfg: ArsConfig, seed: int, max_iters: int, workers: int = 1,
                 on_iteration=None, initial: PolicyParams | None = None):
    """Optimize a linear policy on the true env reward.

    Returns (policy, metrics rows). Iteration 0's row evaluates the initial
    policy; row t >= 1 evaluates the policy after the t-th update.
    ``on_iteration(row)`` is called as each row is produced.
    """
    policy = initial or PolicyParams.zeros(env.action_dim, env.state_dim, env.name)
    policy.check_env(env)
    rows = []
    start = time.perf_counter()

    def emit(row):
        rows.append(row)
        if on_iteration is not None:
            on_iteration(row)

    ev = evaluate_policy(env, policy, seed, 0, cfg.eval_episodes, workers)
    emit(MetricsRow(seed, 0, float(ev.mean()), 0.0, 0.0, 0.0, time.perf_counter() - start))

    for t in range(1, max_iters + 1):
        deltas = sample_directions(RngStream.derive(seed, "directions", t), cfg,
                                   env.action_dim, env.state_dim)
        states, _, rewards = collect_pair_rollouts(env, policy, deltas, cfg, seed, t, workers)
        returns = rewards.sum(axis=1)
        pairs = make_pairs(returns)
        theta, report = apply_update(policy.theta, pairs, deltas, cfg, t)
        stats = policy.normalizer
        if cfg.variant == "ars-v2":
            stats = stats_merge(stats, states.reshape(-1, env.state_dim))
        policy = PolicyParams(theta, stats, env.name, policy.metadata)
        ev = evaluate_policy(env, policy, seed, t, cfg.eval_episodes, workers)
        row = MetricsRow(seed, t, float(ev.mean()), float(returns.mean()), report.sigma_r, 0.0,
                         time.perf_counter() - start)
        if not row.is_finite():
            raise NumericalFailure(f"non-finite metrics at iteration {t}: {row}")
        emit(row)

    meta = dict(policy.metadata)
    meta.update({"trainer": "ars-expert", "variant": cfg.variant, "iterations": max_iters, "seed": seed})
    return PolicyParams(policy.theta, policy.normalizer, env.name, meta), rows
