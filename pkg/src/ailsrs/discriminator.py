"""Least-squares adversarial reward model.

D(s, a) = sigmoid(W3 tanh(W2 tanh(W1 x + b1) + b2) + b3), x the standardized
concatenation [s; a]. Hidden layers have 100 tanh units. The output is
clamped to [eps, 1 - eps] before entering the loss or the reward, and the
gradient is zero wherever the clamp is active.

Loss on a batch (labels: policy a=0, expert b=1)::

    0.5 * mean_expert (D - b)^2 + 0.5 * mean_policy (D - a)^2

Reward for the policy optimizer: -log(1 - D).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .core import RngStream
from .errors import DimensionError, InvalidArgument, NumericalFailure, ParseError, VersionError

HIDDEN = 100
CLAMP_EPS = 1e-6
STD_FLOOR = 1e-6
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
EXPERT_LABEL = 1.0
POLICY_LABEL = 0.0

PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")
CHECKPOINT_FORMAT = "ailsrs-discriminator"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class AdamState:
    step: int
    m: dict
    v: dict

    @classmethod
    def zeros_like(cls, params: dict) -> "AdamState":
        return cls(0, {k: np.zeros_like(w) for k, w in params.items()},
                   {k: np.zeros_like(w) for k, w in params.items()})


@dataclass(frozen=True)
class DiscriminatorParams:
    params: dict                      # PARAM_NAMES -> arrays
    in_mean: np.ndarray               # frozen input standardization
    in_std: np.ndarray
    adam: AdamState = None
    eps: float = CLAMP_EPS
    state_dim: int = 0
    action_dim: int = 0

    def __post_init__(self):
        if self.adam is None:
            object.__setattr__(self, "adam", AdamState.zeros_like(self.params))

    @property
    def input_dim(self) -> int:
        return self.params["W1"].shape[1]

    def __getattr__(self, name):
        if name in PARAM_NAMES and "params" in self.__dict__:
            return self.__dict__["params"][name]
        raise AttributeError(name)


@dataclass
class DiscBatch:
    expert_pairs: np.ndarray          # (k_e, n + p)
    policy_pairs: np.ndarray          # (k_p, n + p)

    @classmethod
    def from_pairs(cls, expert_s, expert_a, policy_s, policy_a) -> "DiscBatch":
        return cls(np.concatenate([expert_s, expert_a], axis=1),
                   np.concatenate([policy_s, policy_a], axis=1))


def init_discriminator(state_dim: int, action_dim: int, stream: RngStream,
                       in_mean=None, in_std=None, hidden: int = HIDDEN) -> DiscriminatorParams:
    """Glorot-uniform weights, zero biases."""
    d = state_dim + action_dim
    shapes = [(hidden, d), (hidden, hidden), (1, hidden)]
    params = {}
    for k, (fan_out, fan_in) in enumerate(shapes, 1):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[f"W{k}"] = stream.uniform(-limit, limit, (fan_out, fan_in))
        params[f"b{k}"] = np.zeros(fan_out)
    in_mean = np.zeros(d) if in_mean is None else np.asarray(in_mean, dtype=float)
    in_std = np.ones(d) if in_std is None else np.maximum(np.asarray(in_std, dtype=float), STD_FLOOR)
    return DiscriminatorParams(params, in_mean, in_std, state_dim=state_dim, action_dim=action_dim)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _forward(disc: DiscriminatorParams, x: np.ndarray):
    p = disc.params
    xs = (x - disc.in_mean) / disc.in_std
    h1 = np.tanh(xs @ p["W1"].T + p["b1"])
    h2 = np.tanh(h1 @ p["W2"].T + p["b2"])
    out = _sigmoid(h2 @ p["W3"].T + p["b3"])[:, 0]
    return xs, h1, h2, out


def _check_input(disc, x):
    if x.ndim != 2 or x.shape[1] != disc.input_dim:
        raise InvalidArgument(f"discriminator expects inputs of dim {disc.input_dim}, got {x.shape}")


def disc_output(disc: DiscriminatorParams, x: np.ndarray) -> np.ndarray:
    """Unclamped outputs for a (batch, n + p) array."""
    x = np.asarray(x, dtype=float)
    _check_input(disc, x)
    return _forward(disc, x)[3]


def clamp_output(disc: DiscriminatorParams, d):
    return np.clip(d, disc.eps, 1.0 - disc.eps)


def disc_forward(disc: DiscriminatorParams, s, a) -> float:
    x = np.concatenate([np.asarray(s, dtype=float), np.asarray(a, dtype=float)])
    return float(disc_output(disc, x[None, :])[0])


def reward_from_output(d, eps=CLAMP_EPS):
    return -np.log1p(-np.clip(d, eps, 1.0 - eps))


def disc_reward(disc: DiscriminatorParams, s, a) -> float:
    return float(reward_from_output(disc_forward(disc, s, a), disc.eps))


def disc_reward_batch(disc: DiscriminatorParams, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Per-step rewards; leading dims of states/actions are preserved."""
    lead = states.shape[:-1]
    x = np.concatenate([states.reshape(-1, states.shape[-1]),
                        actions.reshape(-1, actions.shape[-1])], axis=1)
    return reward_from_output(disc_output(disc, x), disc.eps).reshape(lead)


def _check_batch(disc, batch: DiscBatch):
    if len(batch.expert_pairs) == 0 or len(batch.policy_pairs) == 0:
        raise InvalidArgument("discriminator batch needs expert and policy pairs")
    _check_input(disc, batch.expert_pairs)
    _check_input(disc, batch.policy_pairs)


def ls_loss(disc: DiscriminatorParams, batch: DiscBatch,
            expert_label=EXPERT_LABEL, policy_label=POLICY_LABEL) -> float:
    _check_batch(disc, batch)
    de = clamp_output(disc, _forward(disc, batch.expert_pairs)[3])
    dp = clamp_output(disc, _forward(disc, batch.policy_pairs)[3])
    return float(0.5 * np.mean((de - expert_label) ** 2) + 0.5 * np.mean((dp - policy_label) ** 2))


def gail_objective(disc: DiscriminatorParams, batch: DiscBatch) -> float:
    """Value of the cross-entropy min-max objective, E_pi[log D] + E_E[log(1 - D)].

    Evaluation only; the discriminator is never trained on it.
    """
    _check_batch(disc, batch)
    de = clamp_output(disc, _forward(disc, batch.expert_pairs)[3])
    dp = clamp_output(disc, _forward(disc, batch.policy_pairs)[3])
    return float(np.mean(np.log(dp)) + np.mean(np.log1p(-de)))


def disc_grad(disc: DiscriminatorParams, batch: DiscBatch,
              expert_label=EXPERT_LABEL, policy_label=POLICY_LABEL):
    """Returns (loss, grads) with grads keyed like ``disc.params``."""
    _check_batch(disc, batch)
    ne, npol = len(batch.expert_pairs), len(batch.policy_pairs)
    x = np.concatenate([batch.expert_pairs, batch.policy_pairs])
    xs, h1, h2, d = _forward(disc, x)
    dc = clamp_output(disc, d)
    target = np.concatenate([np.full(ne, expert_label), np.full(npol, policy_label)])
    weight = np.concatenate([np.full(ne, 0.5 / ne), np.full(npol, 0.5 / npol)])
    loss = float(np.sum(weight[:ne] * (dc[:ne] - target[:ne]) ** 2)
                 + np.sum(weight[ne:] * (dc[ne:] - target[ne:]) ** 2))

    active = (d > disc.eps) & (d < 1.0 - disc.eps)
    g_z3 = (2.0 * weight * (dc - target) * active * d * (1.0 - d))[:, None]    # (B, 1)
    p = disc.params
    g_h2 = g_z3 @ p["W3"]
    g_z2 = g_h2 * (1.0 - h2 ** 2)
    g_h1 = g_z2 @ p["W2"]
    g_z1 = g_h1 * (1.0 - h1 ** 2)
    grads = {
        "W3": g_z3.T @ h2, "b3": g_z3.sum(axis=0),
        "W2": g_z2.T @ h1, "b2": g_z2.sum(axis=0),
        "W1": g_z1.T @ xs, "b1": g_z1.sum(axis=0),
    }
    return loss, grads


def adam_step(params: dict, grads: dict, state: AdamState, lr: float):
    t = state.step + 1
    new_p, new_m, new_v = {}, {}, {}
    c1 = 1.0 - ADAM_BETA1 ** t
    c2 = 1.0 - ADAM_BETA2 ** t
    for k in params:
        m = ADAM_BETA1 * state.m[k] + (1.0 - ADAM_BETA1) * grads[k]
        v = ADAM_BETA2 * state.v[k] + (1.0 - ADAM_BETA2) * grads[k] ** 2
        new_p[k] = params[k] - lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
        new_m[k], new_v[k] = m, v
    return new_p, AdamState(t, new_m, new_v)


def disc_train_step(disc: DiscriminatorParams, batch: DiscBatch, lr: float):
    """One Adam step on the least-squares loss; returns (new params, pre-step loss)."""
    if lr < 0:
        raise InvalidArgument(f"learning rate must be >= 0, got {lr}")
    loss, grads = disc_grad(disc, batch)
    params, adam = adam_step(disc.params, grads, disc.adam, lr)
    for k, w in params.items():
        if not np.all(np.isfinite(w)):
            raise NumericalFailure(f"discriminator parameter {k} became non-finite")
    return replace(disc, params=params, adam=adam), loss


def _tolist(a):
    return np.asarray(a).tolist()


def disc_to_dict(disc: DiscriminatorParams) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "state_dim": disc.state_dim,
        "action_dim": disc.action_dim,
        "hidden": disc.params["W2"].shape[0],
        "clamp_eps": disc.eps,
        "adam": {"beta1": ADAM_BETA1, "beta2": ADAM_BETA2, "eps": ADAM_EPS, "step": disc.adam.step,
                 "m": {k: _tolist(v) for k, v in disc.adam.m.items()},
                 "v": {k: _tolist(v) for k, v in disc.adam.v.items()}},
        "in_mean": _tolist(disc.in_mean),
        "in_std": _tolist(disc.in_std),
        "params": {k: _tolist(v) for k, v in disc.params.items()},
    }


def disc_from_dict(d: dict) -> DiscriminatorParams:
    if d.get("format") != CHECKPOINT_FORMAT:
        raise ParseError("not a discriminator checkpoint")
    if d.get("version") != CHECKPOINT_VERSION:
        raise VersionError(f"discriminator checkpoint version {d.get('version')!r}, supported: {CHECKPOINT_VERSION}")
    try:
        n, p, hidden = int(d["state_dim"]), int(d["action_dim"]), int(d["hidden"])
        params = {k: np.array(d["params"][k], dtype=float) for k in PARAM_NAMES}
        adam = AdamState(int(d["adam"]["step"]),
                         {k: np.array(d["adam"]["m"][k], dtype=float) for k in PARAM_NAMES},
                         {k: np.array(d["adam"]["v"][k], dtype=float) for k in PARAM_NAMES})
        in_mean = np.array(d["in_mean"], dtype=float)
        in_std = np.array(d["in_std"], dtype=float)
        eps = float(d["clamp_eps"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed discriminator checkpoint: {exc}") from None
    expected = {"W1": (hidden, n + p), "b1": (hidden,), "W2": (hidden, hidden), "b2": (hidden,),
                "W3": (1, hidden), "b3": (1,)}
    for k, shape in expected.items():
        if params[k].shape != shape or adam.m[k].shape != shape or adam.v[k].shape != shape:
            raise DimensionError(f"discriminator {k}: expected shape {shape}, got {params[k].shape}")
    if in_mean.shape != (n + p,) or in_std.shape != (n + p,):
        raise DimensionError("standardization vectors do not match input dimension")
    return DiscriminatorParams(params, in_mean, in_std, adam, eps, n, p)


def save_discriminator(disc: DiscriminatorParams, path) -> None:
    Path(path).write_text(json.dumps(disc_to_dict(disc)) + "\n")


def load_discriminator(path) -> DiscriminatorParams:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return disc_from_dict(d)
