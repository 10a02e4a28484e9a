"""Expert demonstration datasets.

File format (line-delimited JSON, UTF-8, ``\\n`` line endings). Line 1 is the
header, then one line per episode::

    {"format":"ailsrs-expert-dataset","version":1,"env":"lqr","n":4,"p":2,"episodes":10,"recorder_seed":0,"mean_return":-30.5}
    {"episode":0,"length":100,"seed_info":[0,123],"return":-29.1,"states":[[...],...],"actions":[[...],...],"rewards":[...]}

Floats are written with 17 significant digits (exact for float64), keys in the
fixed order shown, no spaces, so save(load(save(ds))) is byte-identical.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import RngStream
from .errors import DimensionError, InvalidArgument, InvariantViolation, ParseError, VersionError
from .policy import PolicyParams
from .rollout import Trajectory, env_return, rollout_batch

DATASET_FORMAT = "ailsrs-expert-dataset"
DATASET_VERSION = 1
RETURN_RTOL = 1e-9


@dataclass(frozen=True)
class ExpertDataset:
    env_name: str
    n: int
    p: int
    episodes: tuple
    mean_return: float
    recorder_seed: int
    format_version: int = DATASET_VERSION

    def __len__(self):
        return len(self.episodes)

    def subset(self, k: int) -> "ExpertDataset":
        """First k episodes, with mean_return recomputed."""
        if not 1 <= k <= len(self.episodes):
            raise InvalidArgument(f"budget {k} outside 1..{len(self.episodes)}")
        eps = self.episodes[:k]
        return ExpertDataset(self.env_name, self.n, self.p, eps,
                             float(np.mean([env_return(t) for t in eps])), self.recorder_seed)

    def pairs(self):
        """All (state, action) steps stacked: ((M, n), (M, p))."""
        return (np.concatenate([t.states for t in self.episodes]),
                np.concatenate([t.actions for t in self.episodes]))

    def check_env(self, env):
        if (self.n, self.p) != (env.state_dim, env.action_dim):
            raise DimensionError(f"dataset has n={self.n}, p={self.p} but env {env.name!r} "
                                 f"has n={env.state_dim}, p={env.action_dim}")
        if self.env_name != env.name:
            raise DimensionError(f"dataset was recorded on env {self.env_name!r}, not {env.name!r}")


def record_expert(env, policy: PolicyParams, episodes: int, seed: int) -> ExpertDataset:
    if episodes < 1:
        raise InvalidArgument("episodes must be >= 1")
    policy.check_env(env)
    streams = [RngStream.derive(seed, "record", e) for e in range(episodes)]
    states, actions, rewards = rollout_batch(env, policy.theta, policy.normalizer, streams)
    trajs = tuple(Trajectory(states[e], actions[e], rewards[e], env.name,
                             (streams[e].master_seed, streams[e].stream_id))
                  for e in range(episodes))
    mean = float(np.mean([env_return(t) for t in trajs]))
    return ExpertDataset(env.name, env.state_dim, env.action_dim, trajs, mean, int(seed))


def _num(x) -> str:
    s = format(float(x), ".17g")
    return "-0.0" if s == "-0" else s


def _vec(v) -> str:
    return "[" + ",".join(_num(x) for x in v) + "]"


def _mat(m) -> str:
    return "[" + ",".join(_vec(row) for row in m) + "]"


def dumps_dataset(ds: ExpertDataset) -> str:
    lines = ["{" + ",".join([
        f'"format":{json.dumps(DATASET_FORMAT)}',
        f'"version":{ds.format_version}',
        f'"env":{json.dumps(ds.env_name)}',
        f'"n":{ds.n}', f'"p":{ds.p}',
        f'"episodes":{len(ds.episodes)}',
        f'"recorder_seed":{ds.recorder_seed}',
        f'"mean_return":{_num(ds.mean_return)}',
    ]) + "}"]
    for k, t in enumerate(ds.episodes):
        lines.append("{" + ",".join([
            f'"episode":{k}',
            f'"length":{t.episode_length}',
            f'"seed_info":[{int(t.seed_info[0])},{int(t.seed_info[1])}]',
            f'"return":{_num(env_return(t))}',
            f'"states":{_mat(t.states)}',
            f'"actions":{_mat(t.actions)}',
            f'"rewards":{_vec(t.env_rewards)}',
        ]) + "}")
    return "\n".join(lines) + "\n"


def save_dataset(ds: ExpertDataset, path) -> None:
    Path(path).write_text(dumps_dataset(ds))


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _array(value, shape, what, episode):
    """Validate a nested list of numbers against ``shape``; report the first bad step."""
    if not isinstance(value, list) or len(value) != shape[0]:
        raise InvariantViolation(f"episode {episode}: {what} must be a list of {shape[0]} entries", episode)
    for step, row in enumerate(value):
        items = row if len(shape) == 2 else [row]
        if len(shape) == 2 and (not isinstance(row, list) or len(row) != shape[1]):
            raise InvariantViolation(
                f"episode {episode}, step {step}: {what} must have {shape[1]} components", episode, step)
        for x in items:
            if not _is_num(x):
                raise InvariantViolation(f"episode {episode}, step {step}: {what} has a non-numeric value",
                                         episode, step)
            if not math.isfinite(x):
                raise InvariantViolation(f"episode {episode}, step {step}: {what} has a non-finite value",
                                         episode, step)
    return np.array(value, dtype=float).reshape(shape)


def _parse_line(line, lineno):
    try:
        obj = json.loads(line)
    except (json.JSONDecodeError, RecursionError) as exc:
        raise ParseError(f"line {lineno}: {exc}") from None
    if not isinstance(obj, dict):
        raise ParseError(f"line {lineno}: expected a JSON object")
    return obj


def loads_dataset(text: str, env=None) -> ExpertDataset:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty dataset file")
    head = _parse_line(lines[0], 1)
    if head.get("format") != DATASET_FORMAT:
        raise ParseError(f"not an expert dataset (format {head.get('format')!r})")
    if head.get("version") != DATASET_VERSION:
        raise VersionError(f"dataset version {head.get('version')!r}, supported: {DATASET_VERSION}")
    for key in ("n", "p", "episodes", "recorder_seed"):
        if not _is_int(head.get(key)):
            raise ParseError(f"header field {key!r} must be an integer")
    if not isinstance(head.get("env"), str):
        raise ParseError("header field 'env' must be a string")
    if not _is_num(head.get("mean_return")) or not math.isfinite(head["mean_return"]):
        raise ParseError("header field 'mean_return' must be a finite number")
    n, p, count = head["n"], head["p"], head["episodes"]
    if n < 1 or p < 1 or count < 1:
        raise InvariantViolation("header dimensions and episode count must be >= 1")
    if env is not None and (n, p) != (env.state_dim, env.action_dim):
        raise DimensionError(f"dataset has n={n}, p={p} but env {env.name!r} "
                             f"has n={env.state_dim}, p={env.action_dim}")
    if len(lines) - 1 != count:
        raise InvariantViolation(f"header declares {count} episodes, file has {len(lines) - 1}")

    episodes = []
    for k, line in enumerate(lines[1:]):
        rec = _parse_line(line, k + 2)
        if rec.get("episode") != k or not _is_int(rec.get("episode")):
            raise InvariantViolation(f"episode record {k} has index {rec.get('episode')!r}", k)
        length = rec.get("length")
        if not _is_int(length) or length < 0:
            raise InvariantViolation(f"episode {k}: invalid length {length!r}", k)
        seed_info = rec.get("seed_info")
        if not (isinstance(seed_info, list) and len(seed_info) == 2 and all(_is_int(x) for x in seed_info)):
            raise InvariantViolation(f"episode {k}: seed_info must be two integers", k)
        states = _array(rec.get("states"), (length, n), "states", k)
        actions = _array(rec.get("actions"), (length, p), "actions", k)
        rewards = _array(rec.get("rewards"), (length,), "rewards", k)
        traj = Trajectory(states, actions, rewards, head["env"], tuple(seed_info))
        ret = rec.get("return")
        if not _is_num(ret) or not math.isclose(ret, env_return(traj), rel_tol=RETURN_RTOL, abs_tol=1e-12):
            raise InvariantViolation(f"episode {k}: stored return {ret!r} != sum of rewards", k)
        episodes.append(traj)

    mean = float(np.mean([env_return(t) for t in episodes]))
    if not math.isclose(head["mean_return"], mean, rel_tol=RETURN_RTOL, abs_tol=1e-12):
        raise InvariantViolation(f"header mean_return {head['mean_return']!r} != recomputed {mean!r}")
    ds = ExpertDataset(head["env"], n, p, tuple(episodes), float(head["mean_return"]), head["recorder_seed"])
    if env is not None:
        ds.check_env(env)
    return ds


def load_dataset(path, env=None) -> ExpertDataset:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset file not found: {path}")
    try:
        text = path.read_text()
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not UTF-8 text ({exc})") from None
    return loads_dataset(text, env)


def dataset_stats(ds: ExpertDataset) -> dict:
    """Population statistics over all steps of all episodes."""
    if not ds.episodes:
        raise InvalidArgument("dataset has no episodes")
    states, actions = ds.pairs()
    if len(states) == 0:
        raise InvalidArgument("dataset has no steps")
    returns = np.array([env_return(t) for t in ds.episodes])
    return {
        "state_mean": states.mean(axis=0), "state_std": states.std(axis=0),
        "action_mean": actions.mean(axis=0), "action_std": actions.std(axis=0),
        "return_mean": float(returns.mean()), "return_std": float(returns.std()),
    }
