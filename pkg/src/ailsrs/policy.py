"""Linear policies over normalized observations.

A policy maps s to theta @ diag(var)^(-1/2) @ (s - mean), with the variance
floored at VAR_FLOOR. The normalizer is a RunningStats snapshot; perturbed
copies share the snapshot object of their parent.

Policy file format (UTF-8 text, one ``key: value`` per line)::

    format: ailsrs-policy
    version: 1
    env: lqr
    n: 4
    p: 2
    theta: <p*n decimals, row-major, space separated>
    norm.count: <int>
    norm.version: <int>
    norm.mean: <n decimals>
    norm.m2: <n decimals>
    meta.<key>: <free text, one line>
    end

Decimals carry 17 significant digits, so 64-bit floats round-trip exactly.
The closing ``end`` line marks a complete file; a truncated file is rejected.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import RunningStats, batch_matvec
from .errors import DimensionError, InvalidArgument, ParseError, VersionError

VAR_FLOOR = 1e-8
POLICY_FORMAT = "ailsrs-policy"
POLICY_VERSION = 1


@dataclass(frozen=True)
class PolicyParams:
    theta: np.ndarray
    normalizer: RunningStats
    env_name: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.theta.ndim != 2:
            raise InvalidArgument(f"theta must be 2-D, got shape {self.theta.shape}")
        if self.normalizer.dim != self.theta.shape[1]:
            raise InvalidArgument(
                f"normalizer dimension {self.normalizer.dim} != theta columns {self.theta.shape[1]}")

    @classmethod
    def zeros(cls, p: int, n: int, env_name: str = "") -> "PolicyParams":
        return cls(np.zeros((p, n)), RunningStats.empty(n), env_name)

    @property
    def action_dim(self) -> int:
        return self.theta.shape[0]

    @property
    def state_dim(self) -> int:
        return self.theta.shape[1]

    def check_env(self, env):
        if (self.action_dim, self.state_dim) != (env.action_dim, env.state_dim):
            raise DimensionError(
                f"policy has p={self.action_dim}, n={self.state_dim} but env {env.name!r} "
                f"has p={env.action_dim}, n={env.state_dim}")


@dataclass(frozen=True)
class Perturbation:
    delta: np.ndarray
    nu: float

    def __post_init__(self):
        if not self.nu > 0:
            raise InvalidArgument(f"nu must be positive, got {self.nu}")
        if not np.all(np.isfinite(self.delta)):
            raise InvalidArgument("perturbation contains non-finite entries")


def inv_scale(stats: RunningStats) -> np.ndarray:
    return 1.0 / np.sqrt(np.maximum(stats.variance, VAR_FLOOR))


def normalize(stats: RunningStats, s: np.ndarray) -> np.ndarray:
    return (s - stats.mean) * inv_scale(stats)


def act(policy: PolicyParams, s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.shape != (policy.state_dim,):
        raise InvalidArgument(f"state must have length {policy.state_dim}, got {s.shape}")
    return act_batch(policy.theta, policy.normalizer, s[None, :])[0]


def act_batch(theta: np.ndarray, stats: RunningStats, s: np.ndarray) -> np.ndarray:
    """Actions for a batch of states; theta is (p, n) or one (p, n) per row."""
    return batch_matvec(theta, normalize(stats, s))


def perturb(policy: PolicyParams, pert: Perturbation, sign: int) -> PolicyParams:
    if sign not in (1, -1):
        raise InvalidArgument(f"sign must be +1 or -1, got {sign}")
    if pert.delta.shape != policy.theta.shape:
        raise InvalidArgument(f"delta shape {pert.delta.shape} != theta shape {policy.theta.shape}")
    theta = policy.theta + sign * pert.nu * pert.delta
    return PolicyParams(theta, policy.normalizer, policy.env_name, dict(policy.metadata))


def _fmt(values) -> str:
    return " ".join(format(float(v), ".17g") for v in np.ravel(values))


def _floats(text: str, count: int, key: str) -> np.ndarray:
    parts = text.split()
    if len(parts) != count:
        raise ParseError(f"{key}: expected {count} values, found {len(parts)}")
    try:
        vals = np.array([float(x) for x in parts])
    except ValueError as exc:
        raise ParseError(f"{key}: {exc}") from None
    if not np.all(np.isfinite(vals)):
        raise ParseError(f"{key}: non-finite value")
    return vals


def dumps_policy(policy: PolicyParams) -> str:
    st = policy.normalizer
    lines = [
        f"format: {POLICY_FORMAT}",
        f"version: {POLICY_VERSION}",
        f"env: {policy.env_name}",
        f"n: {policy.state_dim}",
        f"p: {policy.action_dim}",
        f"theta: {_fmt(policy.theta)}",
        f"norm.count: {st.count}",
        f"norm.version: {st.version}",
        f"norm.mean: {_fmt(st.mean)}",
        f"norm.m2: {_fmt(st.m2)}",
    ]
    for k in sorted(policy.metadata):
        value = str(policy.metadata[k]).replace("\n", " ")
        lines.append(f"meta.{k}: {value}")
    lines.append("end")
    return "\n".join(lines) + "\n"


def loads_policy(text: str, env=None) -> PolicyParams:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[-1] != "end":
        raise ParseError("policy file is truncated (missing 'end' line)")
    fields, meta = {}, {}
    for lineno, line in enumerate(lines[:-1], 1):
        key, sep, value = line.partition(": ")
        if not sep:
            raise ParseError(f"line {lineno}: expected 'key: value'")
        if key.startswith("meta."):
            meta[key[5:]] = value
        else:
            fields[key] = value
    required = ["format", "version", "env", "n", "p", "theta",
                "norm.count", "norm.version", "norm.mean", "norm.m2"]
    missing = [k for k in required if k not in fields]
    if missing:
        raise ParseError(f"policy file missing keys: {', '.join(missing)}")
    if fields["format"] != POLICY_FORMAT:
        raise ParseError(f"not a policy file (format {fields['format']!r})")
    if fields["version"] != str(POLICY_VERSION):
        raise VersionError(f"policy file version {fields['version']!r}, supported: {POLICY_VERSION}")
    try:
        n, p = int(fields["n"]), int(fields["p"])
        count, version = int(fields["norm.count"]), int(fields["norm.version"])
    except ValueError as exc:
        raise ParseError(str(exc)) from None
    if n < 1 or p < 1 or count < 0:
        raise ParseError("invalid dimensions or count")
    theta = _floats(fields["theta"], p * n, "theta").reshape(p, n)
    mean = _floats(fields["norm.mean"], n, "norm.mean")
    m2 = _floats(fields["norm.m2"], n, "norm.m2")
    if np.any(m2 < 0):
        raise ParseError("norm.m2 must be non-negative")
    policy = PolicyParams(theta, RunningStats(count, mean, m2, version), fields["env"], meta)
    if env is not None:
        policy.check_env(env)
        if fields["env"] and fields["env"] != env.name:
            raise DimensionError(f"policy was trained on env {fields['env']!r}, not {env.name!r}")
    return policy


def save_policy(policy: PolicyParams, path) -> None:
    Path(path).write_text(dumps_policy(policy))


def load_policy(path, env=None) -> PolicyParams:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"policy file not found: {path}")
    return loads_policy(path.read_text(), env)
