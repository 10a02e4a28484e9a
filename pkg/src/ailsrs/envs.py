"""Desk-scale continuous-control environments.

Every environment has a fixed horizon with no early termination, clamps
actions to its bounds before the dynamics, and pays a non-positive reward
(a negated cost). Initial states come from the caller's stream.

Batched methods (``reset_batch``/``transition``) operate on arrays of shape
(batch, dim); per-row results never depend on the batch size.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .core import RngStream, batch_matvec, rowsum
from .errors import InvalidArgument, NumericalFailure, ProtocolViolation

CONSTANTS_VERSION = 1


def load_constants() -> dict:
    text = resources.files("ailsrs").joinpath("data/env_constants.json").read_text()
    consts = json.loads(text)
    if consts.get("version") != CONSTANTS_VERSION:
        raise InvalidArgument(f"unsupported env constants version {consts.get('version')}")
    return consts


@dataclass(frozen=True)
class EnvState:
    s: np.ndarray
    step_index: int = 0
    done: bool = False


class Env:
    name: str
    state_dim: int
    action_dim: int
    horizon: int
    action_low: np.ndarray
    action_high: np.ndarray
    zero_reward: bool = False

    def _init(self, name, state_dim, action_dim, horizon, low, high):
        if state_dim < 1 or action_dim < 1 or horizon < 1:
            raise InvalidArgument("env dimensions and horizon must be >= 1")
        low = np.broadcast_to(np.asarray(low, dtype=float), (action_dim,)).copy()
        high = np.broadcast_to(np.asarray(high, dtype=float), (action_dim,)).copy()
        if not np.all(low < high):
            raise InvalidArgument("action bounds need lo < hi in every dimension")
        low.flags.writeable = False
        high.flags.writeable = False
        self.name = name
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.horizon = horizon
        self.action_low = low
        self.action_high = high

    @property
    def action_bounds(self):
        return list(zip(self.action_low.tolist(), self.action_high.tolist()))

    def clamp(self, a: np.ndarray) -> np.ndarray:
        return np.minimum(np.maximum(a, self.action_low), self.action_high)

    def initial_state(self, stream: RngStream) -> np.ndarray:
        raise NotImplementedError

    def dynamics(self, s: np.ndarray, a: np.ndarray):
        """Batched next state and reward for already-clamped actions."""
        raise NotImplementedError

    def reset_batch(self, streams) -> np.ndarray:
        return np.stack([self.initial_state(st) for st in streams])

    def transition(self, s: np.ndarray, a: np.ndarray):
        a = self.clamp(a)
        s_next, r = self.dynamics(s, a)
        if self.zero_reward:
            r = np.zeros_like(r)
        return s_next, a, r

    def reset(self, stream: RngStream) -> EnvState:
        return EnvState(self.initial_state(stream), 0, False)

    def step(self, state: EnvState, a):
        if state.done:
            raise ProtocolViolation(f"{self.name}: step() called on a finished episode")
        a = np.asarray(a, dtype=float)
        if a.shape != (self.action_dim,):
            raise InvalidArgument(f"{self.name}: action must have length {self.action_dim}, got {a.shape}")
        s_next, _, r = self.transition(state.s[None, :], a[None, :])
        k = state.step_index + 1
        return EnvState(s_next[0], k, k >= self.horizon), float(r[0])

    def with_zero_reward(self) -> "Env":
        """Copy of this env whose reward channel is identically zero."""
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone.zero_reward = True
        return clone

    def describe(self) -> dict:
        return {"name": self.name, "state_dim": self.state_dim, "action_dim": self.action_dim,
                "horizon": self.horizon, "action_bounds": self.action_bounds}

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r}, n={self.state_dim}, p={self.action_dim}, T={self.horizon})"


def reset(env: Env, stream: RngStream) -> EnvState:
    return env.reset(stream)


def step(env: Env, state: EnvState, a):
    return env.step(state, a)


class LQR(Env):
    """Linear dynamics s' = A s + B a with reward -(s'Qs + a'Ra)."""

    def __init__(self, A, B, Q, R, horizon=100, action_bound=10.0,
                 init_low=-1.0, init_high=1.0, name="lqr"):
        A, B, Q, R = (np.array(m, dtype=float, ndmin=2) for m in (A, B, Q, R))
        n, p = B.shape
        if A.shape != (n, n) or Q.shape != (n, n) or R.shape != (p, p):
            raise InvalidArgument("inconsistent LQR matrix dimensions")
        for m in (A, B, Q, R):
            m.flags.writeable = False
        self.A, self.B, self.Q, self.R = A, B, Q, R
        self.init_low = float(init_low)
        self.init_high = float(init_high)
        self._init(name, n, p, int(horizon), -action_bound, action_bound)

    def initial_state(self, stream):
        return stream.uniform(self.init_low, self.init_high, self.state_dim)

    def dynamics(self, s, a):
        r = -(rowsum(s * batch_matvec(self.Q, s)) + rowsum(a * batch_matvec(self.R, a)))
        s_next = batch_matvec(self.A, s) + batch_matvec(self.B, a)
        return s_next, r


class DoubleIntegrator(Env):
    """Planar point mass (x, y, vx, vy) driven by accelerations, Euler step."""

    def __init__(self, dt=0.1, horizon=200, action_bound=1.0, init_position_bound=2.0,
                 position_weight=1.0, velocity_weight=0.1, action_weight=0.01,
                 name="double-integrator"):
        self.dt = float(dt)
        self.init_position_bound = float(init_position_bound)
        self.weights = (float(position_weight), float(velocity_weight), float(action_weight))
        self._init(name, 4, 2, int(horizon), -action_bound, action_bound)

    def initial_state(self, stream):
        b = self.init_position_bound
        return np.concatenate([stream.uniform(-b, b, 2), np.zeros(2)])

    def dynamics(self, s, a):
        wp, wv, wa = self.weights
        pos, vel = s[:, 0:2], s[:, 2:4]
        r = -(wp * rowsum(pos * pos) + wv * rowsum(vel * vel) + wa * rowsum(a * a))
        s_next = np.concatenate([pos + self.dt * vel, vel + self.dt * a], axis=1)
        return s_next, r


def wrap_angle(theta):
    return (theta + np.pi) % (2 * np.pi) - np.pi


class Pendulum(Env):
    """Torque-driven pendulum, angle 0 upright; state (cos th, sin th, th_dot)."""

    def __init__(self, g=10.0, l=1.0, m=1.0, dt=0.05, max_speed=8.0, horizon=200,
                 action_bound=2.0, init_speed_bound=1.0, angle_weight=1.0,
                 speed_weight=0.1, action_weight=0.001, name="pendulum"):
        self.g, self.l, self.m = float(g), float(l), float(m)
        self.dt = float(dt)
        self.max_speed = float(max_speed)
        self.init_speed_bound = float(init_speed_bound)
        self.weights = (float(angle_weight), float(speed_weight), float(action_weight))
        self._init(name, 3, 1, int(horizon), -action_bound, action_bound)

    def initial_state(self, stream):
        th = stream.uniform(-np.pi, np.pi)
        thdot = stream.uniform(-self.init_speed_bound, self.init_speed_bound)
        return np.array([np.cos(th), np.sin(th), thdot])

    def dynamics(self, s, a):
        wth, wv, wu = self.weights
        th = np.arctan2(s[:, 1], s[:, 0])
        thdot = s[:, 2]
        u = a[:, 0]
        r = -(wth * wrap_angle(th) ** 2 + wv * thdot ** 2 + wu * u ** 2)
        acc = (self.g / self.l) * np.sin(th) + u / (self.m * self.l ** 2)
        thdot_next = np.clip(thdot + acc * self.dt, -self.max_speed, self.max_speed)
        th_next = th + thdot_next * self.dt
        s_next = np.stack([np.cos(th_next), np.sin(th_next), thdot_next], axis=1)
        return s_next, r


def default_lqr(horizon=None) -> LQR:
    c = load_constants()["lqr"]
    return LQR(c["A"], c["B"], c["Q"], c["R"], horizon=horizon or c["horizon"],
               action_bound=c["action_bound"], init_low=c["init_low"], init_high=c["init_high"])


def default_double_integrator(horizon=None) -> DoubleIntegrator:
    c = dict(load_constants()["double_integrator"])
    c["horizon"] = horizon or c["horizon"]
    return DoubleIntegrator(**c)


def default_pendulum(horizon=None) -> Pendulum:
    c = dict(load_constants()["pendulum"])
    c["horizon"] = horizon or c["horizon"]
    return Pendulum(**c)


ENV_BUILDERS = {
    "lqr": default_lqr,
    "double-integrator": default_double_integrator,
    "pendulum": default_pendulum,
}


def available_envs():
    return sorted(ENV_BUILDERS)


def make_env(name: str, horizon: int | None = None) -> Env:
    try:
        builder = ENV_BUILDERS[name]
    except KeyError:
        raise InvalidArgument(f"unknown env {name!r}; available: {', '.join(available_envs())}") from None
    return builder(horizon)


def riccati_gain(A, B, Q, R, tol=1e-10, max_iter=100_000):
    """Iterate the discrete algebraic Riccati recursion to its fixed point.

    Returns (K, P) with the optimal feedback a = -K s.
    """
    A, B, Q, R = (np.array(m, dtype=float, ndmin=2) for m in (A, B, Q, R))
    P = Q.copy()
    for it in range(1, max_iter + 1):
        BtP = B.T @ P
        K = np.linalg.solve(R + BtP @ B, BtP @ A)
        P_next = Q + A.T @ P @ A - A.T @ P @ B @ K
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.isfinite(P_next)):
            raise NumericalFailure(f"Riccati recursion diverged after {it} iterations")
        if np.max(np.abs(P_next - P)) < tol:
            P = P_next
            BtP = B.T @ P
            return np.linalg.solve(R + BtP @ B, BtP @ A), P
        P = P_next
    raise NumericalFailure(f"Riccati recursion did not converge within {max_iter} iterations")


def lqr_optimal_policy(env: LQR, n_rollouts=10_000, seed=0):
    """Optimal stationary gain and its expected episode cost (positive).

    The cost is a Monte-Carlo average over ``n_rollouts`` episodes of
    a = -K s (clamped) from the env's initial distribution.
    """
    if not isinstance(env, LQR):
        raise InvalidArgument("lqr_optimal_policy needs an LQR environment")
    K, _ = riccati_gain(env.A, env.B, env.Q, env.R)
    streams = [RngStream.derive(seed, "lqr-oracle", k) for k in range(n_rollouts)]
    s = env.reset_batch(streams)
    total = np.zeros(n_rollouts)
    for _ in range(env.horizon):
        s, _, r = env.transition(s, -batch_matvec(K, s))
        total = total + r
    return K, float(-total.mean())
