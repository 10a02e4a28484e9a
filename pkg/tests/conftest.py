import time

import numpy as np
import pytest

from ailsrs.core import RngStream
from ailsrs.dataset import record_expert
from ailsrs.envs import LQR, make_env
from ailsrs.policy import PolicyParams
from ailsrs.search import ArsConfig, train_expert

DESK = ArsConfig(alpha=0.02, n_directions=32, nu=0.03, eval_episodes=100)


@pytest.fixture
def lqr():
    return make_env("lqr")


@pytest.fixture
def di():
    return make_env("double-integrator")


@pytest.fixture
def pendulum():
    return make_env("pendulum")


@pytest.fixture
def tiny_lqr():
    """2-state, 1-action stable LQR with a short horizon."""
    A = np.array([[0.9, 0.1], [0.0, 0.95]])
    B = np.array([[0.0], [0.1]])
    return LQR(A, B, np.eye(2), 0.1 * np.eye(1), horizon=20, name="tiny-lqr")


def random_policy(env, seed=0, scale=0.1):
    g = RngStream.derive(seed, "test-policy").generator
    return PolicyParams(scale * g.standard_normal((env.action_dim, env.state_dim)),
                        PolicyParams.zeros(env.action_dim, env.state_dim).normalizer, env.name)


@pytest.fixture
def small_dataset(tiny_lqr):
    return record_expert(tiny_lqr, random_policy(tiny_lqr, 3, 0.5), 4, seed=11)


_EXPERTS = {}
EXPERT_SECONDS = {}


def desk_expert(name, seed=0, iterations=500):
    """ARS expert trained once per session with the desk configuration."""
    key = (name, seed, iterations)
    if key not in _EXPERTS:
        start = time.perf_counter()
        _EXPERTS[key] = train_expert(make_env(name), DESK, seed, iterations)
        EXPERT_SECONDS[key] = time.perf_counter() - start
    return _EXPERTS[key]


ACCEPTANCE = []


def report(criterion, ok, detail):
    """Record and print one acceptance line."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
