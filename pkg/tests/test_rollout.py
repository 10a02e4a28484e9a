import numpy as np

from ailsrs.core import RngStream
from ailsrs.discriminator import disc_reward, init_discriminator
from ailsrs.envs import reset, step
from ailsrs.policy import PolicyParams, act
from ailsrs.rollout import Trajectory, env_return, rollout_batch, run_episode, surrogate_return
from conftest import random_policy


def test_episode_has_horizon_length(lqr):
    traj, states = run_episode(lqr, random_policy(lqr), RngStream.derive(0, "reset", 0), collect_stats=True)
    assert traj.episode_length == lqr.horizon
    assert traj.states.shape == (100, 4) and traj.actions.shape == (100, 2)
    assert states.shape == (100, 4)


def test_batched_rollout_matches_stepwise(tiny_lqr):
    pol = random_policy(tiny_lqr, 2, 1.0)
    stream = RngStream.derive(5, "reset", 1)
    traj, _ = run_episode(tiny_lqr, pol, stream)
    st = reset(tiny_lqr, RngStream.derive(5, "reset", 1))
    total = 0.0
    for k in range(tiny_lqr.horizon):
        assert np.allclose(st.s, traj.states[k], rtol=1e-14, atol=1e-15)
        st, r = step(tiny_lqr, st, act(pol, st.s))
        total += r
    assert np.isclose(total, env_return(traj), rtol=1e-13)


def test_actions_recorded_after_clamp(di):
    pol = PolicyParams(np.full((2, 4), 100.0), PolicyParams.zeros(2, 4).normalizer, di.name)
    traj, _ = run_episode(di, pol, RngStream.derive(0, "reset", 0))
    assert np.all(np.abs(traj.actions) <= 1.0)


def test_worker_count_does_not_change_bits(lqr):
    g = np.random.default_rng(0)
    thetas = 0.3 * g.standard_normal((10, 2, 4))
    streams = lambda: [RngStream.derive(1, "reset", 0, i) for i in range(10)]  # noqa: E731
    pol = random_policy(lqr)
    one = rollout_batch(lqr, thetas, pol.normalizer, streams(), workers=1)
    many = rollout_batch(lqr, thetas, pol.normalizer, streams(), workers=4)
    for a, b in zip(one, many):
        assert np.array_equal(a, b)


def test_batch_rows_equal_single_rollouts(lqr):
    g = np.random.default_rng(3)
    thetas = g.standard_normal((3, 2, 4))
    pol = random_policy(lqr)
    _, _, r_all = rollout_batch(lqr, thetas, pol.normalizer, [RngStream.derive(0, "r", i) for i in range(3)])
    for i in range(3):
        _, _, r_one = rollout_batch(lqr, thetas[i], pol.normalizer, [RngStream.derive(0, "r", i)])
        assert np.array_equal(r_one[0], r_all[i])


def test_surrogate_return_sums_disc_rewards(tiny_lqr):
    traj, _ = run_episode(tiny_lqr, random_policy(tiny_lqr), RngStream.derive(0, "reset", 0))
    disc = init_discriminator(2, 1, RngStream.derive(0, "d"))
    expected = sum(disc_reward(disc, s, a) for s, a in zip(traj.states, traj.actions))
    assert np.isclose(surrogate_return(traj, disc), expected, rtol=1e-12)
    assert surrogate_return(Trajectory.empty(2, 1), disc) == 0.0
