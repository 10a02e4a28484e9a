import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ailsrs.core import RngStream
from ailsrs.errors import InvalidArgument, NumericalFailure
from ailsrs.rollout import ReturnPair
from ailsrs.search import (ArsConfig, ars_update, brs_update, reset_streams, sample_directions,
                           train_expert)
from conftest import desk_expert


def _pairs(rp, rm):
    return [ReturnPair(float(a), float(b), i) for i, (a, b) in enumerate(zip(rp, rm))]


def test_config_validation():
    for bad in (dict(alpha=0), dict(nu=-1), dict(n_directions=0), dict(variant="v3"),
                dict(reset_sharing="never"), dict(eval_episodes=0)):
        with pytest.raises(InvalidArgument):
            ArsConfig(**bad)


def test_sample_directions_shape_and_determinism():
    cfg = ArsConfig(n_directions=320)
    a = sample_directions(RngStream.derive(0, "directions", 1), cfg, 2, 4)
    b = sample_directions(RngStream.derive(0, "directions", 1), cfg, 2, 4)
    assert a.shape == (320, 2, 4) and np.array_equal(a, b)
    assert abs(a.mean()) < 0.05


def test_brs_hand_example():
    cfg = ArsConfig(alpha=0.5, n_directions=1)
    theta = brs_update(np.zeros((1, 1)), _pairs([2.0], [0.0]), np.ones((1, 1, 1)), cfg)
    assert np.array_equal(theta, [[1.0]])


def test_brs_linear_in_alpha():
    g = np.random.default_rng(0)
    deltas, rp, rm = g.standard_normal((5, 2, 3)), g.standard_normal(5), g.standard_normal(5)
    th = g.standard_normal((2, 3))
    s1 = brs_update(th, _pairs(rp, rm), deltas, ArsConfig(alpha=0.1, n_directions=5)) - th
    s2 = brs_update(th, _pairs(rp, rm), deltas, ArsConfig(alpha=0.2, n_directions=5)) - th
    assert np.allclose(s2, 2 * s1, rtol=1e-13)


def test_ars_hand_example():
    cfg = ArsConfig(alpha=0.5, n_directions=1)
    theta, rep = ars_update(np.zeros((1, 1)), _pairs([2.0], [0.0]), np.ones((1, 1, 1)), cfg)
    assert rep.sigma_r == 1.0 and np.array_equal(theta, [[1.0]])
    assert not rep.degenerate and rep.update_norm == 1.0


def test_ars_matches_resummation_oracle():
    g = np.random.default_rng(1)
    for _ in range(20):
        N = int(g.integers(1, 12))
        deltas, rp, rm = g.standard_normal((N, 2, 3)), g.standard_normal(N) * 5, g.standard_normal(N) * 5
        th = g.standard_normal((2, 3))
        cfg = ArsConfig(alpha=0.02, n_directions=N)
        new, rep = ars_update(th, _pairs(rp, rm), deltas, cfg)
        sigma = np.sqrt(np.mean((np.r_[rp, rm] - np.r_[rp, rm].mean()) ** 2))
        ref = th.copy()
        for i in range(N):
            ref += 0.02 * (rp[i] - rm[i]) / (N * sigma) * deltas[i]
        assert np.allclose(new, ref, rtol=1e-12, atol=1e-14)
        assert rep.sigma_r == pytest.approx(sigma, rel=1e-12)


def test_pair_order_is_by_direction_index():
    g = np.random.default_rng(2)
    deltas, rp, rm = g.standard_normal((6, 1, 2)), g.standard_normal(6), g.standard_normal(6)
    pairs = _pairs(rp, rm)
    cfg = ArsConfig(n_directions=6)
    a, _ = ars_update(np.zeros((1, 2)), pairs, deltas, cfg)
    b, _ = ars_update(np.zeros((1, 2)), pairs[::-1], deltas, cfg)
    assert np.array_equal(a, b)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=10))
def test_antithetic_zero_leaves_theta_unchanged(returns):
    n = len(returns)
    deltas = np.random.default_rng(n).standard_normal((n, 2, 2))
    th = np.arange(4.0).reshape(2, 2)
    cfg = ArsConfig(n_directions=n)
    assert np.array_equal(brs_update(th, _pairs(returns, returns), deltas, cfg), th)
    new, _ = ars_update(th, _pairs(returns, returns), deltas, cfg)
    assert np.array_equal(new, th)


def test_degenerate_sigma_skips_update():
    th = np.ones((1, 2))
    new, rep = ars_update(th, _pairs([3.0, 3.0], [3.0, 3.0]), np.ones((2, 1, 2)), ArsConfig(n_directions=2))
    assert rep.degenerate and rep.sigma_r == 0.0 and np.array_equal(new, th)


def test_length_mismatch_and_nonfinite():
    cfg = ArsConfig(n_directions=2)
    with pytest.raises(InvalidArgument):
        ars_update(np.zeros((1, 1)), _pairs([1.0], [0.0]), np.ones((2, 1, 1)), cfg)
    with pytest.raises(InvalidArgument):
        brs_update(np.zeros((1, 1)), _pairs([1.0], [0.0]), np.ones((2, 1, 1)), cfg)
    with pytest.raises(NumericalFailure):
        ars_update(np.zeros((1, 1)), _pairs([np.inf], [0.0]), np.ones((1, 1, 1)), cfg)


def test_reset_sharing_modes():
    same = reset_streams(0, 3, 4, "iteration")
    assert len({s.stream_id for s in same}) == 1
    per_pair = reset_streams(0, 3, 4, "pair")
    ids = [s.stream_id for s in per_pair]
    assert ids[0] == ids[1] and len(set(ids)) == 4


def test_zero_iterations_returns_zero_policy(lqr):
    pol, rows = train_expert(lqr, ArsConfig(n_directions=4), 0, 0)
    assert np.array_equal(pol.theta, np.zeros((2, 4))) and len(rows) == 1
    assert rows[0].iteration == 0


def test_brs_does_not_update_normalizer(tiny_lqr):
    pol, rows = train_expert(tiny_lqr, ArsConfig(n_directions=4, variant="brs"), 0, 3)
    assert pol.normalizer.count == 0 and len(rows) == 4


def test_ars_normalizer_counts_visited_states(tiny_lqr):
    pol, _ = train_expert(tiny_lqr, ArsConfig(n_directions=4), 0, 3)
    assert pol.normalizer.count == 3 * 2 * 4 * tiny_lqr.horizon


def test_training_workers_invariant(tiny_lqr):
    cfg = ArsConfig(n_directions=6, eval_episodes=3)
    a = train_expert(tiny_lqr, cfg, 4, 5, workers=1)
    b = train_expert(tiny_lqr, cfg, 4, 5, workers=3)
    assert np.array_equal(a[0].theta, b[0].theta)
    assert [r.csv_line() for r in a[1]] == [r.csv_line() for r in b[1]]


def test_lqr_cost_improves_over_training():
    for seed in (0, 1, 2):
        _, rows = desk_expert("lqr", seed)
        costs = [-r.eval_env_return for r in rows]
        assert np.median(costs[400:501]) < np.median(costs[0:101])
