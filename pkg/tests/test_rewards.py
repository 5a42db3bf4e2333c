from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gnnbandit.rewards import (RewardConfig, banditsampler_rewards, embedding_bound,
                               practical_rewards, reward_banditsampler, reward_bound,
                               reward_thanos_exact, reward_thanos_practical, reward_weighted)

vec = arrays(np.float64, 3, elements=st.floats(-50, 50, allow_nan=False))


def test_banditsampler_reward_examples():
    assert reward_banditsampler([1.0, 0.0], 1.0) == 1.0
    assert reward_banditsampler([0.6, 0.8], 0.1) == pytest.approx(100.0)
    assert reward_banditsampler([0.0, 0.0], 0.3) == 0.0
    with pytest.raises(ValueError):
        reward_banditsampler([1.0], 0.0)


def test_exact_reward_examples():
    zb = np.array([1.0, -2.0])
    assert reward_thanos_exact(zb, zb) == zb @ zb
    assert reward_thanos_exact([0.0, 0.0], zb) == 0.0
    assert reward_thanos_exact(2 * zb, zb) == 0.0
    assert reward_thanos_exact([2.0, 1.0], zb) == -5.0
    with pytest.raises(ValueError):
        reward_thanos_exact([1.0], zb)


def test_practical_reward_examples():
    m = np.array([0.5, 1.5])
    assert reward_thanos_practical(m, [m, m]) == pytest.approx(m @ m)
    assert reward_thanos_practical([1.0, 0.0], [[0.0, 1.0], [0.0, 1.0]]) == 0.0
    assert reward_thanos_practical([1.0, 0.0], [[1.0, 0.0], [1.0, 2.0]]) == 1.0
    with pytest.raises(ValueError):
        reward_thanos_practical([1.0, 0.0], np.zeros((0, 2)))


def test_reward_bound_examples():
    unit = SimpleNamespace(max_degree=5, max_edge_weight=1.0, max_param_norm_seen=1.0,
                           feature_aggregate_norm=1.0)
    assert reward_bound(unit, layer=1) == 3.0
    two = SimpleNamespace(max_degree=3, max_edge_weight=1.0, max_param_norm_seen=2.0,
                          feature_aggregate_norm=1.0)
    assert embedding_bound(3, 1.0, 2.0, 1.0, layer=2) == 12.0
    assert reward_bound(two, layer=2) == 432.0
    with pytest.raises(ValueError):
        reward_bound(two, layer=0)


def test_reward_config_validation():
    assert RewardConfig().kind == "thanos_practical"
    with pytest.raises(ValueError):
        RewardConfig(kind="other")
    with pytest.raises(ValueError):
        RewardConfig(reward_clip=0.0)


@settings(max_examples=300, deadline=None)
@given(vec, vec)
def test_exact_reward_identity(z, zb):
    diff = z - zb
    assert reward_thanos_exact(z, zb) == pytest.approx(zb @ zb - diff @ diff, abs=1e-12 * (1 + z @ z + zb @ zb))
    assert reward_thanos_exact(z, zb) <= zb @ zb + 1e-9 * (1 + zb @ zb)


@settings(max_examples=200, deadline=None)
@given(vec, arrays(np.float64, (3, 3), elements=st.floats(-50, 50, allow_nan=False)))
def test_practical_reward_is_clamped_exact_reward(z, sample):
    r = reward_thanos_practical(z, sample)
    assert r >= 0
    scale = 1 + z @ z + float(np.sum(sample**2))
    assert r == pytest.approx(max(0.0, reward_thanos_exact(z, sample.mean(axis=0))), abs=1e-12 * scale)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (3, 2), elements=st.floats(-10, 10, allow_nan=False)),
       arrays(np.int64, 3, elements=st.integers(1, 4)))
def test_vectorized_practical_rewards_match_scalar(zs, counts):
    multiset = np.repeat(zs, counts, axis=0)
    expected = [reward_thanos_practical(z, multiset) for z in zs]
    assert np.allclose(practical_rewards(zs, counts), expected, rtol=1e-12, atol=1e-9)


def test_vectorized_banditsampler_rewards():
    z = np.array([[3.0, 4.0], [0.0, 1.0]])
    assert banditsampler_rewards(z, np.array([0.5, 1.0])).tolist() == [20.0, 1.0]


@settings(max_examples=100, deadline=None)
@given(vec, vec, vec)
def test_weighted_reward_reduces_to_exact_at_unit_weight(z, zb, pm):
    scale = 1 + z @ z + zb @ zb + pm @ pm
    assert reward_weighted(z, zb, pm, 1.0) == pytest.approx(reward_thanos_exact(z, zb), abs=1e-9 * scale)
