import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gnnbandit.estimators import (NeighborSnapshot, SnapshotError, bias_and_variance_k1,
                                  biased_estimate, biased_mse_k1, constant_variance,
                                  effective_variance, min_variance, optimal_policy,
                                  unbiased_variance)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@st.composite
def snapshots(draw, max_k=6, max_dim=4):
    K = draw(st.integers(1, max_k))
    d = draw(st.integers(1, max_dim))
    z = draw(arrays(np.float64, (K, d), elements=finite))
    raw = draw(arrays(np.float64, K, elements=st.floats(0.01, 1.0)))
    return NeighborSnapshot(z, raw / raw.sum())


def snap(z, p=None):
    z = np.asarray(z, dtype=float)
    return NeighborSnapshot(z, np.full(len(z), 1 / len(z)) if p is None else p)


def test_optimal_policy_examples():
    assert optimal_policy(snap([[1, 0], [0, 1]])).tolist() == [0.5, 0.5]
    assert optimal_policy(snap([[3, 0], [0, 1]])).tolist() == [0.75, 0.25]
    with pytest.raises(SnapshotError):
        optimal_policy(snap([[0, 0], [0, 0]]))


def test_effective_variance_examples():
    assert effective_variance(snap([[1, 0], [0, 1]])) == 4.0
    assert effective_variance(snap([[2.0]], [1.0])) == 4.0
    # zero-norm neighbors contribute nothing, even at p = 0
    assert effective_variance(snap([[1.0], [0.0]], [1.0, 0.0])) == 1.0
    with pytest.raises(SnapshotError):
        effective_variance(snap([[1.0], [1.0]], [1.0, 0.0]))


def test_effective_variance_minimized_at_optimal_policy_on_a_grid():
    s = snap([[1, 0], [0, 1]])
    ve_star = effective_variance(s.with_policy(optimal_policy(s)))
    assert ve_star == 4.0
    for q in np.arange(0.01, 1.0, 0.01):
        assert effective_variance(s.with_policy([q, 1 - q])) >= 4.0 - 1e-12


def test_constant_variance_examples():
    assert constant_variance(snap([[1, 0], [-1, 0]])) == 0.0
    assert constant_variance(snap([[1, 0], [0, 1]])) == 2.0
    s = snap([[1, 2], [3, -1]])
    assert constant_variance(snap(3 * s.weighted_embeddings)) == pytest.approx(9 * constant_variance(s))


def test_min_variance_examples():
    assert min_variance(snap([[1, 2], [1, 2], [1, 2]])) == pytest.approx(0, abs=1e-12)
    assert min_variance(snap([[1, 0], [0, 1]])) == pytest.approx(2.0)
    assert min_variance(snap([[1, 1], [2, 2], [0.5, 0.5]])) == pytest.approx(0, abs=1e-12)
    with pytest.raises(SnapshotError):
        min_variance(snap([[1, 0], [0, 0]]))


def test_biased_estimate_examples():
    z = [[1, 0], [0, 1], [1, 1]]
    s = snap(z)
    assert biased_estimate(s, [0, 1, 2], 3).tolist() == s.total.tolist()
    assert biased_estimate(snap([[2, 5], [2, 5]]), [1], 1).tolist() == [4.0, 10.0]
    assert biased_estimate(s, [0, 2], 2).tolist() == [3.0, 1.5]
    with pytest.raises(SnapshotError):
        biased_estimate(s, [], 1)


def test_bias_variance_examples():
    assert bias_and_variance_k1(snap([[1, 0], [0, 3], [2, 2]]))[0] == pytest.approx(0, abs=1e-12)
    assert bias_and_variance_k1(snap([[1, 1]] * 3, [0.7, 0.2, 0.1]))[1] == pytest.approx(0, abs=1e-12)
    s = snap([[1, 0], [0, 1]], [1.0, 0.0])
    bias, var = bias_and_variance_k1(s)
    assert (bias, var) == (pytest.approx(2.0), pytest.approx(0.0))
    # both outcomes of 2 z_I against mu = [1, 1]
    brute = 1.0 * np.sum((2 * np.array([1, 0]) - [1, 1]) ** 2) + 0.0
    assert bias + var == pytest.approx(brute)


def test_snapshot_validation():
    with pytest.raises(SnapshotError):
        NeighborSnapshot(np.zeros((2, 1)), [1.0])
    with pytest.raises(SnapshotError):
        NeighborSnapshot(np.zeros((2, 1)), [1.5, -0.5])


@settings(max_examples=200, deadline=None)
@given(snapshots())
def test_bias_plus_variance_equals_enumerated_mse(s):
    bias, var = bias_and_variance_k1(s)
    K, z, mu = s.arm_count, s.weighted_embeddings, s.total
    brute = sum(s.policy[i] * float(np.sum((K * z[i] - mu) ** 2)) for i in range(K))
    assert bias + var == pytest.approx(brute, rel=1e-9, abs=1e-9)
    assert biased_mse_k1(s) == pytest.approx(brute, rel=1e-9, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(snapshots())
def test_unbiased_variance_decomposition(s):
    assert unbiased_variance(s) == pytest.approx(effective_variance(s) - constant_variance(s),
                                                 rel=1e-9, abs=1e-7)


@settings(max_examples=100, deadline=None)
@given(snapshots(), arrays(np.float64, 6, elements=st.floats(0.01, 1.0)))
def test_constant_variance_ignores_policy(s, raw):
    other = raw[:s.arm_count] / raw[:s.arm_count].sum()
    assert constant_variance(s.with_policy(other)) == constant_variance(s)


@settings(max_examples=100, deadline=None)
@given(snapshots(max_k=4))
def test_min_variance_matches_optimal_effective_variance(s):
    if np.any(np.linalg.norm(s.weighted_embeddings, axis=1) < 1e-3):
        return
    star = s.with_policy(optimal_policy(s))
    lhs = effective_variance(star) - constant_variance(s)
    assert min_variance(s) == pytest.approx(lhs, rel=1e-9, abs=1e-8)


def test_optimal_policy_beats_coarse_simplex_grid():
    rng = np.random.default_rng(11)
    for _ in range(20):
        K = int(rng.integers(2, 5))
        s = snap(rng.standard_normal((K, 3)))
        best = effective_variance(s.with_policy(optimal_policy(s)))
        for cut in itertools.product(range(1, 20), repeat=K - 1):
            if sum(cut) >= 20:
                continue
            p = np.array(list(cut) + [20 - sum(cut)]) / 20
            assert effective_variance(s.with_policy(p)) >= best - 1e-9


def test_unbiased_estimator_mean_by_enumeration():
    rng = np.random.default_rng(2)
    z = rng.standard_normal((4, 2))
    p = np.array([0.1, 0.2, 0.3, 0.4])
    mean = sum(p[i] * z[i] / p[i] for i in range(4))
    assert np.allclose(mean, z.sum(axis=0), rtol=1e-12)
