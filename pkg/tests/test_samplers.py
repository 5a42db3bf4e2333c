import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gnnbandit.bandits import BanditError, PolicyTable, exp3_policy
from gnnbandit.estimators import NeighborSnapshot, bias_and_variance_k1
from gnnbandit.gcn import ForwardTrace, forward_full, forward_sampled, init_state
from gnnbandit.graph import SparseGraph, load_edge_list
from gnnbandit.samplers import (SAMPLER_KINDS, SamplerKind, SiteSample, build_plan,
                                collect_rewards, feedback, site_rewards)


def star(K, features=None):
    feats = features if features is not None else np.random.default_rng(K).standard_normal((K + 1, 2))
    return load_edge_list([(0, i) for i in range(1, K + 1)], K + 1, weighting="uniform", features=feats)


def fake_trace(frontier, h0):
    """Depth-1 trace whose layer-0 rows (the rewarded inputs) are ``h0``."""
    frontier = np.asarray(frontier)
    return ForwardTrace([frontier, np.array([0])], [], [], [],
                        [h0, np.zeros((1, h0.shape[1]))], "relu")


def test_kind_defaults_and_validation():
    assert SamplerKind("thanos").estimator == "biased"
    assert SamplerKind("thanos_m").estimator == "biased"
    assert SamplerKind("banditsampler").estimator == "unbiased"
    assert SamplerKind("uniform", estimator="biased").estimator == "biased"
    assert SamplerKind("thanos", delta_t=5).uses_rexp3 and not SamplerKind("thanos").uses_rexp3
    for bad in (dict(kind="gat"), dict(k=0), dict(eta=0.0), dict(gamma=0.0), dict(delta_t=-1),
                dict(estimator="plain")):
        with pytest.raises(ValueError):
            SamplerKind(**bad)


def test_uniform_saturates_small_degree():
    g = star(3)
    sk = SamplerKind("uniform", k=5)
    plan = build_plan(sk, g, sk.policy_table(4, 0), [0], 1)
    site = plan.sites[(0, 1)]
    assert site.arms.tolist() == [0, 1, 2] and site.probabilities.tolist() == [1.0, 1.0, 1.0]


def test_thanos_m_symmetric_start():
    g = star(5)
    sk = SamplerKind("thanos_m", k=2, gamma=0.2)
    plan = build_plan(sk, g, sk.policy_table(6, 3), [0], 1)
    site = plan.sites[(0, 1)]
    assert np.allclose(site.policy, 0.4, rtol=0, atol=1e-15)
    assert len(np.unique(site.arms)) == 2


def test_two_layer_plan_on_path_counts_frontiers():
    g = load_edge_list([(i, i + 1) for i in range(9)], 10, weighting="uniform", self_loops=True,
                       features=np.zeros((10, 1)))
    for kind in SAMPLER_KINDS:
        sk = SamplerKind(kind, k=2)
        plan = build_plan(sk, g, sk.policy_table(10, 1), [5], 2)
        assert len(plan.frontiers[1]) <= 2
        assert len(plan.frontiers[0]) <= 4


def test_zero_degree_root_rejected():
    g = SparseGraph(2, np.array([0, 1, 1]), np.array([0]), np.ones(1), np.zeros((2, 1)))
    sk = SamplerKind("thanos", k=1)
    with pytest.raises(BanditError):
        build_plan(sk, g, sk.policy_table(2, 0), [1], 1)


def test_uniform_feedback_is_a_no_op():
    g = star(4)
    sk = SamplerKind("uniform", k=2)
    pol = sk.policy_table(5, 0)
    plan = build_plan(sk, g, pol, [0], 1)
    trace = fake_trace(np.arange(5), np.ones((5, 2)))
    feedback(sk, pol, plan, trace, 1)
    assert len(pol) == 0


def test_identical_embeddings_give_equal_rewards_and_keep_ratios():
    g = star(4, np.tile([1.0, 2.0], (5, 1)))
    sk = SamplerKind("thanos", k=3, eta=0.5)
    pol = sk.policy_table(5, 0)
    plan = build_plan(sk, g, pol, [0], 1)
    site = plan.sites[(0, 1)]
    trace = fake_trace(np.arange(5), g.features)
    arms, r, _ = site_rewards(sk, g, 0, site, g.features[g.neighbors(0)[site.arms]])
    assert np.allclose(r, 5.0)
    feedback(sk, pol, plan, trace, 1)
    w = pol.rows[0].weights
    # every drawn arm got exp(eta r / p) with the same r and p
    assert np.allclose(w[arms] / w[arms][0], 1.0)


def test_orthogonal_neighbor_gets_zero_reward():
    feats = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 3.0]])
    g = star(2, feats)
    site = SiteSample(np.array([0, 1, 1]), np.full(3, 0.5), np.array([0.5, 0.5]), "biased", True)
    sk = SamplerKind("thanos", k=3)
    arms, r, _ = site_rewards(sk, g, 0, site, feats[[1, 2, 2]])
    # mean is [1/3, 2]: arm 0 is orthogonal-ish with 2/3 - 1 < 0
    assert arms.tolist() == [0, 1] and r[0] == 0.0
    pol = PolicyTable(3, plays=3, eta=1.0)
    pol.row(0, 2)
    from gnnbandit.samplers import SamplingPlan
    plan = SamplingPlan({(0, 1): site}, [np.array([1, 2]), np.array([0])], sk, g)
    feedback(sk, pol, plan, fake_trace(np.array([1, 2]), feats[[1, 2]]), 1)
    assert pol.rows[0].weights[0] == 1.0 and pol.rows[0].weights[1] > 1.0


def test_feedback_rejects_missing_embeddings():
    g = star(3)
    sk = SamplerKind("thanos", k=2)
    pol = sk.policy_table(4, 0)
    plan = build_plan(sk, g, pol, [0], 1)
    with pytest.raises(KeyError):
        feedback(sk, pol, plan, fake_trace(np.array([0]), np.ones((1, 2))), 1)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(SAMPLER_KINDS), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_plan_probabilities_are_valid_distributions(kind, k, seed):
    rng = np.random.default_rng(seed)
    n = 15
    edges = [(i, (i + 1) % n) for i in range(n)] + [tuple(e) for e in rng.integers(0, n, (20, 2))]
    g = load_edge_list(edges, n, self_loops=True, features=rng.standard_normal((n, 3)))
    sk = SamplerKind(kind, k=k, eta=0.5, gamma=0.3, delta_t=3)
    pol = sk.policy_table(n, seed)
    state = init_state([3, 4, 2], rng)
    for step in range(1, 5):
        roots = np.sort(rng.choice(n, 5, replace=False))
        plan = build_plan(sk, g, pol, roots, 2)
        for (v, _), site in plan.sites.items():
            assert np.all(np.isin(g.neighbors(v)[site.arms], g.neighbors(v)))
            target = 1.0 if sk.with_replacement else min(k, site.degree)
            if kind != "uniform" or site.degree > k:
                assert abs(site.policy.sum() - target) <= 1e-9
            assert np.all(site.probabilities > 0)
        trace = forward_sampled(g, state, roots, plan)
        feedback(sk, pol, plan, trace, step)
        assert len(pol) <= n


def test_uniform_unbiased_estimator_mean():
    K, k = 6, 2
    g = star(K)
    sk = SamplerKind("uniform", k=k, estimator="unbiased")
    pol = sk.policy_table(K + 1, 5)
    state = init_state([2, 2], np.random.default_rng(0))
    state.layer_weights[0] = np.eye(2)
    exact = forward_full(g, state, [0]).aggregates[0][0]
    draws = np.array([forward_sampled(g, state, [0], build_plan(sk, g, pol, [0], 1)).aggregates[0][0]
                      for _ in range(10_000)])
    se = draws.std(axis=0, ddof=1) / np.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - exact) <= 3 * se)


def test_thanos_initial_policy_has_zero_bias():
    g = star(5)
    sk = SamplerKind("thanos", k=1, gamma=0.1)
    pol = sk.policy_table(6, 0)
    plan = build_plan(sk, g, pol, [0], 1)
    p = exp3_policy(pol.rows[0])
    assert np.array_equal(p, plan.sites[(0, 1)].policy)
    bias, _ = bias_and_variance_k1(NeighborSnapshot(g.features[1:], p))
    assert bias == pytest.approx(0.0, abs=1e-24)


def test_collect_rewards_compares_kinds_on_same_draws():
    g = star(4)
    sk = SamplerKind("thanos", k=2)
    pol = sk.policy_table(5, 0)
    state = init_state([2, 3, 2], np.random.default_rng(1))
    plan = build_plan(sk, g, pol, [0], 1)
    tr = forward_sampled(g, GcnState1(state), [0], plan)
    out = collect_rewards(plan, tr)
    assert set(out) == {"banditsampler", "thanos"}
    assert len(out["banditsampler"]) == len(out["thanos"]) == len(np.unique(plan.sites[(0, 1)].arms))


def GcnState1(state):
    """Depth-1 view of ``state`` so the roots aggregate raw features."""
    from gnnbandit.gcn import GcnState
    return GcnState([state.layer_weights[0]])


def test_sampled_ids_counts_repeats():
    g = star(3)
    sk = SamplerKind("banditsampler", k=4)
    plan = build_plan(sk, g, sk.policy_table(4, 0), [0], 1)
    assert len(plan.sampled_ids()) == 3 and len(plan.sampled_ids(level=2)) == 0
    big = star(6)
    plan = build_plan(sk, big, sk.policy_table(7, 0), [0], 1)
    ids = plan.sampled_ids(level=1)
    assert len(ids) == 4 and np.all(np.isin(ids, big.neighbors(0)))
