"""Neighbor samplers as training-loop plug-ins.

Four kinds are supported:

``uniform``
    ``k`` neighbors without replacement, or every neighbor when the
    degree is at most ``k``. The policy never changes.
``banditsampler``
    ``k`` Exp3 draws with replacement, reward ``||z|| / p^2``.
``thanos``
    ``k`` Exp3 draws with replacement, reward ``ReLU(2 z.m - ||z||^2)``.
``thanos_m``
    Exp3.M probabilities rounded to a distinct ``k``-set by DepRound,
    same reward as ``thanos``.

Each root node owns one policy row over its own neighbor list, shared by
every layer in which it appears.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bandits import (BanditError, PolicyTable, apply_rewards, draw_exp3, draw_exp3m)
from .rewards import banditsampler_rewards, practical_rewards

SAMPLER_KINDS = ("uniform", "banditsampler", "thanos", "thanos_m")
ESTIMATORS = ("biased", "unbiased")


@dataclass(frozen=True)
class SamplerKind:
    """Sampler configuration.

    ``delta_t`` is the restart period (0 disables restarts).
    ``estimator`` defaults to ``biased`` for the thanos variants and to
    ``unbiased`` otherwise.
    """

    kind: str = "thanos"
    k: int = 2
    eta: float = 0.1
    gamma: float = 0.1
    delta_t: int = 0
    estimator: Optional[str] = None
    reward_clip: Optional[float] = None

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise ValueError(f"unknown sampler {self.kind!r}; choose from {SAMPLER_KINDS}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.eta > 0:
            raise ValueError("eta must be > 0")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.delta_t < 0:
            raise ValueError("delta_t must be >= 0")
        if self.estimator is None:
            default = "biased" if self.kind in ("thanos", "thanos_m") else "unbiased"
            object.__setattr__(self, "estimator", default)
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")

    @property
    def uses_rexp3(self) -> bool:
        return self.delta_t > 0

    @property
    def with_replacement(self) -> bool:
        return self.kind in ("banditsampler", "thanos")

    def policy_table(self, node_count: int, seed: int) -> PolicyTable:
        return PolicyTable(node_count, plays=self.k, eta=self.eta, gamma=self.gamma,
                           epoch_len=self.delta_t or None, seed=seed)


@dataclass(frozen=True)
class SiteSample:
    """Sampled neighbors of one root at one level.

    ``arms`` are positions in the root's neighbor list, in draw order
    (repeats possible when ``replacement``). ``probabilities[j]`` is the
    single-draw probability of ``arms[j]`` when drawing with replacement
    and its inclusion probability otherwise.
    """

    arms: np.ndarray
    probabilities: np.ndarray
    policy: np.ndarray
    estimator: str
    replacement: bool
    capped: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def degree(self) -> int:
        return len(self.policy)

    def coefficients(self, g, v: int) -> tuple[np.ndarray, np.ndarray]:
        """Neighbor ids and the aggregation coefficient of each draw."""
        if len(self.arms) == 0:
            raise BanditError(f"empty sample at node {v}")
        if self.estimator == "unbiased" and np.any(self.probabilities <= 0):
            raise BanditError(f"zero sampling probability for a drawn neighbor of node {v}")
        ids = g.neighbors(v)[self.arms]
        a = g.weights(v)[self.arms]
        k = len(self.arms)
        if self.estimator == "biased":
            return ids, a * (self.degree / k)
        if self.replacement:
            return ids, a / (k * self.probabilities)
        return ids, a / self.probabilities


@dataclass
class SamplingPlan:
    """Per-site samples for one batch; ``frontiers[l]`` is ``V_l`` (roots last)."""

    sites: dict
    frontiers: list
    sampler: SamplerKind
    graph: object = None

    @property
    def depth(self) -> int:
        return len(self.frontiers) - 1

    @property
    def reward_level(self) -> int:
        """Level whose sites aggregate layer-1 embeddings (features for depth 1)."""
        return min(2, self.depth)

    def sampled_ids(self, level: int | None = None) -> np.ndarray:
        """Concatenated sampled node ids (with repeats), optionally for one level."""
        out = []
        for (v, lv), site in self.sites.items():
            if level is None or lv == level:
                out.append(self.graph.neighbors(v)[site.arms])
        return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def _draw_site(sampler: SamplerKind, g, policies: PolicyTable, v: int) -> SiteSample:
    K = g.degree(v)
    if K == 0:
        raise BanditError(f"node {v} has no neighbors to sample")
    rng = policies.rng(v)
    if sampler.kind == "uniform":
        if K <= sampler.k:
            arms = np.arange(K)
            probs = np.ones(K)
            policy = np.ones(K)
        else:
            arms = np.sort(rng.choice(K, size=sampler.k, replace=False))
            probs = np.full(sampler.k, sampler.k / K)
            policy = np.full(K, sampler.k / K)
        return SiteSample(arms, probs, policy, sampler.estimator, replacement=False)
    st = policies.row(v, K)
    if sampler.kind == "thanos_m":
        out = draw_exp3m(st, rng)
        return SiteSample(out.sampled, out.probabilities[out.sampled], out.probabilities,
                          sampler.estimator, replacement=False, capped=out.capped)
    out = draw_exp3(st, rng)
    return SiteSample(out.sampled, out.probabilities[out.sampled], out.probabilities,
                      sampler.estimator, replacement=True)


def build_plan(sampler: SamplerKind, g, policies: PolicyTable, roots, depth: int) -> SamplingPlan:
    """Sample every aggregation site top-down from the batch ``roots``.

    Frontiers are visited in ascending node order so a fixed seed gives a
    fixed plan.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    roots = np.unique(np.asarray(roots, dtype=np.int64))
    if len(roots) == 0:
        raise ValueError("empty batch")
    frontiers = [roots]
    sites = {}
    for level in range(depth, 0, -1):
        below = []
        for v in frontiers[0]:
            v = int(v)
            site = _draw_site(sampler, g, policies, v)
            sites[(v, level)] = site
            below.append(g.neighbors(v)[site.arms])
        frontiers.insert(0, np.unique(np.concatenate(below)))
    return SamplingPlan(sites, frontiers, sampler, g)


def site_rewards(sampler: SamplerKind, g, v: int, site: SiteSample, embeddings: np.ndarray):
    """Rewards of the distinct sampled arms of one site.

    ``embeddings`` holds one row per draw in ``site.arms`` (unweighted
    embeddings of the sampled neighbors). Returns ``(arms, rewards, probs)``.
    """
    arms, first, counts = np.unique(site.arms, return_index=True, return_counts=True)
    z = g.weights(v)[arms][:, None] * embeddings[first]
    probs = site.probabilities[first]
    if sampler.kind == "banditsampler":
        r = banditsampler_rewards(z, probs)
    else:
        r = practical_rewards(z, counts)
    if sampler.reward_clip is not None:
        r = np.minimum(r, sampler.reward_clip)
    return arms, r, probs


def feedback(sampler: SamplerKind, policies: PolicyTable, plan: SamplingPlan, trace,
             global_step: int, reward_log: list | None = None) -> PolicyTable:
    """Update policy rows from the layer-1 embeddings in ``trace``.

    Only sites at :attr:`SamplingPlan.reward_level` are rewarded. After the
    update, rows are reset if step ``global_step + 1`` starts a new restart
    epoch. ``reward_log`` collects every reward computed, if given.
    """
    if sampler.kind == "uniform":
        return policies
    g = plan.graph
    level = plan.reward_level
    layer = level - 1
    for (v, lv), site in plan.sites.items():
        if lv != level:
            continue
        ids = g.neighbors(v)[site.arms]
        try:
            h = trace.embedding_of(layer, ids)
        except KeyError as exc:
            raise KeyError(f"trace lacks layer-{layer} embeddings for neighbors of {v}") from exc
        arms, r, probs = site_rewards(sampler, g, v, site, h)
        if reward_log is not None:
            reward_log.extend(r.tolist())
        st = policies.row(v, site.degree)
        skip = site.capped if sampler.kind == "thanos_m" else None
        policies.rows[v] = apply_rewards(st, arms, r, probs, skip)
    policies.maybe_restart(global_step + 1)
    return policies


def collect_rewards(plan: SamplingPlan, trace, kinds=("banditsampler", "thanos"), into=None) -> dict:
    """Rewards of every kind in ``kinds`` for the same draws of a plan's reward sites.

    Useful to compare reward distributions without changing the sampler
    that drives training. Appends to ``into`` (``kind -> list``) if given.
    """
    into = {} if into is None else into
    g = plan.graph
    level = plan.reward_level
    evaluators = {kind: SamplerKind(kind, k=plan.sampler.k) for kind in kinds}
    for (v, lv), site in plan.sites.items():
        if lv != level:
            continue
        h = trace.embedding_of(level - 1, g.neighbors(v)[site.arms])
        for kind, sk in evaluators.items():
            into.setdefault(kind, []).extend(site_rewards(sk, g, v, site, h)[1].tolist())
    return into
