"""Per-neighbor rewards fed to the samplers and the matching bound constants."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

REWARD_KINDS = ("banditsampler", "thanos_exact", "thanos_practical")


@dataclass(frozen=True)
class RewardConfig:
    kind: str = "thanos_practical"
    reward_clip: Optional[float] = None
    # Relative weight of the variance gradient against the bias gradient.
    # Only 1.0 reproduces the published reward.
    variance_weight: float = 1.0

    def __post_init__(self):
        if self.kind not in REWARD_KINDS:
            raise ValueError(f"unknown reward kind {self.kind!r}")
        if self.reward_clip is not None and not self.reward_clip > 0:
            raise ValueError("reward_clip must be > 0")


def reward_banditsampler(z_i, p_i: float) -> float:
    """``||z_i|| / p_i^2``: negative gradient of the effective variance."""
    if not p_i > 0:
        raise ValueError(f"probability must be > 0, got {p_i}")
    return float(np.linalg.norm(z_i)) / (p_i * p_i)


def reward_thanos_exact(z_i, z_bar) -> float:
    """``2 z_i . z_bar - ||z_i||^2``, maximal (``= ||z_bar||^2``) at ``z_i = z_bar``."""
    z_i = np.asarray(z_i, dtype=np.float64)
    z_bar = np.asarray(z_bar, dtype=np.float64)
    if z_i.shape != z_bar.shape:
        raise ValueError(f"dimension mismatch {z_i.shape} vs {z_bar.shape}")
    return float(2.0 * (z_i @ z_bar) - z_i @ z_i)


def reward_weighted(z_i, z_bar, policy_mean, variance_weight: float = 1.0) -> float:
    """Negative policy gradient of ``bias + variance_weight * variance`` (over ``K^2``).

    ``policy_mean`` is ``sum_j p_j z_j``. The bias gradient contributes
    ``2 z_i . (z_bar - policy_mean)`` and the variance gradient
    ``2 z_i . policy_mean - ||z_i||^2``; at ``variance_weight=1`` the
    policy terms cancel and this equals :func:`reward_thanos_exact`.
    """
    z_i, z_bar, pm = (np.asarray(a, dtype=np.float64) for a in (z_i, z_bar, policy_mean))
    bias_part = 2.0 * (z_i @ (z_bar - pm))
    var_part = 2.0 * (z_i @ pm) - z_i @ z_i
    return float(bias_part + variance_weight * var_part)


def reward_thanos_practical(z_i, sampled_zs, k: int | None = None) -> float:
    """``ReLU(2 z_i . m - ||z_i||^2)`` with ``m`` the mean of the sampled embeddings."""
    zs = np.atleast_2d(np.asarray(sampled_zs, dtype=np.float64))
    if zs.shape[0] == 0 or zs.size == 0:
        raise ValueError("practical reward needs at least one sampled embedding")
    if k is None:
        k = zs.shape[0]
    if k != zs.shape[0]:
        raise ValueError(f"k={k} but {zs.shape[0]} sampled embeddings")
    m = zs.sum(axis=0) / k
    return max(0.0, reward_thanos_exact(z_i, m))


def practical_rewards(z_sampled: np.ndarray, counts: np.ndarray | None = None) -> np.ndarray:
    """Vectorized practical reward for every distinct sampled arm of one site.

    ``z_sampled`` holds one row per distinct arm; ``counts`` the number of
    draws that hit it (the sample mean is taken over the draw multiset).
    """
    if counts is None:
        counts = np.ones(len(z_sampled))
    m = (counts @ z_sampled) / counts.sum()
    r = 2.0 * (z_sampled @ m) - np.einsum("ij,ij->i", z_sampled, z_sampled)
    return np.maximum(r, 0.0)


def banditsampler_rewards(z_sampled: np.ndarray, probs: np.ndarray) -> np.ndarray:
    if np.any(probs <= 0):
        raise ValueError("probabilities must be > 0")
    return np.linalg.norm(z_sampled, axis=1) / probs**2


def embedding_bound(max_degree: int, max_edge_weight: float, param_norm: float,
                    feature_aggregate_norm: float, layer: int, lipschitz: float = 1.0) -> float:
    """``C_z = G^(l-1) A C_sigma C_theta C_x`` with ``G = C_sigma C_theta D A``."""
    if layer < 1:
        raise ValueError("layer must be >= 1")
    G = lipschitz * param_norm * max_degree * max_edge_weight
    return G ** (layer - 1) * max_edge_weight * lipschitz * param_norm * feature_aggregate_norm


def reward_bound(constants, layer: int = 1, lipschitz: float = 1.0) -> float:
    """``C_r = 3 C_z^2`` from monitored constants.

    ``constants`` needs ``max_degree``, ``max_edge_weight``,
    ``max_param_norm_seen`` and ``feature_aggregate_norm`` attributes (an
    :class:`~gnnbandit.gcn.AssumptionMonitor` has all four).
    """
    cz = embedding_bound(constants.max_degree, constants.max_edge_weight,
                         constants.max_param_norm_seen, constants.feature_aggregate_norm,
                         layer, lipschitz)
    return 3.0 * cz * cz
