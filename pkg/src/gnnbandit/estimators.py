"""Closed-form bias, variance and optimal-policy quantities for one aggregation site.

All functions take a :class:`NeighborSnapshot`: the weighted embeddings
``z_i = a_vi h_i`` of a root's ``K`` neighbors (rows of a ``K x d``
matrix) together with a sampling policy over them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SnapshotError(ValueError):
    pass


@dataclass(frozen=True)
class NeighborSnapshot:
    weighted_embeddings: np.ndarray
    policy: np.ndarray

    def __post_init__(self):
        z = np.atleast_2d(np.asarray(self.weighted_embeddings, dtype=np.float64))
        p = np.asarray(self.policy, dtype=np.float64).ravel()
        if z.shape[0] != p.shape[0]:
            raise SnapshotError(f"{z.shape[0]} embeddings but {p.shape[0]} policy entries")
        if np.any(p < 0):
            raise SnapshotError("policy entries must be >= 0")
        object.__setattr__(self, "weighted_embeddings", z)
        object.__setattr__(self, "policy", p)

    @property
    def arm_count(self) -> int:
        return self.weighted_embeddings.shape[0]

    @property
    def total(self) -> np.ndarray:
        """``mu = sum_i z_i``."""
        return self.weighted_embeddings.sum(axis=0)

    @property
    def mean(self) -> np.ndarray:
        """``z_bar = mu / K``."""
        return self.total / self.arm_count

    def with_policy(self, policy) -> "NeighborSnapshot":
        return NeighborSnapshot(self.weighted_embeddings, policy)


def _norms(snap: NeighborSnapshot) -> np.ndarray:
    return np.linalg.norm(snap.weighted_embeddings, axis=1)


def optimal_policy(snap: NeighborSnapshot) -> np.ndarray:
    """Variance-minimizing policy ``p*_i = ||z_i|| / sum_j ||z_j||``."""
    norms = _norms(snap)
    s = norms.sum()
    if s == 0:
        raise SnapshotError("optimal policy undefined when every embedding is zero")
    return norms / s


def effective_variance(snap: NeighborSnapshot) -> float:
    """``V_e = sum_i ||z_i||^2 / p_i``; zero-norm neighbors contribute 0."""
    sq = _norms(snap) ** 2
    live = sq > 0
    if np.any(snap.policy[live] == 0):
        raise SnapshotError("p_i = 0 for a neighbor with nonzero embedding")
    return float(np.sum(sq[live] / snap.policy[live]))


def constant_variance(snap: NeighborSnapshot) -> float:
    """``V_c = ||sum_j z_j||^2``; does not depend on the policy."""
    mu = snap.total
    return float(mu @ mu)


def min_variance(snap: NeighborSnapshot) -> float:
    """Lowest single-draw variance any policy can reach.

    ``sum_i sum_j ||z_i|| ||z_j|| (1 - cos(z_i, z_j))``
    """
    z = snap.weighted_embeddings
    norms = _norms(snap)
    if np.any(norms == 0):
        raise SnapshotError("cosine undefined for a zero embedding")
    gram = z @ z.T
    outer = np.outer(norms, norms)
    return float(np.sum(outer - gram))


def unbiased_variance(snap: NeighborSnapshot) -> float:
    """``E_p || z_i / p_i - mu ||^2`` evaluated by enumerating the K outcomes."""
    z, p = snap.weighted_embeddings, snap.policy
    if np.any(p <= 0):
        raise SnapshotError("policy must be strictly positive")
    dev = z / p[:, None] - snap.total
    return float(np.sum(p * np.einsum("ij,ij->i", dev, dev)))


def biased_estimate(snap: NeighborSnapshot, sampled, k: int) -> np.ndarray:
    """``(K / k) * sum_{i in sampled} z_i``; ``sampled`` may repeat indices."""
    idx = np.asarray(sampled, dtype=np.int64).ravel()
    if len(idx) == 0 or k < 1:
        raise SnapshotError("biased estimate needs at least one sampled neighbor")
    if len(idx) != k:
        raise SnapshotError(f"expected {k} sampled indices, got {len(idx)}")
    return snap.arm_count / k * snap.weighted_embeddings[idx].sum(axis=0)


def bias_and_variance_k1(snap: NeighborSnapshot) -> tuple[float, float]:
    """Bias and variance of the single-draw biased estimator ``K z_I``, ``I ~ p``.

    Returns ``(K^2 ||sum p_i z_i - z_bar||^2, K^2 E_p ||z_I - sum p_j z_j||^2)``.
    """
    z, p = snap.weighted_embeddings, snap.policy
    K = snap.arm_count
    drift = p @ z
    gap = drift - snap.mean
    dev = z - drift
    bias = K**2 * float(gap @ gap)
    var = K**2 * float(np.sum(p * np.einsum("ij,ij->i", dev, dev)))
    return bias, var


def biased_mse_k1(snap: NeighborSnapshot) -> float:
    """``E_p ||K z_I - mu||^2`` by enumerating the K outcomes."""
    z, p = snap.weighted_embeddings, snap.policy
    err = snap.arm_count * z - snap.total
    return float(np.sum(p * np.einsum("ij,ij->i", err, err)))
