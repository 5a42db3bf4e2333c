"""Adversarial bandit machinery: Exp3, Exp3.M, DepRound and periodic restarts."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

POLICY_MAGIC = b"BPT1"
OVERFLOW_CEILING = 1e100
# Fractional entries closer than this to 0 or 1 count as integral in DepRound.
_ROUND_EPS = 1e-12


class BanditError(ValueError):
    pass


@dataclass
class ArmState:
    """Exponential weights for one root node's neighbor arms.

    ``plays`` is the number of neighbors drawn per round (``k``). In Exp3
    mode they are drawn independently with replacement, in Exp3.M mode
    as a distinct set via :func:`depround`.
    """

    weights: np.ndarray
    plays: int = 1
    eta: float = 0.1
    gamma: float = 0.1
    epoch_len: Optional[int] = None
    steps_since_reset: int = 0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.plays < 1:
            raise BanditError("plays must be >= 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise BanditError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.eta < 0:
            raise BanditError("eta must be >= 0")

    @classmethod
    def uniform(cls, arm_count: int, **kw) -> "ArmState":
        return cls(np.ones(arm_count), **kw)

    @property
    def arm_count(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class DrawOutcome:
    """Arms drawn in one round and the policy they were drawn from.

    ``sampled`` is the draw multiset in draw order (distinct for Exp3.M).
    ``capped`` lists arms frozen by the Exp3.M weight cap this round.
    """

    sampled: np.ndarray
    probabilities: np.ndarray
    capped: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def distinct(self) -> np.ndarray:
        return np.unique(self.sampled)


@dataclass(frozen=True)
class RewardRecord:
    arm: int
    reward: float
    probability: float


def _check_finite(w: np.ndarray) -> None:
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise BanditError("weights must be positive and finite")


def exp3_policy(state: ArmState) -> np.ndarray:
    """``p_i = (1 - gamma) w_i / sum(w) + gamma / K``."""
    w = state.weights
    _check_finite(w)
    K = len(w)
    return (1.0 - state.gamma) * (w / w.sum()) + state.gamma / K


def _cap_level(w: np.ndarray, c: float) -> float | None:
    """Solve ``a = c * sum_i min(w_i, a)`` for the cap level ``a``.

    Scans the number ``m`` of capped arms in descending-weight order
    (ties broken by lower index) and falls back to bisection.
    """
    order = np.lexsort((np.arange(len(w)), -w))
    ws = w[order]
    tail = np.cumsum(ws[::-1])[::-1]  # tail[m] = sum of ws[m:]
    for m in range(1, len(w)):
        if m * c >= 1.0:
            break
        a = c * tail[m] / (1.0 - m * c)
        if ws[m - 1] >= a and ws[m] < a:
            return a
    lo, hi = 0.0, float(ws[0])
    f = lambda a: a - c * np.minimum(w, a).sum()
    if f(hi) <= 0:
        return None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
    return hi


def exp3m_probabilities(w: np.ndarray, k: int, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Exp3.M policy for a raw weight vector; see :func:`exp3m_policy`."""
    K = len(w)
    if k > K:
        raise BanditError(f"plays={k} exceeds arm count {K}")
    if k == K:
        return np.ones(K), np.arange(K)
    c = (1.0 / k - gamma / K) / (1.0 - gamma)
    capped = np.zeros(0, dtype=np.int64)
    w_eff = w
    if w.max() >= c * w.sum():
        a = _cap_level(w, c)
        # None: the trigger fired on a rounding tie and max(w) <= c * sum(w)
        # holds exactly, so the uncapped policy already stays within 1
        if a is not None:
            mask = w >= a
            capped = np.flatnonzero(mask)
            w_eff = np.where(mask, a, w)
    p = k * ((1.0 - gamma) * w_eff / w_eff.sum() + gamma / K)
    if len(capped) == 0:
        np.minimum(p, 1.0, out=p)
    p[capped] = 1.0
    return p, capped


def exp3m_policy(state: ArmState) -> tuple[np.ndarray, np.ndarray]:
    """Multiple-play policy summing to ``k`` with every entry in ``(0, 1]``.

    Arms whose weight would push their probability above 1 are capped to
    a common level; those arms get probability exactly 1 and are returned
    as the capped set (they skip the next weight update).
    """
    _check_finite(state.weights)
    return exp3m_probabilities(state.weights, state.plays, state.gamma)


def depround(k: int, p: Sequence[float], rng: np.random.Generator) -> np.ndarray:
    """Draw exactly ``k`` distinct indices with inclusion probabilities ``p``.

    Pairs of fractional entries exchange mass until every entry is 0 or 1;
    each exchange keeps the expected value of both entries unchanged.
    """
    q = [float(x) for x in p]
    total = math.fsum(q)
    if abs(total - k) > 1e-9:
        raise BanditError(f"probabilities sum to {total}, expected {k}")
    if any(x < -_ROUND_EPS or x > 1 + _ROUND_EPS for x in q):
        raise BanditError("probabilities must lie in [0, 1]")
    i = None
    for j, pj in enumerate(q):
        if not _ROUND_EPS < pj < 1 - _ROUND_EPS:
            continue
        if i is None:
            i = j
            continue
        pi = q[i]
        beta = min(1.0 - pi, pj)
        zeta = min(pi, 1.0 - pj)
        if rng.random() * (beta + zeta) < zeta:
            pi, pj = pi + beta, pj - beta
        else:
            pi, pj = pi - zeta, pj + zeta
        q[i], q[j] = pi, pj
        # at least one of the pair is now integral; carry the other forward
        if _ROUND_EPS < pi < 1 - _ROUND_EPS:
            continue
        i = j if _ROUND_EPS < pj < 1 - _ROUND_EPS else None
    # float drift can leave one residual near-integral entry; round it
    chosen = [idx for idx, x in enumerate(q) if x > 0.5]
    if len(chosen) != k:
        raise BanditError(f"internal error: rounded to {len(chosen)} arms, expected {k}")
    return np.asarray(chosen, dtype=np.int64)


def depround_batch(k: int, p: Sequence[float], rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` independent :func:`depround` draws at once, as an ``n x k`` array of sorted indices.

    Row ``r`` uses ``u[r, m]`` for its ``m``-th exchange, where
    ``u = rng.random((n, K))``; feeding the same uniforms one at a time to
    :func:`depround` reproduces the row exactly.
    """
    q0 = np.asarray(p, dtype=np.float64)
    K = len(q0)
    if abs(math.fsum(q0.tolist()) - k) > 1e-9:
        raise BanditError(f"probabilities sum to {q0.sum()}, expected {k}")
    if np.any(q0 < -_ROUND_EPS) or np.any(q0 > 1 + _ROUND_EPS):
        raise BanditError("probabilities must lie in [0, 1]")
    q = np.tile(q0, (n, 1))
    u = rng.random((n, K))
    carry = np.full(n, -1)
    used = np.zeros(n, dtype=np.int64)

    def frac(x):
        return (x > _ROUND_EPS) & (x < 1 - _ROUND_EPS)

    for j in range(K):
        live = frac(q[:, j])
        start = live & (carry < 0)
        rows = np.flatnonzero(live & (carry >= 0))
        carry[start] = j
        if len(rows) == 0:
            continue
        i = carry[rows]
        pi, pj = q[rows, i], q[rows, j]
        beta = np.minimum(1.0 - pi, pj)
        zeta = np.minimum(pi, 1.0 - pj)
        up = u[rows, used[rows]] * (beta + zeta) < zeta
        used[rows] += 1
        pi, pj = np.where(up, pi + beta, pi - zeta), np.where(up, pj - beta, pj + zeta)
        q[rows, i], q[rows, j] = pi, pj
        carry[rows] = np.where(frac(pi), i, np.where(frac(pj), j, -1))
    chosen = q > 0.5
    if np.any(chosen.sum(axis=1) != k):
        raise BanditError(f"internal error: a draw did not round to {k} arms")
    return np.sort(np.argsort(~chosen, axis=1, kind="stable")[:, :k], axis=1)


def draw_exp3(state: ArmState, rng: np.random.Generator) -> DrawOutcome:
    """Draw ``k`` arms independently from the Exp3 policy (repeats allowed)."""
    p = exp3_policy(state)
    sampled = rng.choice(len(p), size=state.plays, replace=True, p=p)
    return DrawOutcome(np.asarray(sampled, dtype=np.int64), p)


def draw_exp3m(state: ArmState, rng: np.random.Generator) -> DrawOutcome:
    p, capped = exp3m_policy(state)
    return DrawOutcome(depround(state.plays, p, rng), p, capped)


def apply_rewards(state: ArmState, arms: np.ndarray, rewards: np.ndarray,
                  probs: np.ndarray, skip: np.ndarray | None = None) -> ArmState:
    """Vectorized importance-weighted update; ``arms`` must be distinct."""
    w = state.weights.copy()
    gain = state.eta * np.asarray(rewards, dtype=np.float64) / np.asarray(probs, dtype=np.float64)
    if skip is not None and len(skip):
        gain = np.where(np.isin(arms, skip), 0.0, gain)
    if not np.all(np.isfinite(gain)):
        raise BanditError("non-finite reward estimate")
    if len(gain) and (gain.max() > 700.0 or np.max(gain + np.log(w[arms])) > 700.0):
        logw = np.log(w)
        logw[arms] += gain
        w = np.exp(logw - logw.max())
    else:
        w[arms] *= np.exp(gain)
        top = w.max()
        if top > OVERFLOW_CEILING:
            w /= top
    w = np.maximum(w, np.finfo(np.float64).tiny)
    return replace(state, weights=w)


def update_weights(state: ArmState, outcome: DrawOutcome,
                   rewards: Iterable[RewardRecord], mode: str = "exp3") -> ArmState:
    """Multiply each sampled arm's weight by ``exp(eta * r / p)``.

    Unsampled arms keep their weight. In ``exp3m`` mode arms in the capped
    set are not updated. A sampled arm appearing in several records (Exp3
    repeats) is rewarded once.
    """
    if mode not in ("exp3", "exp3m"):
        raise BanditError(f"unknown mode {mode!r}")
    drawn = set(outcome.sampled.tolist())
    seen: dict[int, RewardRecord] = {}
    for rec in rewards:
        if rec.arm not in drawn:
            raise BanditError(f"reward for arm {rec.arm}, which was not sampled")
        seen.setdefault(rec.arm, rec)
    if not seen:
        return replace(state, weights=state.weights.copy())
    arms = np.fromiter(seen.keys(), dtype=np.int64)
    r = np.array([rec.reward for rec in seen.values()])
    p = np.array([rec.probability for rec in seen.values()])
    skip = outcome.capped if mode == "exp3m" else None
    return apply_rewards(state, arms, r, p, skip)


def maybe_restart(state: ArmState, global_step: int) -> ArmState:
    """Reset all weights to 1 when ``global_step`` is a multiple of ``epoch_len``."""
    if state.epoch_len is None:
        return state
    if state.epoch_len < 1:
        raise BanditError("epoch_len must be >= 1")
    if global_step % state.epoch_len == 0:
        return replace(state, weights=np.ones(state.arm_count), steps_since_reset=0)
    return state


def horizon_tuned_hyperparams(reward_cap: float, K: int, k: int, T: int,
                         c_v_bar: float) -> tuple[float, float, int]:
    """Learning rate, exploration rate and restart period tuned for horizon ``T``.

    Returns ``(eta, gamma, delta_T)`` with

    * ``eta = sqrt(2 k ln(K/k) / (C_r (e^C_r - 1) K T))``
    * ``gamma = min(1, sqrt((e^C_r - 1) K ln(K/k) / (2 k^2 C_r T)))``
    * ``delta_T = ceil((C_v ln T)^(-2/3) (K ln K)^(1/3) T^(2/3))``
    """
    if not (T >= K >= 2 and k >= 1 and reward_cap > 0 and c_v_bar > 0):
        raise BanditError("need T >= K >= 2, k >= 1, reward_cap > 0 and c_v_bar > 0")
    if k > K:
        raise BanditError("k must not exceed K")
    if reward_cap > 700:
        raise BanditError("exp(reward_cap) overflows; rescale rewards below ~700")
    em1 = math.expm1(reward_cap)
    log_ratio = math.log(K / k)
    eta = math.sqrt(2 * k * log_ratio / (reward_cap * em1 * K * T))
    gamma = min(1.0, math.sqrt(em1 * K * log_ratio / (2 * k * k * reward_cap * T)))
    delta = (c_v_bar * math.log(T)) ** (-2.0 / 3.0) * (K * math.log(K)) ** (1.0 / 3.0) * T ** (2.0 / 3.0)
    return eta, gamma, max(1, math.ceil(delta - 1e-9))


# -- per-node policy table ----------------------------------------------------

@dataclass
class PolicyTable:
    """Lazily materialized :class:`ArmState` rows, one per root node.

    Each node also owns an RNG stream derived from ``(seed, node_id)``.
    """

    node_count: int
    plays: int = 1
    eta: float = 0.1
    gamma: float = 0.1
    epoch_len: Optional[int] = None
    seed: int = 0
    rows: dict = field(default_factory=dict)
    _rngs: dict = field(default_factory=dict, repr=False)

    def row(self, v: int, arm_count: int) -> ArmState:
        st = self.rows.get(v)
        if st is None:
            st = ArmState.uniform(arm_count, plays=min(self.plays, arm_count), eta=self.eta,
                                  gamma=self.gamma, epoch_len=self.epoch_len)
            self.rows[v] = st
        return st

    def rng(self, v: int) -> np.random.Generator:
        g = self._rngs.get(v)
        if g is None:
            ss = np.random.SeedSequence(self.seed, spawn_key=(int(v),))
            g = np.random.Generator(np.random.Philox(ss))
            self._rngs[v] = g
        return g

    def maybe_restart(self, global_step: int) -> bool:
        """Reset every materialized row at multiples of ``epoch_len``."""
        if not self.epoch_len:
            return False
        restart = global_step % self.epoch_len == 0
        for v, st in self.rows.items():
            st = maybe_restart(st, global_step)
            st.steps_since_reset = global_step % self.epoch_len
            self.rows[v] = st
        return restart

    def __len__(self) -> int:
        return len(self.rows)

    def dumps(self) -> bytes:
        """``BPT1`` snapshot: node count, then per node arm count, weights, steps."""
        buf = [POLICY_MAGIC, struct.pack("<Q", self.node_count)]
        for v in range(self.node_count):
            st = self.rows.get(v)
            if st is None:
                buf.append(struct.pack("<Q", 0))
                buf.append(struct.pack("<Q", 0))
                continue
            buf.append(struct.pack("<Q", st.arm_count))
            buf.append(np.ascontiguousarray(st.weights, dtype="<f8").tobytes())
            buf.append(struct.pack("<Q", st.steps_since_reset))
        return b"".join(buf)

    def loads(self, data: bytes) -> "PolicyTable":
        """Restore rows from a ``BPT1`` snapshot into this table's configuration."""
        if data[:4] != POLICY_MAGIC:
            raise BanditError("not a BPT1 snapshot")
        (n,) = struct.unpack_from("<Q", data, 4)
        if n != self.node_count:
            raise BanditError(f"snapshot has {n} nodes, table has {self.node_count}")
        pos = 12
        rows = {}
        for v in range(n):
            (arms,) = struct.unpack_from("<Q", data, pos)
            pos += 8
            w = np.frombuffer(data, dtype="<f8", count=arms, offset=pos).astype(np.float64)
            pos += 8 * arms
            (steps,) = struct.unpack_from("<Q", data, pos)
            pos += 8
            if arms:
                rows[v] = ArmState(w, plays=min(self.plays, arms), eta=self.eta, gamma=self.gamma,
                                   epoch_len=self.epoch_len, steps_since_reset=steps)
        self.rows = rows
        return self

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.dumps())
