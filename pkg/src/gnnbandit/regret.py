"""Synthetic drifting bandit environments and regret measurement.

Expected rewards follow known mean paths so both oracles are exact; the
policy collects realized rewards. The variation budget of a path is
``sum_t max_i |mean_i(t+1) - mean_i(t)|``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import stats

from .bandits import BanditError, depround, exp3m_probabilities, horizon_tuned_hyperparams

ENVIRONMENT_KINDS = ("sinusoidal", "piecewise_constant", "log_decay")
POLICY_KINDS = ("rexp3", "exp3m_no_restart", "uniform_random")


def variation_budget(mean_paths: np.ndarray) -> float:
    """``sum_t max_i |mean_i(t+1) - mean_i(t)|`` for a ``K x T`` path matrix."""
    if mean_paths.shape[1] < 2:
        return 0.0
    return float(np.abs(np.diff(mean_paths, axis=1)).max(axis=0).sum())


@dataclass(frozen=True)
class DriftEnvironment:
    """Known expected-reward paths for ``K`` arms over ``T`` steps.

    ``noise_half_width > 0`` adds ``Uniform(-h, h)`` noise to realized
    rewards. ``reward_cap`` bounds every realized reward; ``budget_rate``
    is the constant ``C`` with ``realized_budget <= C ln T`` used for
    automatic restart tuning.
    """

    arm_count: int
    plays: int
    horizon: int
    mean_paths: np.ndarray
    reward_cap: float
    budget_rate: float
    target_budget: float
    noise_half_width: float = 0.0
    kind: str = "custom"

    def __post_init__(self):
        m = np.asarray(self.mean_paths, dtype=np.float64)
        if m.shape != (self.arm_count, self.horizon):
            raise ValueError(f"mean paths have shape {m.shape}, expected {(self.arm_count, self.horizon)}")
        if not 1 <= self.plays < self.arm_count:
            raise ValueError("need 1 <= k < K")
        m.setflags(write=False)
        object.__setattr__(self, "mean_paths", m)

    @property
    def realized_budget(self) -> float:
        return variation_budget(self.mean_paths)

    def rewards(self, t: int, arms: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Realized rewards of ``arms`` at 0-based step ``t``."""
        r = self.mean_paths[arms, t]
        if self.noise_half_width > 0:
            r = r + rng.uniform(-self.noise_half_width, self.noise_half_width, size=len(arms))
        return r


def _piecewise(K, k, T, num_changes, gap, low):
    if num_changes < 0 or gap <= 0:
        raise ValueError("num_changes must be >= 0 and gap > 0")
    if num_changes >= T:
        raise ValueError(f"{num_changes} changes do not fit in horizon {T}")
    if k * (num_changes + 1) > K * T:
        raise ValueError("infeasible rotation")
    m = np.full((K, T), float(low))
    bounds = np.linspace(0, T, num_changes + 2).round().astype(int)
    for s, (a, b) in enumerate(zip(bounds, bounds[1:])):
        best = [(s * k + j) % K for j in range(k)]
        m[best, a:b] = low + gap
    return m, num_changes * gap


def _sinusoidal(K, T, budget, cap, rng):
    if budget <= 0:
        raise ValueError("budget must be > 0")
    phases = 2 * np.pi * np.arange(K) / K + rng.uniform(0, 2 * np.pi)
    t = np.arange(T)
    # enough cycles that the amplitude stays within half the reward range
    for cycles in range(1, T // 2 + 1):
        unit = np.sin(2 * np.pi * cycles * t[None, :] / T + phases[:, None])
        per_unit = variation_budget(unit)
        amp = budget / per_unit
        if amp <= cap / 2:
            return cap / 2 + amp * unit, budget
    raise ValueError(f"budget {budget} infeasible for horizon {T} and cap {cap}")


def _log_decay(K, T, c_v_bar, cap, rng):
    """Arms bounce inside ``[0, cap]``; every arm moves by ``c / (t + 1)`` from step t to t+1."""
    if c_v_bar <= 0:
        raise ValueError("c_v_bar must be > 0")
    if c_v_bar > cap:
        raise ValueError(f"c_v_bar={c_v_bar} exceeds reward cap {cap}; first step would leave the range")
    m = np.empty((K, T))
    x = rng.uniform(0, cap, size=K)
    direction = rng.choice([-1.0, 1.0], size=K)
    m[:, 0] = x
    for t in range(1, T):
        step = c_v_bar / (t + 1)
        nxt = x + direction * step
        out = (nxt < 0) | (nxt > cap)
        direction[out] *= -1
        nxt[out] = x[out] + direction[out] * step
        x = nxt
        m[:, t] = x
    target = c_v_bar * float(np.sum(1.0 / np.arange(2, T + 1)))
    return m, target


def make_environment(kind: str, K: int, k: int, T: int, seed: int, *, budget: float = 1.0,
                     num_changes: int = 0, gap: float = 1.0, low: float = 0.0,
                     c_v_bar: float = 1.0, reward_cap: float = 1.0,
                     noise_half_width: float = 0.0) -> DriftEnvironment:
    """Build a drifting environment.

    ``sinusoidal``
        Phase-shifted sines around ``reward_cap / 2`` scaled to ``budget``.
    ``piecewise_constant``
        Every arm at ``low`` except a rotating top-``k`` set at
        ``low + gap``; the set rotates at ``num_changes`` evenly spaced
        switch points.
    ``log_decay``
        Step ``t`` moves every arm by ``c_v_bar / (t + 1)``, so the budget
        is ``c_v_bar (H_T - 1) <= c_v_bar ln T``.
    """
    if kind not in ENVIRONMENT_KINDS:
        raise ValueError(f"unknown environment {kind!r}")
    if not (K >= 2 and 1 <= k < K and T >= K):
        raise ValueError("need K >= 2, 1 <= k < K and T >= K")
    rng = np.random.default_rng(seed)
    if kind == "piecewise_constant":
        m, target = _piecewise(K, k, T, num_changes, gap, low)
        cap = low + gap
    elif kind == "sinusoidal":
        m, target = _sinusoidal(K, T, budget, reward_cap, rng)
        cap = reward_cap
    else:
        m, target = _log_decay(K, T, c_v_bar, reward_cap, rng)
        cap = reward_cap
    rate = c_v_bar if kind == "log_decay" else target / math.log(T)
    env = DriftEnvironment(K, k, T, m, cap + noise_half_width, rate, target,
                           noise_half_width, kind)
    realized = env.realized_budget
    if abs(realized - target) > 0.01 * max(target, 1e-12):
        raise BanditError(f"realized budget {realized} misses target {target}")
    return env


@dataclass
class RegretTrace:
    """Per-step payoffs and cumulative regrets of one policy run."""

    policy_payoff: np.ndarray
    dynamic_oracle: np.ndarray
    weak_oracle: np.ndarray
    static_best_set: np.ndarray
    params: dict = field(default_factory=dict)

    @property
    def cumulative_dynamic(self) -> np.ndarray:
        return np.cumsum(self.dynamic_oracle - self.policy_payoff)

    @property
    def cumulative_weak(self) -> np.ndarray:
        return np.cumsum(self.weak_oracle - self.policy_payoff)

    @property
    def dynamic_regret(self) -> float:
        return float(np.sum(self.dynamic_oracle) - np.sum(self.policy_payoff))

    @property
    def weak_regret(self) -> float:
        return float(np.sum(self.weak_oracle) - np.sum(self.policy_payoff))

    def write_csv(self, path: str | Path) -> None:
        """Rows ``t,policy_payoff,dynamic_oracle,weak_oracle,cum_R,cum_Rhat``."""
        cum_r, cum_rhat = self.cumulative_dynamic, self.cumulative_weak
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "policy_payoff", "dynamic_oracle", "weak_oracle", "cum_R", "cum_Rhat"])
            for t in range(len(self.policy_payoff)):
                w.writerow([t + 1] + [repr(float(x)) for x in (
                    self.policy_payoff[t], self.dynamic_oracle[t], self.weak_oracle[t],
                    cum_r[t], cum_rhat[t])])


def oracles(env: DriftEnvironment) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dynamic top-k payoff per step, static best set and its per-step payoff."""
    k = env.plays
    m = env.mean_paths
    dynamic = -np.sort(-m, axis=0)[:k].sum(axis=0)
    best = np.sort(np.argsort(-m.sum(axis=1), kind="stable")[:k])
    return dynamic, best, m[best].sum(axis=0)


def resolve_params(env: DriftEnvironment, policy: str, params: Optional[dict] = None) -> dict:
    """Fill ``eta``, ``gamma`` and ``delta_t`` (0 = never restart).

    Missing values come from the horizon-tuned formulas using the
    environment's reward cap and budget rate.
    """
    params = dict(params or {})
    K, k, T = env.arm_count, env.plays, env.horizon
    need = {"eta", "gamma", "delta_t"} - params.keys()
    if need:
        rate = env.budget_rate if env.budget_rate > 0 else 1.0
        eta, gamma, delta = horizon_tuned_hyperparams(env.reward_cap, K, k, T, rate)
        if env.budget_rate <= 0:
            delta = 0
        params.setdefault("eta", eta)
        params.setdefault("gamma", gamma)
        params.setdefault("delta_t", delta)
    if policy == "exp3m_no_restart":
        params["delta_t"] = 0
    return params


def run_policy(env: DriftEnvironment, policy: str, seed: int,
               params: Optional[dict] = None) -> RegretTrace:
    """Play ``policy`` for the full horizon and account regret against both oracles.

    ``rexp3`` is Exp3.M with weights reset to 1 at every multiple of
    ``delta_t``; ``exp3m_no_restart`` never resets; ``uniform_random``
    plays a uniformly random ``k``-set.
    """
    if policy not in POLICY_KINDS:
        raise ValueError(f"unknown policy {policy!r}")
    rng = np.random.default_rng(seed)
    K, k, T = env.arm_count, env.plays, env.horizon
    dynamic, best, weak = oracles(env)
    payoff = np.empty(T)
    if policy == "uniform_random":
        for t in range(T):
            arms = rng.permutation(K)[:k]
            payoff[t] = env.rewards(t, arms, rng).sum()
        return RegretTrace(payoff, dynamic, weak, best, {"policy": policy})

    p_ = resolve_params(env, policy, params)
    eta, gamma, delta = p_["eta"], p_["gamma"], int(p_["delta_t"])
    logw = np.zeros(K)
    for t in range(T):
        step = t + 1
        if delta and step % delta == 0:
            logw[:] = 0.0
        w = np.exp(logw - logw.max())
        p, capped = exp3m_probabilities(w, k, gamma)
        arms = depround(k, p, rng) if k > 1 else np.array([rng.choice(K, p=p)])
        r = env.rewards(t, arms, rng)
        payoff[t] = r.sum()
        gain = eta * r / p[arms]
        if len(capped):
            gain[np.isin(arms, capped)] = 0.0
        logw[arms] += gain
    return RegretTrace(payoff, dynamic, weak, best, {"policy": policy, **p_})


def fit_scaling_exponent(points) -> tuple[float, float, float]:
    """Least-squares fit of ``ln R = slope ln T + intercept``.

    ``points`` is a sequence of ``(T, mean regret)`` pairs. Returns
    ``(slope, intercept, r_squared)``.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 4:
        raise ValueError("need at least 4 (T, regret) pairs")
    if np.any(pts <= 0):
        raise ValueError("regret values must be positive to take logs; add seeds")
    fit = stats.linregress(np.log(pts[:, 0]), np.log(pts[:, 1]))
    return float(fit.slope), float(fit.intercept), float(fit.rvalue**2)
