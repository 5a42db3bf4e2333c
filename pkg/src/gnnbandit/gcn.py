"""Graph convolutional network with exact and sampled aggregation, manual backprop and SGD.

Layer ``l`` maps embeddings ``H_l`` of the frontier ``V_l`` to ``H_{l+1}``
of ``V_{l+1}``::

    H_{l+1} = sigma(M_l @ H_l @ W_l)

``M_l`` is a sparse ``|V_{l+1}| x |V_l|`` aggregation matrix. Full
aggregation uses ``M_l[v, i] = a_vi``; sampled aggregation replaces each
row by an estimator over the sampled neighbors. The last layer produces
logits and is left linear.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .graph import SparseGraph
from .samplers import SamplingPlan

CHECKPOINT_MAGIC = b"GCW1"
POWER_ITERATIONS = 50


class NumericError(ArithmeticError):
    """Non-finite loss or gradient during training."""


@dataclass(frozen=True)
class LrSchedule:
    kind: str = "constant"
    value: float = 0.001

    def __post_init__(self):
        if self.kind not in ("constant", "inverse_t"):
            raise ValueError(f"unknown lr schedule {self.kind!r}")
        if self.value < 0:
            raise ValueError("learning rate must be >= 0")

    def rate(self, t: int) -> float:
        return self.value / t if self.kind == "inverse_t" else self.value


@dataclass
class GcnState:
    layer_weights: list
    step: int = 1
    lr_schedule: LrSchedule = field(default_factory=LrSchedule)
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.step < 1:
            raise ValueError("step counter starts at 1")
        for a, b in zip(self.layer_weights, self.layer_weights[1:]):
            if a.shape[1] != b.shape[0]:
                raise ValueError(f"layer shapes {a.shape} and {b.shape} do not chain")

    @property
    def depth(self) -> int:
        return len(self.layer_weights)

    @property
    def rate(self) -> float:
        return self.lr_schedule.rate(self.step)


def init_state(dims: Sequence[int], rng: np.random.Generator, activation: str = "relu",
               lr_schedule: LrSchedule | None = None) -> GcnState:
    """Glorot-uniform weights for layer sizes ``dims = [d_in, ..., d_out]``."""
    ws = []
    for d_in, d_out in zip(dims, dims[1:]):
        bound = np.sqrt(6.0 / (d_in + d_out))
        ws.append(rng.uniform(-bound, bound, size=(d_in, d_out)))
    return GcnState(ws, lr_schedule=lr_schedule or LrSchedule(), activation=activation)


def _act(name: str, x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0) if name == "relu" else np.tanh(x)


def _act_grad(name: str, pre: np.ndarray, out: np.ndarray) -> np.ndarray:
    return (pre > 0).astype(np.float64) if name == "relu" else 1.0 - out * out


@dataclass
class ForwardTrace:
    """Intermediates of one forward pass.

    ``frontiers[l]`` are the node ids whose layer-``l`` embeddings are
    rows of ``layer_embeddings[l]``; ``frontiers[-1]`` are the roots.
    ``aggregators[l]`` is the matrix ``M_l``, ``aggregates[l] = M_l H_l``
    and ``pre_activations[l] = aggregates[l] @ W_l``.
    """

    frontiers: list
    aggregators: list
    aggregates: list
    pre_activations: list
    layer_embeddings: list
    activation: str
    step: int = 1
    alpha: float = 0.0
    estimator: str = "full"

    @property
    def depth(self) -> int:
        return len(self.aggregators)

    @property
    def logits(self) -> np.ndarray:
        return self.layer_embeddings[-1]

    def embedding_of(self, layer: int, nodes) -> np.ndarray:
        """Rows of ``layer_embeddings[layer]`` for the given node ids."""
        front = self.frontiers[layer]
        pos = np.searchsorted(front, nodes)
        nodes = np.asarray(nodes)
        if np.any(pos >= len(front)) or np.any(front[np.minimum(pos, len(front) - 1)] != nodes):
            raise KeyError(f"nodes missing from layer-{layer} frontier")
        return self.layer_embeddings[layer][pos]


def _run_layers(g: SparseGraph, state: GcnState, frontiers: list, aggregators: list,
                estimator: str) -> ForwardTrace:
    if g.feature_dim != state.layer_weights[0].shape[0]:
        raise ValueError(
            f"feature dim {g.feature_dim} does not match first weight matrix {state.layer_weights[0].shape}"
        )
    H = [g.features[frontiers[0]]]
    aggs, pres = [], []
    L = state.depth
    for l, (M, W) in enumerate(zip(aggregators, state.layer_weights)):
        agg = M @ H[-1]
        pre = agg @ W
        out = pre if l == L - 1 else _act(state.activation, pre)
        aggs.append(agg)
        pres.append(pre)
        H.append(out)
    return ForwardTrace(frontiers, aggregators, aggs, pres, H, state.activation,
                        step=state.step, alpha=state.rate, estimator=estimator)


def _submatrix(A: sp.csr_matrix, rows: np.ndarray) -> tuple[sp.csr_matrix, np.ndarray]:
    sub = A[rows]
    cols = np.unique(sub.indices)
    remap = np.full(A.shape[1], -1, dtype=np.int64)
    remap[cols] = np.arange(len(cols))
    M = sp.csr_matrix((sub.data, remap[sub.indices], sub.indptr), shape=(len(rows), len(cols)))
    return M, cols


def forward_full(g: SparseGraph, state: GcnState, roots) -> ForwardTrace:
    """Exact forward pass over full neighborhoods, expanded down from ``roots``."""
    if state.depth < 1:
        raise ValueError("depth must be >= 1")
    roots = np.unique(np.asarray(roots, dtype=np.int64))
    frontiers = [roots]
    aggregators = []
    for _ in range(state.depth):
        M, below = _submatrix(g.adjacency, frontiers[0])
        frontiers.insert(0, below)
        aggregators.insert(0, M)
    return _run_layers(g, state, frontiers, aggregators, "full")


def full_embeddings(g: SparseGraph, state: GcnState) -> list:
    """Exact embeddings of every node at every layer (``H_0 .. H_L``)."""
    H = [g.features]
    A = g.adjacency
    for l, W in enumerate(state.layer_weights):
        pre = (A @ H[-1]) @ W
        H.append(pre if l == state.depth - 1 else _act(state.activation, pre))
    return H


def forward_sampled(g: SparseGraph, state: GcnState, roots, plan: SamplingPlan) -> ForwardTrace:
    """Forward pass where every aggregation uses the plan's sampled neighbors.

    The estimator per site is the plan's: ``biased`` gives
    ``(K/k) sum a_vi h_i`` over the draws, ``unbiased`` gives
    ``(1/k) sum a_vi h_i / p_i`` for draws with replacement and
    ``sum a_vi h_i / pi_i`` for distinct draws with inclusion
    probabilities ``pi_i``.
    """
    roots = np.unique(np.asarray(roots, dtype=np.int64))
    L = state.depth
    frontiers = [roots]
    aggregators = []
    for level in range(L, 0, -1):
        upper = frontiers[0]
        rows, cols, vals = [], [], []
        for r, v in enumerate(upper):
            site = plan.sites.get((int(v), level))
            if site is None:
                raise KeyError(f"plan has no site for node {v} at level {level}")
            ids, coef = site.coefficients(g, int(v))
            rows.append(np.full(len(ids), r))
            cols.append(ids)
            vals.append(coef)
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        below = np.unique(cols)
        M = sp.csr_matrix((vals, (rows, np.searchsorted(below, cols))),
                          shape=(len(upper), len(below)))
        frontiers.insert(0, below)
        aggregators.insert(0, M)
    return _run_layers(g, state, frontiers, aggregators, "sampled")


# -- loss and gradients -------------------------------------------------------

def softmax_xent(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    prob = e / e.sum(axis=1, keepdims=True)
    n = len(labels)
    loss = -np.mean(np.log(prob[np.arange(n), labels] + 1e-300))
    grad = prob
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


def backward(trace: ForwardTrace, state: GcnState, grad_logits: np.ndarray) -> list:
    """Reverse accumulation through the traced computation graph."""
    grads = [None] * trace.depth
    d_out = grad_logits
    for l in range(trace.depth - 1, -1, -1):
        if l == trace.depth - 1:
            d_pre = d_out
        else:
            d_pre = d_out * _act_grad(trace.activation, trace.pre_activations[l],
                                      trace.layer_embeddings[l + 1])
        grads[l] = trace.aggregates[l].T @ d_pre
        if l > 0:
            d_out = trace.aggregators[l].T @ (d_pre @ state.layer_weights[l].T)
    return grads


def loss_and_grads(g: SparseGraph, state: GcnState, roots, labels,
                   plan: SamplingPlan | None = None):
    """Loss, gradients and trace for the batch ``roots`` (full pass when ``plan`` is None)."""
    roots = np.asarray(roots, dtype=np.int64)
    order = np.argsort(roots, kind="stable")
    if len(np.unique(roots)) != len(roots):
        raise ValueError("batch roots must be distinct")
    trace = forward_full(g, state, roots) if plan is None else forward_sampled(g, state, roots, plan)
    # trace rows follow sorted root order
    lab = np.asarray(labels)[order]
    loss, d_logits = softmax_xent(trace.logits, lab)
    grads = backward(trace, state, d_logits)
    return loss, grads, trace


# -- assumption monitors ------------------------------------------------------

def spectral_norm(W: np.ndarray, iterations: int = POWER_ITERATIONS) -> float:
    """Largest singular value by power iteration on ``W^T W``."""
    if W.size == 0:
        return 0.0
    v = np.random.default_rng(12345).standard_normal(W.shape[1])
    v /= np.linalg.norm(v)
    s = 0.0
    for _ in range(iterations):
        u = W @ v
        s = np.linalg.norm(u)
        if s == 0:
            return 0.0
        v = W.T @ (u / s)
        n = np.linalg.norm(v)
        if n == 0:
            return 0.0
        v /= n
    return float(np.linalg.norm(W @ v))


@dataclass
class AssumptionMonitor:
    """Running maxima of the quantities the regret analysis assumes bounded.

    ``max_param_norm_seen`` is the largest spectral norm of any weight
    matrix, ``max_grad_norm_sum_seen`` the largest per-step sum of
    gradient Frobenius norms, ``max_weighted_embedding_norm_seen`` the
    largest ``||a_vi h_i||`` at layer 1 and ``max_embedding_step_seen[l]``
    the largest one-step change of weighted layer-``l`` embeddings.
    """

    max_degree: int = 0
    max_edge_weight: float = 0.0
    feature_aggregate_norm: float = 0.0
    max_param_norm_seen: float = 0.0
    max_grad_norm_sum_seen: float = 0.0
    max_weighted_embedding_norm_seen: float = 0.0
    max_embedding_step_seen: list = field(default_factory=list)
    lipschitz: float = 1.0

    @classmethod
    def for_graph(cls, g: SparseGraph, depth: int) -> "AssumptionMonitor":
        c = g.constants
        return cls(c.max_degree, c.max_edge_weight, c.feature_aggregate_norm,
                   max_embedding_step_seen=[0.0] * (depth + 1))

    def observe_params(self, weights) -> float:
        s = max(spectral_norm(W) for W in weights)
        self.max_param_norm_seen = max(self.max_param_norm_seen, s)
        return s

    def observe_grads(self, grads) -> float:
        s = float(sum(np.linalg.norm(dW) for dW in grads))
        self.max_grad_norm_sum_seen = max(self.max_grad_norm_sum_seen, s)
        return s

    def observe_weighted_norm(self, value: float) -> None:
        self.max_weighted_embedding_norm_seen = max(self.max_weighted_embedding_norm_seen, value)

    def observe_step(self, layer: int, value: float) -> None:
        while len(self.max_embedding_step_seen) <= layer:
            self.max_embedding_step_seen.append(0.0)
        self.max_embedding_step_seen[layer] = max(self.max_embedding_step_seen[layer], value)

    def merge(self, other: "AssumptionMonitor") -> "AssumptionMonitor":
        steps = [max(a, b) for a, b in zip(
            self.max_embedding_step_seen + [0.0] * len(other.max_embedding_step_seen),
            other.max_embedding_step_seen + [0.0] * len(self.max_embedding_step_seen))]
        while steps and len(steps) > max(len(self.max_embedding_step_seen),
                                         len(other.max_embedding_step_seen)):
            steps.pop()
        return replace(
            self,
            max_param_norm_seen=max(self.max_param_norm_seen, other.max_param_norm_seen),
            max_grad_norm_sum_seen=max(self.max_grad_norm_sum_seen, other.max_grad_norm_sum_seen),
            max_weighted_embedding_norm_seen=max(self.max_weighted_embedding_norm_seen,
                                                 other.max_weighted_embedding_norm_seen),
            max_embedding_step_seen=steps,
        )

    @property
    def growth(self) -> float:
        """``G = C_sigma C_theta D A``."""
        return self.lipschitz * self.max_param_norm_seen * self.max_degree * self.max_edge_weight

    def embedding_bound(self, layer: int = 1) -> float:
        """``C_z = G^(l-1) A C_sigma C_theta C_x``."""
        return (self.growth ** (layer - 1) * self.max_edge_weight * self.lipschitz
                * self.max_param_norm_seen * self.feature_aggregate_norm)

    def embedding_step_bound(self, alpha: float, layer: int = 1) -> float:
        """``alpha G^(l-1) A C_sigma C_x C_g``."""
        return (alpha * self.growth ** (layer - 1) * self.max_edge_weight * self.lipschitz
                * self.feature_aggregate_norm * self.max_grad_norm_sum_seen)

    def variation_constant(self, layer: int = 1) -> float:
        """``12 G^(2(l-1)) C_sigma^2 C_x^2 A^2 C_theta C_g``."""
        return (12.0 * self.growth ** (2 * (layer - 1)) * self.lipschitz**2
                * self.feature_aggregate_norm**2 * self.max_edge_weight**2
                * self.max_param_norm_seen * self.max_grad_norm_sum_seen)


@dataclass
class StepResult:
    state: GcnState
    monitor: AssumptionMonitor
    loss: float
    trace: ForwardTrace
    grads: list


def sgd_step(state: GcnState, g: SparseGraph, roots, labels,
             plan: SamplingPlan | None = None) -> StepResult:
    """One SGD update on the mean cross-entropy of the batch ``roots``.

    Gradients are exact for the computation graph actually traversed (the
    sampled one when ``plan`` is given). The returned monitor holds this
    step's observations (gradient norm sum, spectral norm of the updated
    weights); merge it into a running monitor.
    """
    if len(roots) == 0:
        raise ValueError("empty batch")
    loss, grads, trace = loss_and_grads(g, state, roots, labels, plan)
    if not np.isfinite(loss) or not all(np.all(np.isfinite(dW)) for dW in grads):
        raise NumericError(f"non-finite loss or gradient at step {state.step} (loss={loss})")
    alpha = state.rate
    new_weights = [W - alpha * dW for W, dW in zip(state.layer_weights, grads)]
    delta = AssumptionMonitor()
    delta.observe_grads(grads)
    delta.observe_params(new_weights)
    new_state = replace(state, layer_weights=new_weights, step=state.step + 1)
    return StepResult(new_state, delta, loss, trace, grads)


def weighted_step(g: SparseGraph, h_before: np.ndarray, h_after: np.ndarray) -> float:
    """``max_i max_v a_vi ||h_i(t+1) - h_i(t)||`` over all nodes ``i``."""
    d = np.linalg.norm(h_after - h_before, axis=1)
    return float(np.max(g.max_incident_weight * d)) if len(d) else 0.0


def embedding_step_bound_check(g: SparseGraph, trace_t: ForwardTrace, trace_t1: ForwardTrace,
                               monitor: AssumptionMonitor, layer: int = 1) -> bool:
    """Whether the observed one-step change of weighted layer-``layer`` embeddings obeys
    ``alpha_t G^(l-1) A C_sigma C_x C_g`` under the monitor's empirical constants.

    Both traces must be full passes over the same node set; ``trace_t``
    carries the learning rate ``alpha_t`` of the step between them.
    """
    f0, f1 = trace_t.frontiers[layer], trace_t1.frontiers[layer]
    if len(f0) != len(f1) or np.any(f0 != f1):
        raise ValueError("traces cover different node sets")
    h0, h1 = trace_t.layer_embeddings[layer], trace_t1.layer_embeddings[layer]
    d = np.linalg.norm(h1 - h0, axis=1)
    observed = float(np.max(g.max_incident_weight[f0] * d)) if len(d) else 0.0
    monitor.observe_step(layer, observed)
    bound = monitor.embedding_step_bound(trace_t.alpha, layer)
    return observed <= bound * (1 + 1e-9) + 1e-15


# -- checkpoints ----------------------------------------------------------------

def dumps_weights(state: GcnState) -> bytes:
    """``GCW1`` checkpoint: depth, then rows, cols and row-major doubles per layer."""
    buf = [CHECKPOINT_MAGIC, struct.pack("<Q", state.depth)]
    for W in state.layer_weights:
        buf.append(struct.pack("<QQ", *W.shape))
        buf.append(np.ascontiguousarray(W, dtype="<f8").tobytes())
    return b"".join(buf)


def loads_weights(data: bytes) -> list:
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError("not a GCW1 checkpoint")
    (depth,) = struct.unpack_from("<Q", data, 4)
    pos = 12
    out = []
    for _ in range(depth):
        r, c = struct.unpack_from("<QQ", data, pos)
        pos += 16
        out.append(np.frombuffer(data, dtype="<f8", count=r * c, offset=pos)
                   .reshape(r, c).astype(np.float64))
        pos += 8 * r * c
    return out


def save_weights(path: str | Path, state: GcnState) -> None:
    Path(path).write_bytes(dumps_weights(state))


def load_weights(path: str | Path) -> list:
    return loads_weights(Path(path).read_bytes())
