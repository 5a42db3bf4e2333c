"""Stochastic block model graphs with Gaussian community features."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import SparseGraph, load_edge_list, write_edge_file, write_feature_file


@dataclass
class LabeledGraph:
    graph: SparseGraph
    labels: np.ndarray
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1


def _block_edges(rng, a_nodes, b_nodes, p, same, propensity=None):
    """Edges between two node blocks; the expected count is ``p`` times the number of pairs.

    Endpoints are drawn in proportion to ``propensity`` (uniform if None).
    """
    if same:
        pairs = len(a_nodes) * (len(a_nodes) - 1) // 2
    else:
        pairs = len(a_nodes) * len(b_nodes)
    m = rng.binomial(pairs, p) if pairs else 0
    if m == 0:
        return np.zeros((0, 2), dtype=np.int64)
    pa = pb = None
    if propensity is not None:
        pa = propensity[a_nodes] / propensity[a_nodes].sum()
        pb = propensity[b_nodes] / propensity[b_nodes].sum()
    src = rng.choice(a_nodes, size=m, p=pa)
    dst = rng.choice(b_nodes, size=m, p=pb)
    keep = src != dst
    return np.stack([src[keep], dst[keep]], axis=1)


def sbm_graph(node_count: int = 2000, communities: int = 4, p_in: float = 0.01,
              p_out: float = 0.001, feature_dim: int = 16, separation: float = 1.0,
              noise: float = 1.0, split=(0.6, 0.2, 0.2), seed: int = 0,
              degree_tail: float | None = None) -> LabeledGraph:
    """Sample a community graph with self-loops and symmetric normalization.

    With ``degree_tail`` set, each node gets a Pareto propensity with that
    shape and edge endpoints are drawn in proportion to it (a
    degree-corrected block model), giving hub nodes.

    Each community gets a Gaussian feature center scaled by ``separation``;
    node features are the center plus isotropic noise of std ``noise``.
    Edge counts per block pair are binomial; endpoints are drawn uniformly
    and duplicates merged, so the realized density is slightly below
    ``p``.
    """
    if communities < 1 or node_count < communities:
        raise ValueError("need at least one node per community")
    if not (0 <= p_out <= 1 and 0 <= p_in <= 1):
        raise ValueError("edge probabilities must lie in [0, 1]")
    if len(split) != 3 or abs(sum(split) - 1) > 1e-9 or min(split) < 0:
        raise ValueError("split must be three nonnegative fractions summing to 1")
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, communities, size=node_count)
    labels[:communities] = np.arange(communities)
    labels = np.sort(labels)
    blocks = [np.flatnonzero(labels == c) for c in range(communities)]
    propensity = None
    if degree_tail is not None:
        if not degree_tail > 0:
            raise ValueError("degree_tail must be > 0")
        propensity = 1.0 + rng.pareto(degree_tail, size=node_count)
    edges = []
    for a in range(communities):
        for b in range(a, communities):
            p = p_in if a == b else p_out
            edges.append(_block_edges(rng, blocks[a], blocks[b], p, a == b, propensity))
    edges = np.concatenate(edges)
    centers = separation * rng.standard_normal((communities, feature_dim))
    features = centers[labels] + noise * rng.standard_normal((node_count, feature_dim))
    g = load_edge_list(edges, node_count, self_loops=True, features=features)
    perm = rng.permutation(node_count)
    n_train = int(round(split[0] * node_count))
    n_val = int(round(split[1] * node_count))
    return LabeledGraph(g, labels, np.sort(perm[:n_train]), np.sort(perm[n_train:n_train + n_val]),
                        np.sort(perm[n_train + n_val:]))


def write_dataset(directory: str | Path, data: LabeledGraph) -> dict:
    """Write edges, features, labels and split files; returns the paths written."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {name: d / f"{name}.txt" for name in ("edges", "features", "labels", "train", "val", "test")}
    write_edge_file(paths["edges"], data.graph)
    write_feature_file(paths["features"], data.graph.features)
    for name, arr in (("labels", data.labels), ("train", data.train), ("val", data.val), ("test", data.test)):
        paths[name].write_text("".join(f"{int(x)}\n" for x in arr))
    return paths


def read_index_file(path: str | Path) -> np.ndarray:
    """One integer per line; ``#`` comments and blank lines ignored."""
    out = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(int(line))
    return np.asarray(out, dtype=np.int64)
