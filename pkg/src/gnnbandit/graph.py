"""Immutable CSR graph container, file formats and feature corruption."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

SNAPSHOT_MAGIC = b"BGS1"

WEIGHTINGS = ("symmetric_norm", "uniform", "raw")


class GraphError(ValueError):
    """Raised for malformed graph input."""


@dataclass(frozen=True)
class GraphConstants:
    """Graph-level maxima used by the boundedness monitors.

    Attributes
    ----------
    max_degree : int
        Largest neighbor-list length over all nodes.
    max_edge_weight : float
        Largest aggregation weight over all stored edges.
    feature_aggregate_norm : float
        ``max_v || sum_i a_vi x_i ||``.
    """

    max_degree: int
    max_edge_weight: float
    feature_aggregate_norm: float


@dataclass(frozen=True, eq=False)
class SparseGraph:
    """Undirected graph in CSR layout with per-edge weights and node features.

    Row ``v`` lists the neighbors of ``v`` sorted by id, in
    ``neighbor_ids[neighbor_offsets[v]:neighbor_offsets[v + 1]]``.
    """

    node_count: int
    neighbor_offsets: np.ndarray
    neighbor_ids: np.ndarray
    edge_weights: np.ndarray
    features: np.ndarray = field(repr=False)

    def __post_init__(self):
        off = self.neighbor_offsets
        if off.shape != (self.node_count + 1,) or off[0] != 0:
            raise GraphError("offsets must have node_count + 1 entries starting at 0")
        if np.any(np.diff(off) < 0):
            raise GraphError("offsets must be nondecreasing")
        if off[-1] != len(self.neighbor_ids) or len(self.edge_weights) != len(self.neighbor_ids):
            raise GraphError("last offset must equal the number of stored edges")
        if len(self.edge_weights) and not np.all(self.edge_weights > 0):
            raise GraphError("edge weights must be strictly positive")
        if self.features.ndim != 2 or self.features.shape[0] != self.node_count:
            raise GraphError(
                f"features must have {self.node_count} rows, got shape {self.features.shape}"
            )
        for arr in (off, self.neighbor_ids, self.edge_weights, self.features):
            arr.flags.writeable = False

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.neighbor_offsets)

    def degree(self, v: int) -> int:
        return int(self.neighbor_offsets[v + 1] - self.neighbor_offsets[v])

    def neighbors(self, v: int) -> np.ndarray:
        return self.neighbor_ids[self.neighbor_offsets[v] : self.neighbor_offsets[v + 1]]

    def weights(self, v: int) -> np.ndarray:
        return self.edge_weights[self.neighbor_offsets[v] : self.neighbor_offsets[v + 1]]

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Weighted adjacency ``A[v, i] = a_vi`` as a scipy CSR matrix."""
        a = sp.csr_matrix(
            (self.edge_weights, self.neighbor_ids, self.neighbor_offsets),
            shape=(self.node_count, self.node_count),
        )
        a.has_sorted_indices = True
        return a

    @cached_property
    def max_incident_weight(self) -> np.ndarray:
        """Per node ``i``: the largest ``a_vi`` over rows ``v`` that list ``i``."""
        out = np.zeros(self.node_count)
        np.maximum.at(out, self.neighbor_ids, self.edge_weights)
        return out

    @cached_property
    def constants(self) -> GraphConstants:
        deg = self.degrees
        agg = self.adjacency @ self.features
        return GraphConstants(
            max_degree=int(deg.max()) if len(deg) else 0,
            max_edge_weight=float(self.edge_weights.max()) if len(self.edge_weights) else 0.0,
            feature_aggregate_norm=float(np.linalg.norm(agg, axis=1).max()) if self.node_count else 0.0,
        )

    def replace_features(self, rows: np.ndarray) -> "SparseGraph":
        return SparseGraph(
            self.node_count,
            self.neighbor_offsets,
            self.neighbor_ids,
            self.edge_weights,
            np.array(rows, dtype=np.float64, copy=True),
        )


def load_edge_list(
    edges: Iterable[Sequence[int]],
    node_count: int,
    weighting: str = "symmetric_norm",
    values: Sequence[float] | None = None,
    self_loops: bool = False,
    features: np.ndarray | None = None,
) -> SparseGraph:
    """Build an undirected :class:`SparseGraph` from ``(src, dst)`` pairs.

    Each edge is stored in both rows. Duplicate pairs (in either
    orientation) are merged, keeping the first occurrence's raw value.

    Parameters
    ----------
    weighting : {"symmetric_norm", "uniform", "raw"}
        ``symmetric_norm`` sets ``a_vi = 1 / sqrt(D_v D_i)``, ``uniform``
        sets every weight to 1 and ``raw`` takes one positive value per
        input edge from ``values``.
    self_loops : bool
        Add an ``(v, v)`` edge for every node before weighting.
    features : array, optional
        Node feature rows; defaults to a ``node_count x 0`` matrix.
    """
    if weighting not in WEIGHTINGS:
        raise GraphError(f"unknown weighting {weighting!r}; expected one of {WEIGHTINGS}")
    edge_arr = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
    if weighting == "raw":
        if values is None or len(values) != len(edge_arr):
            raise GraphError("raw weighting needs one value per input edge")
        val_arr = np.asarray(values, dtype=np.float64)
        if np.any(val_arr <= 0):
            raise GraphError("raw edge values must be > 0")
    else:
        val_arr = np.ones(len(edge_arr))
    bad = np.flatnonzero((edge_arr < 0).any(axis=1) | (edge_arr >= node_count).any(axis=1))
    if len(bad):
        src, dst = edge_arr[bad[0]]
        raise GraphError(f"edge ({src}, {dst}) out of range for node_count={node_count}")

    lo = np.minimum(edge_arr[:, 0], edge_arr[:, 1])
    hi = np.maximum(edge_arr[:, 0], edge_arr[:, 1])
    key = lo * node_count + hi
    _, first = np.unique(key, return_index=True)
    first.sort()
    lo, hi, val_arr = lo[first], hi[first], val_arr[first]
    if self_loops:
        nodes = np.arange(node_count)
        keep = lo != hi
        lo = np.concatenate([lo[keep], nodes])
        hi = np.concatenate([hi[keep], nodes])
        val_arr = np.concatenate([val_arr[keep], np.ones(node_count)])

    loop = lo == hi
    rows = np.concatenate([lo, hi[~loop]])
    cols = np.concatenate([hi, lo[~loop]])
    vals = np.concatenate([val_arr, val_arr[~loop]])
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]

    counts = np.bincount(rows, minlength=node_count)
    empty = np.flatnonzero(counts == 0)
    if len(empty):
        raise GraphError(f"node {empty[0]} has no neighbors; every node needs degree >= 1")
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    if weighting == "symmetric_norm":
        vals = 1.0 / np.sqrt(counts[rows] * counts[cols].astype(np.float64))
    if features is None:
        features = np.zeros((node_count, 0))
    return SparseGraph(node_count, offsets, cols.astype(np.int64), vals.astype(np.float64),
                       np.array(features, dtype=np.float64, copy=True))


def attach_features(g: SparseGraph, rows: np.ndarray) -> SparseGraph:
    """Return a copy of ``g`` carrying ``rows`` as node features."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] != g.node_count:
        raise GraphError(f"expected {g.node_count} feature rows, got shape {rows.shape}")
    return g.replace_features(rows)


def corrupt_features(g: SparseGraph, node_ids: Iterable[int], scale: float) -> SparseGraph:
    """Multiply the feature rows of ``node_ids`` by ``scale``."""
    if not scale > 0:
        raise GraphError("scale must be > 0")
    ids = np.unique(np.asarray(list(node_ids), dtype=np.int64))
    if len(ids) and (ids.min() < 0 or ids.max() >= g.node_count):
        raise GraphError(f"unknown node id in {ids.tolist()}")
    rows = np.array(g.features, copy=True)
    rows[ids] *= scale
    return g.replace_features(rows)


# -- text formats -----------------------------------------------------------

def read_edge_file(path: str | Path) -> list[tuple[int, int]]:
    """Parse ``src<TAB>dst`` lines; blank lines and ``#`` comments are skipped."""
    edges = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphError(f"{path}:{lineno}: expected 'src<TAB>dst', got {line!r}")
        edges.append((int(parts[0]), int(parts[1])))
    return edges


def write_edge_file(path: str | Path, g: SparseGraph) -> None:
    lines = ["# src\tdst"]
    for v in range(g.node_count):
        for i in g.neighbors(v):
            if i >= v:
                lines.append(f"{v}\t{i}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_feature_file(path: str | Path) -> np.ndarray:
    """Read ``node_count feature_dim`` header then one row per node."""
    tokens = Path(path).read_text().split()
    if len(tokens) < 2:
        raise GraphError(f"{path}: missing 'node_count feature_dim' header")
    n, d = int(tokens[0]), int(tokens[1])
    body = tokens[2:]
    if len(body) != n * d:
        raise GraphError(f"{path}: expected {n * d} values, found {len(body)}")
    return np.array(body, dtype=np.float64).reshape(n, d)


def write_feature_file(path: str | Path, rows: np.ndarray) -> None:
    n, d = rows.shape
    out = [f"{n} {d}"]
    out.extend(" ".join(repr(float(x)) for x in row) for row in rows)
    Path(path).write_text("\n".join(out) + "\n")


# -- binary snapshot ----------------------------------------------------------

def _put(buf: list, arr: np.ndarray, dtype: str) -> None:
    buf.append(struct.pack("<Q", arr.size))
    buf.append(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def dumps_graph(g: SparseGraph) -> bytes:
    """Serialize to the ``BGS1`` little-endian snapshot layout.

    Layout: magic, then ``u64 length`` + payload for offsets (i64), ids
    (i64) and weights (f64), then ``u64 rows, u64 cols`` + features (f64,
    row-major).
    """
    buf = [SNAPSHOT_MAGIC]
    _put(buf, g.neighbor_offsets, "<i8")
    _put(buf, g.neighbor_ids, "<i8")
    _put(buf, g.edge_weights, "<f8")
    buf.append(struct.pack("<QQ", *g.features.shape))
    buf.append(np.ascontiguousarray(g.features, dtype="<f8").tobytes())
    return b"".join(buf)


def loads_graph(data: bytes) -> SparseGraph:
    if data[:4] != SNAPSHOT_MAGIC:
        raise GraphError("not a BGS1 snapshot")
    pos = 4

    def take(dtype):
        nonlocal pos
        (n,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        arr = np.frombuffer(data, dtype=dtype, count=n, offset=pos)
        pos += n * 8
        return arr.astype(dtype[1:], copy=True)

    offsets = take("<i8")
    ids = take("<i8")
    weights = take("<f8")
    rows, cols = struct.unpack_from("<QQ", data, pos)
    pos += 16
    feats = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=pos).reshape(rows, cols)
    return SparseGraph(len(offsets) - 1, offsets, ids, weights, feats.astype(np.float64, copy=True))


def save_graph(path: str | Path, g: SparseGraph) -> None:
    Path(path).write_bytes(dumps_graph(g))


def load_graph(path: str | Path) -> SparseGraph:
    return loads_graph(Path(path).read_bytes())
