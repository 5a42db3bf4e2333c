import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gnnbandit.graph import (GraphError, SparseGraph, attach_features, corrupt_features, dumps_graph,
                             load_edge_list, load_graph, loads_graph, read_edge_file,
                             read_feature_file, save_graph, write_edge_file, write_feature_file)


@st.composite
def edge_lists(draw, max_nodes=12):
    n = draw(st.integers(2, max_nodes))
    pairs = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=40))
    # a path keeps every node's degree >= 1
    edges = [(i, i + 1) for i in range(n - 1)] + pairs
    return n, edges


def test_single_edge_uniform():
    g = load_edge_list([(0, 1)], 2, weighting="uniform")
    assert g.neighbors(0).tolist() == [1] and g.neighbors(1).tolist() == [0]
    assert g.weights(0).tolist() == [1.0] and g.weights(1).tolist() == [1.0]


def test_symmetric_norm_star():
    g = load_edge_list([(0, 1), (0, 2)], 3)
    assert g.weights(0)[0] == pytest.approx(1 / np.sqrt(2), abs=1e-15)
    assert g.weights(1)[0] == pytest.approx(0.7071, abs=1e-4)


def test_out_of_range_edge_rejected():
    with pytest.raises(GraphError, match=r"\(0, 5\)"):
        load_edge_list([(0, 5)], 3)


def test_isolated_node_rejected():
    with pytest.raises(GraphError, match="node 2"):
        load_edge_list([(0, 1)], 3)


def test_self_loop_flag():
    g = load_edge_list([(0, 1)], 2, weighting="uniform", self_loops=True)
    assert g.neighbors(0).tolist() == [0, 1]
    assert g.degree(0) == 2


def test_raw_weights_need_positive_values():
    g = load_edge_list([(0, 1)], 2, weighting="raw", values=[2.5])
    assert g.weights(1).tolist() == [2.5]
    with pytest.raises(GraphError):
        load_edge_list([(0, 1)], 2, weighting="raw", values=[0.0])


def test_feature_aggregate_norm_zero_features():
    g = attach_features(load_edge_list([(0, 1)], 2), np.zeros((2, 2)))
    assert g.constants.feature_aggregate_norm == 0.0


def test_feature_aggregate_norm_two_nodes():
    g = attach_features(load_edge_list([(0, 1)], 2, weighting="uniform"), np.eye(2))
    assert g.constants.feature_aggregate_norm == 1.0


def test_feature_aggregate_norm_self_loop():
    g = load_edge_list([(0, 0)], 1, weighting="uniform", features=np.array([[3.0, 4.0]]))
    assert g.constants == g.constants.__class__(1, 1.0, 5.0)


def test_attach_features_shape_mismatch():
    g = load_edge_list([(0, 1)], 2)
    with pytest.raises(GraphError):
        attach_features(g, np.zeros((3, 2)))


def test_corrupt_features():
    g = load_edge_list([(0, 1)], 2, features=np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert np.array_equal(corrupt_features(g, [0, 1], 1.0).features, g.features)
    out = corrupt_features(g, [0], 40.0)
    assert out.features[0].tolist() == [40.0, 80.0]
    assert out.features[1].tolist() == [3.0, 4.0]
    assert np.array_equal(corrupt_features(g, [], 40.0).features, g.features)
    assert g.features[0].tolist() == [1.0, 2.0]
    with pytest.raises(GraphError):
        corrupt_features(g, [7], 2.0)


def test_direct_construction_validates_offsets():
    with pytest.raises(GraphError):
        SparseGraph(2, np.array([0, 2, 1]), np.array([1, 0]), np.ones(2), np.zeros((2, 1)))


@settings(max_examples=60, deadline=None)
@given(edge_lists())
def test_csr_rows_sorted_and_symmetric(data):
    n, edges = data
    g = load_edge_list(edges, n)
    A = g.adjacency.toarray()
    assert np.array_equal(A, A.T)
    for v in range(n):
        assert np.all(np.diff(g.neighbors(v)) > 0)
    assert g.neighbor_offsets[-1] == len(g.neighbor_ids)
    assert np.all(g.edge_weights > 0)


@settings(max_examples=60, deadline=None)
@given(edge_lists(), st.integers(0, 2**31 - 1))
def test_constants_match_full_scan(data, seed):
    n, edges = data
    feats = np.random.default_rng(seed).standard_normal((n, 3))
    g = load_edge_list(edges, n, self_loops=bool(seed % 2), features=feats)
    degs, wmax, cx = 0, 0.0, 0.0
    for v in range(n):
        degs = max(degs, g.degree(v))
        agg = np.zeros(3)
        for i, a in zip(g.neighbors(v), g.weights(v)):
            wmax = max(wmax, a)
            agg += a * feats[i]
        cx = max(cx, float(np.linalg.norm(agg)))
    c = g.constants
    assert c.max_degree == degs
    assert c.max_edge_weight == wmax
    assert c.feature_aggregate_norm == pytest.approx(cx, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(edge_lists(), st.integers(0, 2**31 - 1))
def test_binary_round_trip_is_bitwise(data, seed):
    n, edges = data
    g = load_edge_list(edges, n, features=np.random.default_rng(seed).standard_normal((n, 2)))
    blob = dumps_graph(g)
    assert blob[:4] == b"BGS1"
    h = loads_graph(blob)
    for name in ("neighbor_offsets", "neighbor_ids", "edge_weights", "features"):
        assert getattr(h, name).tobytes() == getattr(g, name).tobytes()
    assert dumps_graph(h) == blob


def test_file_round_trips(tmp_path):
    feats = np.array([[0.1, -2.0], [1e-17, 3.5], [7.0, 0.0]])
    g = load_edge_list([(0, 1), (1, 2)], 3, features=feats)
    write_edge_file(tmp_path / "e.txt", g)
    write_feature_file(tmp_path / "f.txt", feats)
    assert np.array_equal(read_feature_file(tmp_path / "f.txt"), feats)
    h = load_edge_list(read_edge_file(tmp_path / "e.txt"), 3, features=feats)
    assert np.array_equal(h.neighbor_ids, g.neighbor_ids)
    assert np.array_equal(h.edge_weights, g.edge_weights)
    save_graph(tmp_path / "g.bin", g)
    assert load_graph(tmp_path / "g.bin").features.tobytes() == feats.tobytes()


def test_edge_file_comments(tmp_path):
    p = tmp_path / "e.txt"
    p.write_text("# header\n0\t1\n\n1\t2  # trailing\n")
    assert read_edge_file(p) == [(0, 1), (1, 2)]
