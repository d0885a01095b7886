import numpy as np
import pytest

from crosscity.graph import GraphError, RoadGraph, load_graph, save_graph


def test_single_edge_adjacency():
    g = RoadGraph(2, [(0, 1)])
    assert g.adjacency.tolist() == [[0.0, 1.0], [1.0, 0.0]]


def test_duplicate_and_reversed_edges_dedup():
    g = RoadGraph(2, [(0, 1), (1, 0), (0, 1)])
    assert g.edges == [(0, 1)]
    assert g.adjacency.tolist() == [[0.0, 1.0], [1.0, 0.0]]


def test_out_of_range_edge_rejected():
    with pytest.raises(GraphError, match=r"\(0,5\)"):
        RoadGraph(3, [(0, 5)])


def test_self_loop_rejected():
    with pytest.raises(GraphError, match="self-loop"):
        RoadGraph(3, [(1, 1)])


def test_adjacency_invariants(rng):
    n = 8
    edges = [(int(a), int(b)) for a, b in rng.integers(0, n, (15, 2)) if a != b]
    g = RoadGraph(n, edges)
    a = g.adjacency
    assert np.array_equal(a, a.T)
    assert set(np.unique(a)) <= {0.0, 1.0}
    assert np.all(np.diag(a) == 0)
    for v in range(n):
        assert g.neighbors[v] == sorted(np.flatnonzero(a[v]).tolist())


def test_isolated_nodes_allowed():
    g = RoadGraph(4, [(0, 1)])
    assert g.degree(2) == 0
    assert g.mean_aggregation_matrix()[2].tolist() == [0.0] * 4


def test_mean_aggregation_rows_sum_to_degree_indicator():
    g = RoadGraph(3, [(0, 1), (1, 2)])
    m = g.mean_aggregation_matrix()
    assert np.allclose(m.sum(axis=1), [1.0, 1.0, 1.0])
    assert m[1, 0] == 0.5 and m[1, 2] == 0.5


def test_edge_list_round_trip(tmp_path):
    g = RoadGraph(5, [(0, 1), (2, 3), (1, 4)])
    path = tmp_path / "g.edges"
    save_graph(g, path)
    g2 = load_graph(path)
    assert g2.n_nodes == 5
    assert g2.edges == g.edges


def test_load_graph_comments_and_errors(tmp_path):
    path = tmp_path / "g.edges"
    path.write_text("# header\n0,1\n\n1, 2\n")
    g = load_graph(path)
    assert g.edges == [(0, 1), (1, 2)]
    path.write_text("0,1\nfoo,2\n")
    with pytest.raises(GraphError, match="line 2"):
        load_graph(path)
