import numpy as np
import pytest
from pytest import raises

from robgc.graph import (build_graph, canonical_edges, edge_homophily, EdgeCandidateSet,
                         GraphError, graph_statistics, khop_candidates, normalize,
                         normalize_dense, propagate)
from .utils import dense_adjacency, dense_normalize, random_graph


def _path_graph(n, labels=None):
    edges = [(i, i + 1) for i in range(n - 1)]
    if labels is None:
        labels = [0] * n
    return build_graph(edges, n, np.eye(n), labels)


def test_build_graph_cleans_edges():
    graph = build_graph([(1, 0), (0, 1), (2, 2), (1, 2)], 3, np.zeros((3, 2)), [0, 1, 0])
    assert graph.edge_set() == {(0, 1), (1, 2)}
    assert graph.num_edges == 2
    assert graph.num_classes == 2


def test_build_graph_masks_sorted():
    graph = build_graph([], 4, np.zeros((4, 1)), [0, 0, 1, 1],
                        masks={'train': [3, 0], 'test': [2]})
    assert graph.train.tolist() == [0, 3]
    assert graph.test.tolist() == [2]
    assert graph.val.tolist() == []


@pytest.mark.parametrize('kwargs,message', [
    ({'edge_list': [(0, 5)]}, r"edge 0 \(0, 5\) has an endpoint outside \[0, 3\)"),
    ({'edge_list': [(0, 1), (-1, 2)]}, r"edge 1 \(-1, 2\)"),
    ({'features': np.zeros((2, 2))}, r"features have 2 rows, expected 3"),
    ({'labels': [0, 1]}, r"labels have length 2, expected 3"),
    ({'labels': [0, -2, 1]}, r"node 1 has invalid label -2"),
    ({'masks': {'train': [0, 7]}}, r"train mask contains node 7 outside \[0, 3\)"),
    ({'masks': {'train': [0, 1], 'test': [1]}}, r"node 1 is in both the train and test masks"),
    ({'num_classes': 1}, r"node 1 has label 1, but there are only 1 classes"),
])
def test_build_graph_errors(kwargs, message):
    args = {
        'edge_list': [(0, 1)],
        'num_nodes': 3,
        'features': np.zeros((3, 2)),
        'labels': [0, 1, 0],
    }
    args.update(kwargs)
    with raises(GraphError, match=message):
        build_graph(**args)


def test_canonical_edges():
    u, v = canonical_edges([3, 1, 2, 2], [1, 3, 2, 0], 4)
    assert list(zip(u.tolist(), v.tolist())) == [(0, 2), (1, 3)]


def test_graph_is_readonly():
    graph = _path_graph(3)
    with raises(ValueError):
        graph.edge_u[0] = 2


def test_adjacency_symmetric():
    rng = np.random.default_rng(1)
    graph = random_graph(rng, 12)
    a = graph.adjacency.toarray()
    assert (a == a.T).all()
    assert a.sum() == 2 * graph.num_edges
    assert graph.degrees().tolist() == a.sum(axis=1).astype(int).tolist()
    assert sorted(graph.neighbors(0).tolist()) == np.nonzero(a[0])[0].tolist()


def test_one_hot_labels_unlabeled():
    graph = build_graph([], 3, np.zeros((3, 1)), [1, -1, 0], num_classes=2)
    assert graph.one_hot_labels().tolist() == [[0, 1], [0, 0], [1, 0]]


def test_subgraph():
    graph = _path_graph(5, labels=[0, 1, 2, 3, 4])
    sub = graph.subgraph([3, 2, 4], train=[0])
    assert sub.labels.tolist() == [3, 2, 4]
    assert sub.edge_set() == {(0, 1), (0, 2)}
    assert sub.node_ids.tolist() == [3, 2, 4]
    assert sub.num_classes == 5


def test_normalize_matches_dense():
    rng = np.random.default_rng(2)
    for _ in range(10):
        graph = random_graph(rng, 15)
        expected = dense_normalize(dense_adjacency(graph))
        assert np.allclose(normalize(graph).to_dense(), expected, atol=1e-12)


def test_normalize_edgeless_is_identity():
    graph = build_graph([], 4, np.zeros((4, 1)), [0] * 4)
    assert np.allclose(normalize(graph).to_dense(), np.eye(4))


def test_normalize_dense():
    weights = np.array([[0.0, 0.5], [0.5, 7.0]])
    adj = normalize_dense(weights)
    # Diagonal replaced by unit self-loops
    expected = dense_normalize(np.array([[0.0, 0.5], [0.5, 0.0]]))
    assert np.allclose(adj.to_dense(), expected)


def test_normalize_dense_errors():
    with raises(GraphError, match="adjacency must be square"):
        normalize_dense(np.zeros((2, 3)))
    with raises(GraphError, match="node 1 has non-positive weighted degree"):
        normalize_dense(np.array([[0.0, 0.0], [-2.0, 0.0]]))


def test_propagate():
    rng = np.random.default_rng(3)
    graph = random_graph(rng, 10)
    adj = normalize(graph)
    x = rng.standard_normal((10, 3))
    dense = dense_normalize(dense_adjacency(graph))

    assert np.array_equal(propagate(adj, x, 0), x)
    assert np.allclose(propagate(adj, x, 3), dense @ dense @ dense @ x)


def test_propagate_additivity():
    rng = np.random.default_rng(4)
    for _ in range(100):
        n = int(rng.integers(2, 20))
        graph = random_graph(rng, n, num_classes=2)
        adj = normalize(graph)
        x = rng.standard_normal((n, 2))
        y = rng.standard_normal((n, 2))
        k = int(rng.integers(0, 4))
        assert np.allclose(propagate(adj, x + y, k), propagate(adj, x, k) + propagate(adj, y, k))
        assert np.allclose(propagate(adj, propagate(adj, x, 1), k), propagate(adj, x, k + 1))


def test_propagate_errors():
    graph = _path_graph(3)
    with raises(GraphError, match="matrix has 2 rows, adjacency has 3 nodes"):
        propagate(normalize(graph), np.zeros((2, 1)), 1)
    with raises(GraphError, match="steps must be >= 0"):
        propagate(normalize(graph), np.zeros((3, 1)), -1)


def test_edge_homophily():
    graph = _path_graph(4, labels=[0, 0, 1, 1])
    assert edge_homophily(graph) == pytest.approx(2 / 3)

    edgeless = build_graph([], 2, np.zeros((2, 1)), [0, 1])
    assert edge_homophily(edgeless) == 1.0

    with raises(GraphError, match="edge endpoint 1 is unlabeled"):
        edge_homophily(_path_graph(2, labels=[0, -1]))


def test_homophily_permutation_invariance():
    rng = np.random.default_rng(5)
    for _ in range(100):
        n = int(rng.integers(3, 25))
        graph = random_graph(rng, n)
        perm = rng.permutation(n)
        inverse = np.argsort(perm)
        permuted = build_graph(np.stack([inverse[graph.edge_u], inverse[graph.edge_v]], axis=1),
                               n, graph.features[perm], graph.labels[perm])
        assert edge_homophily(permuted) == pytest.approx(edge_homophily(graph))


def _bfs_distances(adjacency, source):
    n = len(adjacency)
    dist = np.full(n, -1)
    dist[source] = 0
    frontier = [source]
    while frontier:
        nxt = []
        for i in frontier:
            for j in np.nonzero(adjacency[i])[0]:
                if dist[j] < 0:
                    dist[j] = dist[i] + 1
                    nxt.append(j)
        frontier = nxt
    return dist


def test_khop_candidates_matches_bfs():
    rng = np.random.default_rng(6)
    for _ in range(20):
        graph = random_graph(rng, 18, edge_prob=0.12)
        a = dense_adjacency(graph)
        for hops in (1, 2, 3):
            expected = set()
            for i in range(graph.num_nodes):
                dist = _bfs_distances(a, i)
                for j in range(i + 1, graph.num_nodes):
                    if 2 <= dist[j] <= hops:
                        expected.add((i, j))
            assert khop_candidates(graph, hops).pairs() == expected


def test_khop_candidates_nesting():
    rng = np.random.default_rng(7)
    for _ in range(100):
        graph = random_graph(rng, int(rng.integers(2, 16)), edge_prob=0.15)
        sets = [khop_candidates(graph, hops).pairs() for hops in (1, 2, 3)]
        assert sets[0] == set()
        assert sets[0] <= sets[1] <= sets[2]
        assert not (sets[2] & graph.edge_set())


def test_khop_candidates_sorted_and_blocked(monkeypatch):
    monkeypatch.setattr('robgc.graph.KHOP_BLOCK_ROWS', 3)
    graph = _path_graph(8)
    candidates = khop_candidates(graph, 2)
    assert list(zip(candidates.u.tolist(), candidates.v.tolist())) == \
        [(i, i + 2) for i in range(6)]


def test_khop_candidates_errors():
    with raises(GraphError, match="hops must be between 1 and 5, got 6"):
        khop_candidates(_path_graph(3), 6)


def test_edge_candidate_set():
    candidates = EdgeCandidateSet([0, 1], [2, 3])
    assert len(candidates) == 2
    assert candidates.subset(np.array([False, True])).pairs() == {(1, 3)}


def test_graph_statistics():
    graph = _path_graph(4, labels=[0, 0, 1, 1])
    stats = graph_statistics(graph)
    assert stats.nodes == 4
    assert stats.edges == 6
    assert stats.sparsity == pytest.approx(100 * 6 / 16)
    assert stats.homophily == pytest.approx(2 / 3)

    unlabeled = graph_statistics(_path_graph(2, labels=[0, -1]))
    assert unlabeled.homophily is None
