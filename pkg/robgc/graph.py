"""Sparse graph storage, normalization, propagation and structural metrics"""
from functools import cached_property
import logging

import numpy as np
import scipy.sparse as sp

from .models import GraphStatsModel


logger = logging.getLogger(__name__)

MAX_HOPS = 5

# Rows expanded together by khop_candidates
KHOP_BLOCK_ROWS = 1024


class GraphError(Exception):
    pass


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def canonical_edges(u, v, num_nodes):
    """Orders each pair as (min, max), drops self-loops and duplicates, sorts"""
    u = np.asarray(u, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    lo = np.minimum(u, v)
    hi = np.maximum(u, v)
    keep = lo != hi
    keys = np.unique(lo[keep] * num_nodes + hi[keep])

    return keys // num_nodes, keys % num_nodes


class EdgeCandidateSet:
    """Ordered, duplicate-free list of unordered node pairs (u < v)"""
    def __init__(self, u, v):
        self.u = _readonly(np.asarray(u, dtype=np.int64))
        self.v = _readonly(np.asarray(v, dtype=np.int64))

    def __len__(self):
        return len(self.u)

    def pairs(self):
        return set(zip(self.u.tolist(), self.v.tolist()))

    def subset(self, mask):
        return EdgeCandidateSet(self.u[mask], self.v[mask])


class Graph:
    """
    Undirected unweighted graph with dense features and integer labels.

    Each edge is stored once as (edge_u[k], edge_v[k]) with edge_u < edge_v,
    sorted lexicographically. Unlabeled nodes carry label -1. node_ids maps
    local node indexes to ids in the graph this one was cut from.

    Instances are not modified after construction; operations return new graphs.
    Use build_graph() to construct from untrusted input.
    """
    def __init__(self, num_nodes, edge_u, edge_v, features, labels, *,
                 train=(), val=(), test=(), num_classes=None, node_ids=None):
        self.num_nodes = int(num_nodes)
        self.edge_u = _readonly(np.asarray(edge_u, dtype=np.int64))
        self.edge_v = _readonly(np.asarray(edge_v, dtype=np.int64))
        self.features = _readonly(np.asarray(features, dtype=np.float64))
        self.labels = _readonly(np.asarray(labels, dtype=np.int64))
        self.train = _readonly(np.asarray(train, dtype=np.int64))
        self.val = _readonly(np.asarray(val, dtype=np.int64))
        self.test = _readonly(np.asarray(test, dtype=np.int64))
        if num_classes is None:
            num_classes = int(self.labels.max()) + 1 if len(self.labels) else 0
        self.num_classes = num_classes
        if node_ids is None:
            node_ids = np.arange(self.num_nodes)
        self.node_ids = _readonly(np.asarray(node_ids, dtype=np.int64))

    @property
    def num_edges(self):
        return len(self.edge_u)

    @property
    def feature_dim(self):
        return self.features.shape[1]

    def edge_keys(self):
        return self.edge_u * self.num_nodes + self.edge_v

    def edge_set(self):
        return set(zip(self.edge_u.tolist(), self.edge_v.tolist()))

    @cached_property
    def adjacency(self):
        """Symmetric 0/1 CSR matrix"""
        rows = np.concatenate([self.edge_u, self.edge_v])
        cols = np.concatenate([self.edge_v, self.edge_u])
        data = np.ones(len(rows))
        matrix = sp.csr_matrix((data, (rows, cols)), shape=(self.num_nodes, self.num_nodes))
        matrix.sort_indices()
        return matrix

    def degrees(self):
        return np.bincount(np.concatenate([self.edge_u, self.edge_v]),
                           minlength=self.num_nodes)

    def neighbors(self, node):
        adj = self.adjacency
        return adj.indices[adj.indptr[node]:adj.indptr[node + 1]]

    def one_hot_labels(self, nodes=None):
        labels = self.labels if nodes is None else self.labels[nodes]
        result = np.zeros((len(labels), self.num_classes))
        labeled = labels >= 0
        result[np.nonzero(labeled)[0], labels[labeled]] = 1.0
        return result

    def with_edges(self, edge_u, edge_v):
        """Same nodes, features, labels and masks with a different edge set"""
        u, v = canonical_edges(edge_u, edge_v, self.num_nodes)
        return Graph(self.num_nodes, u, v, self.features, self.labels,
                     train=self.train, val=self.val, test=self.test,
                     num_classes=self.num_classes, node_ids=self.node_ids)

    def with_features(self, features):
        return Graph(self.num_nodes, self.edge_u, self.edge_v, features, self.labels,
                     train=self.train, val=self.val, test=self.test,
                     num_classes=self.num_classes, node_ids=self.node_ids)

    def subgraph(self, nodes, *, train=(), val=(), test=()):
        """
        Induced subgraph on nodes; node k of the result is nodes[k] here.
        The masks are given in the new numbering.
        """
        nodes = np.asarray(nodes, dtype=np.int64)
        mapping = np.full(self.num_nodes, -1, dtype=np.int64)
        mapping[nodes] = np.arange(len(nodes))

        new_u = mapping[self.edge_u]
        new_v = mapping[self.edge_v]
        keep = (new_u >= 0) & (new_v >= 0)
        u, v = canonical_edges(new_u[keep], new_v[keep], len(nodes))

        return Graph(len(nodes), u, v, self.features[nodes], self.labels[nodes],
                     train=train, val=val, test=test,
                     num_classes=self.num_classes, node_ids=self.node_ids[nodes])


class NormalizedAdjacency:
    """Symmetric-normalized self-looped adjacency, sparse or dense"""
    def __init__(self, matrix):
        self.matrix = matrix
        self.num_nodes = matrix.shape[0]

    def dot(self, m):
        return np.asarray(self.matrix @ m)

    def to_dense(self):
        if sp.issparse(self.matrix):
            return self.matrix.toarray()
        return np.array(self.matrix)


def _check_mask(name, nodes, num_nodes):
    nodes = np.asarray(nodes, dtype=np.int64)
    bad = np.nonzero((nodes < 0) | (nodes >= num_nodes))[0]
    if len(bad):
        raise GraphError("{} mask contains node {} outside [0, {})"
                         .format(name, nodes[bad[0]], num_nodes))
    return nodes


def build_graph(edge_list, num_nodes, features, labels, masks=None, num_classes=None):
    """Validates and cleans raw input into a symmetric, self-loop-free Graph"""
    edges = np.asarray(edge_list, dtype=np.int64).reshape(-1, 2)
    bad = np.nonzero((edges < 0).any(axis=1) | (edges >= num_nodes).any(axis=1))[0]
    if len(bad):
        u, v = edges[bad[0]]
        raise GraphError("edge {} ({}, {}) has an endpoint outside [0, {})"
                         .format(bad[0], u, v, num_nodes))

    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != num_nodes:
        raise GraphError("features have {} rows, expected {}"
                         .format(features.shape[0] if features.ndim else 0, num_nodes))

    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (num_nodes,):
        raise GraphError("labels have length {}, expected {}".format(len(labels), num_nodes))
    bad = np.nonzero(labels < -1)[0]
    if len(bad):
        raise GraphError("node {} has invalid label {}".format(bad[0], labels[bad[0]]))
    if num_classes is not None:
        bad = np.nonzero(labels >= num_classes)[0]
        if len(bad):
            raise GraphError("node {} has label {}, but there are only {} classes"
                             .format(bad[0], labels[bad[0]], num_classes))

    masks = masks or {}
    checked = {}
    seen = np.full(num_nodes, None, dtype=object)
    for name in ('train', 'val', 'test'):
        nodes = _check_mask(name, masks.get(name, ()), num_nodes)
        for n in nodes.tolist():
            if seen[n] is not None:
                raise GraphError("node {} is in both the {} and {} masks"
                                 .format(n, seen[n], name))
            seen[n] = name
        checked[name] = np.sort(nodes)

    u, v = canonical_edges(edges[:, 0], edges[:, 1], num_nodes)
    return Graph(num_nodes, u, v, features, labels, num_classes=num_classes, **checked)


def _symmetric_normalize(matrix, degrees):
    d = 1.0 / np.sqrt(degrees)
    if sp.issparse(matrix):
        scale = sp.diags(d)
        return (scale @ matrix @ scale).tocsr()
    return matrix * d[:, None] * d[None, :]


def normalize(graph):
    """D̃^-1/2 (A + I) D̃^-1/2"""
    a = graph.adjacency + sp.identity(graph.num_nodes, format='csr')
    degrees = np.asarray(a.sum(axis=1)).ravel()
    return NormalizedAdjacency(_symmetric_normalize(a, degrees))


def normalize_dense(weights):
    """
    Normalizes a dense weighted adjacency such as a condensed graph's A'.
    The diagonal is set to 1 (unit self-loops) before normalizing.
    """
    a = np.array(weights, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise GraphError("adjacency must be square, got shape {}".format(a.shape))
    np.fill_diagonal(a, 1.0)
    degrees = a.sum(axis=1)
    bad = np.nonzero(degrees <= 0)[0]
    if len(bad):
        raise GraphError("node {} has non-positive weighted degree".format(bad[0]))

    return NormalizedAdjacency(_symmetric_normalize(a, degrees))


def propagate(adj, matrix, steps):
    """Â^steps · matrix"""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape[0] != adj.num_nodes:
        raise GraphError("matrix has {} rows, adjacency has {} nodes"
                         .format(matrix.shape[0], adj.num_nodes))
    if steps < 0:
        raise GraphError("steps must be >= 0, got {}".format(steps))

    result = matrix
    for _ in range(steps):
        result = adj.dot(result)

    return result


def edge_homophily(graph):
    """Fraction of edges joining same-class endpoints; 1.0 for an edgeless graph"""
    if graph.num_edges == 0:
        return 1.0

    lu = graph.labels[graph.edge_u]
    lv = graph.labels[graph.edge_v]
    unlabeled = np.nonzero((lu < 0) | (lv < 0))[0]
    if len(unlabeled):
        k = unlabeled[0]
        node = graph.edge_u[k] if lu[k] < 0 else graph.edge_v[k]
        raise GraphError("edge endpoint {} is unlabeled".format(node))

    return float(np.count_nonzero(lu == lv)) / graph.num_edges


def khop_candidates(graph, hops):
    """
    All pairs within shortest-path distance <= hops that are not already
    edges. Expands breadth-first frontiers for a block of rows at a time
    with sparse products, so memory is bounded by the size of the
    neighborhoods rather than N^2.
    """
    if not 1 <= hops <= MAX_HOPS:
        raise GraphError("hops must be between 1 and {}, got {}".format(MAX_HOPS, hops))

    n = graph.num_nodes
    adj = graph.adjacency
    all_u = []
    all_v = []
    for start in range(0, n, KHOP_BLOCK_ROWS):
        end = min(n, start + KHOP_BLOCK_ROWS)
        seeds = sp.csr_matrix((np.ones(end - start),
                               (np.arange(end - start), np.arange(start, end))),
                              shape=(end - start, n))
        frontier = adj[start:end]
        reach = (seeds + frontier).tocsr()
        for _ in range(hops - 1):
            step = (frontier @ adj).tocsr()
            step.data[:] = 1.0
            step = (step - step.multiply(reach)).tocsr()
            step.eliminate_zeros()
            if step.nnz == 0:
                break
            reach = (reach + step).tocsr()
            frontier = step

        # Distance >= 2 pairs are exactly reach minus seeds minus direct neighbors
        beyond = (reach - seeds - adj[start:end]).tocoo()
        rows = beyond.row.astype(np.int64) + start
        cols = beyond.col.astype(np.int64)
        keep = (beyond.data > 0.5) & (cols > rows)
        keys = np.sort(rows[keep] * n + cols[keep])
        all_u.append(keys // n)
        all_v.append(keys % n)

    if not all_u:
        return EdgeCandidateSet([], [])

    return EdgeCandidateSet(np.concatenate(all_u), np.concatenate(all_v))


def graph_statistics(graph):
    try:
        homophily = edge_homophily(graph)
    except GraphError:
        homophily = None

    directed_edges = 2 * graph.num_edges
    if graph.num_nodes:
        sparsity = 100.0 * directed_edges / (graph.num_nodes ** 2)
    else:
        sparsity = 0.0

    return GraphStatsModel(nodes=graph.num_nodes,
                           edges=directed_edges,
                           sparsity=sparsity,
                           homophily=homophily)
