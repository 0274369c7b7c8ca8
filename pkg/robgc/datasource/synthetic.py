"""Stochastic block model stand-ins for the benchmark datasets"""
import logging

import numpy as np

from . import DatasetBundle, DatasetError
from ..graph import build_graph


logger = logging.getLogger(__name__)


class SyntheticSpec:
    def __init__(self, classes=4, nodes_per_class=150, intra_p=0.05, inter_p=0.005,
                 feature_dim=32, feature_noise=0.6, seed=0,
                 split=(0.6, 0.2, 0.2)):
        self.classes = classes
        self.nodes_per_class = nodes_per_class
        self.intra_p = intra_p
        self.inter_p = inter_p
        self.feature_dim = feature_dim
        self.feature_noise = feature_noise
        self.seed = seed
        self.split = tuple(split)

        if classes < 1 or nodes_per_class < 1:
            raise DatasetError("classes and nodes_per_class must be >= 1")
        if not 0 <= inter_p < intra_p <= 1:
            raise DatasetError("need 0 <= inter_p < intra_p <= 1, got inter_p={}, intra_p={}"
                               .format(inter_p, intra_p))
        if feature_noise < 0:
            raise DatasetError("feature_noise must be >= 0")
        if feature_dim < classes:
            raise DatasetError("feature_dim ({}) must be at least the number of classes ({}) "
                               "for orthogonal class means".format(feature_dim, classes))
        if len(self.split) != 3 or abs(sum(self.split) - 1.0) > 1e-9:
            raise DatasetError("split fractions must be three values summing to 1")


def _decode_triangular(k, n):
    """Maps k in [0, n(n-1)/2) to the k-th pair (i, j), i < j, in row-major order"""
    k = np.asarray(k, dtype=np.int64)
    i = n - 2 - np.floor(np.sqrt(-8.0 * k + 4.0 * n * (n - 1) - 7) / 2.0 - 0.5).astype(np.int64)
    j = k + i + 1 - n * (n - 1) // 2 + (n - i) * ((n - i) - 1) // 2
    return i, j


def _sample_block(rng, num_pairs, p):
    count = rng.binomial(num_pairs, p)
    if count == 0:
        return np.zeros(0, dtype=np.int64)
    return np.sort(rng.choice(num_pairs, size=count, replace=False))


def generate_sbm(spec, seed, name='sbm'):
    rng = np.random.default_rng(seed)
    c = spec.classes
    m = spec.nodes_per_class
    n = c * m
    labels = np.repeat(np.arange(c), m)

    edge_u = []
    edge_v = []
    for a in range(c):
        # Within block a
        idx = _sample_block(rng, m * (m - 1) // 2, spec.intra_p)
        i, j = _decode_triangular(idx, m)
        edge_u.append(a * m + i)
        edge_v.append(a * m + j)

        for b in range(a + 1, c):
            idx = _sample_block(rng, m * m, spec.inter_p)
            edge_u.append(a * m + idx // m)
            edge_v.append(b * m + idx % m)

    edges = np.stack([np.concatenate(edge_u), np.concatenate(edge_v)], axis=1)

    # Orthonormal class means from a seeded QR factorization
    q, _ = np.linalg.qr(rng.standard_normal((spec.feature_dim, c)))
    means = q.T
    features = means[labels] + spec.feature_noise * rng.standard_normal((n, spec.feature_dim))

    order = rng.permutation(n)
    n_train = int(round(spec.split[0] * n))
    n_val = int(round(spec.split[1] * n))
    masks = {
        'train': order[:n_train],
        'val': order[n_train:n_train + n_val],
        'test': order[n_train + n_val:],
    }

    graph = build_graph(edges, n, features, labels, masks=masks, num_classes=c)
    logger.info("Generated SBM %s: %d nodes, %d edges", name, n, graph.num_edges)

    return DatasetBundle(name, graph)
