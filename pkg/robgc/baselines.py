"""Comparison structure denoisers: Jaccard filtering, kNN augmentation and low-rank SVD"""
import logging

import numpy as np
import scipy.linalg

from .denoiser import correlation_matrix


logger = logging.getLogger(__name__)

SVD_POWER_STEPS = 20
SVD_OVERSAMPLE = 10
# Largest acceptable |A v - s u| relative to the top singular value
SVD_RESIDUAL_TOLERANCE = 1e-1

# Rows (or edges) processed per block; bounds the dense temporaries
BLOCK_ROWS = 1024


class BaselineError(Exception):
    pass


def jaccard_similarity(features, u, v):
    """Jaccard index of nonzero feature supports; two empty supports give 0"""
    support = features != 0
    result = np.empty(len(u))
    for start in range(0, len(u), BLOCK_ROWS):
        su = support[u[start:start + BLOCK_ROWS]]
        sv = support[v[start:start + BLOCK_ROWS]]
        inter = (su & sv).sum(axis=1)
        union = (su | sv).sum(axis=1)
        result[start:start + BLOCK_ROWS] = np.where(union > 0, inter / np.maximum(union, 1), 0.0)
    return result


def jaccard_denoise(graph, threshold):
    """Removes edges whose endpoints' Jaccard similarity is below threshold"""
    similarity = jaccard_similarity(graph.features, graph.edge_u, graph.edge_v)
    keep = similarity >= threshold
    logger.info("Jaccard(%.3f): removed %d of %d edges",
                threshold, graph.num_edges - np.count_nonzero(keep), graph.num_edges)

    return graph.with_edges(graph.edge_u[keep], graph.edge_v[keep])


def knn_augment(graph, k):
    """
    Connects every node to its k most cosine-similar nodes that are not
    already neighbors (ties to the lower id), keeping all existing edges.
    """
    if k < 1:
        raise BaselineError("k must be >= 1, got {}".format(k))

    n = graph.num_nodes
    adj = graph.adjacency
    new_u = []
    new_v = []
    for start in range(0, n, BLOCK_ROWS):
        end = min(n, start + BLOCK_ROWS)
        sim = correlation_matrix(graph.features[start:end], graph.features)
        rows = np.arange(end - start)
        sim[rows, rows + start] = -np.inf
        block = adj[start:end].tocoo()
        sim[block.row, block.col] = -np.inf

        order = np.argsort(-sim, axis=1, kind='stable')[:, :k]
        picked = np.take_along_axis(sim, order, axis=1)
        r, c = np.nonzero(np.isfinite(picked))
        new_u.append(r + start)
        new_v.append(order[r, c])

    added_u = np.concatenate(new_u) if new_u else np.zeros(0, dtype=np.int64)
    added_v = np.concatenate(new_v) if new_v else np.zeros(0, dtype=np.int64)
    result = graph.with_edges(np.concatenate([graph.edge_u, added_u]),
                              np.concatenate([graph.edge_v, added_v]))
    logger.info("kNN(%d): edges %d -> %d", k, graph.num_edges, result.num_edges)

    return result


def randomized_svd(matrix, rank, seed=0, power_steps=SVD_POWER_STEPS,
                   oversample=SVD_OVERSAMPLE):
    """
    Top-rank singular triplets by randomized subspace iteration,
    re-orthonormalizing after every product. Exact when rank + oversample
    covers the smaller dimension.

    Returns (U, s, Vt).
    """
    rows, cols = matrix.shape
    if not 1 <= rank <= min(rows, cols):
        raise BaselineError("rank must be between 1 and {}, got {}"
                            .format(min(rows, cols), rank))

    rng = np.random.default_rng(seed)
    width = min(rank + oversample, min(rows, cols))
    q, _ = scipy.linalg.qr(np.asarray(matrix @ rng.standard_normal((cols, width))),
                           mode='economic')
    for _ in range(power_steps):
        z, _ = scipy.linalg.qr(np.asarray(matrix.T @ q), mode='economic')
        q, _ = scipy.linalg.qr(np.asarray(matrix @ z), mode='economic')

    b = np.asarray((matrix.T @ q).T)
    u_small, s, vt = scipy.linalg.svd(b, full_matrices=False)
    u = q @ u_small[:, :rank]
    s = s[:rank]
    vt = vt[:rank]

    if s[0] > 0:
        residual = np.linalg.norm(np.asarray(matrix @ vt.T) - u * s, axis=0).max()
        if residual > SVD_RESIDUAL_TOLERANCE * s[0]:
            raise BaselineError("randomized SVD did not converge after {} power steps: "
                                "residual {:.3g} for top singular value {:.3g}"
                                .format(power_steps, residual, s[0]))

    return u, s, vt


def svd_denoise(graph, rank, cutoff=0.5, seed=0):
    """Keeps the pairs whose rank-`rank` reconstruction of the adjacency exceeds cutoff"""
    n = graph.num_nodes
    if n == 0:
        return graph
    rank = min(rank, n)

    u, s, vt = randomized_svd(graph.adjacency, rank, seed=seed)
    us = u * s

    kept_u = []
    kept_v = []
    for start in range(0, n, BLOCK_ROWS):
        end = min(n, start + BLOCK_ROWS)
        block = us[start:end] @ vt
        block = (block + (us @ vt[:, start:end]).T) / 2
        r, c = np.nonzero(block > cutoff)
        r = r + start
        upper = c > r
        kept_u.append(r[upper])
        kept_v.append(c[upper])

    result = graph.with_edges(np.concatenate(kept_u), np.concatenate(kept_v))
    logger.info("SVD(rank %d): edges %d -> %d", rank, graph.num_edges, result.num_edges)

    return result
