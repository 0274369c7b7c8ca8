import logging
import math

import numpy as np


logger = logging.getLogger(__name__)

# Rejection sampling gives up after this many draws per requested edge
REJECTION_RETRY_FACTOR = 100


class NoiseError(Exception):
    pass


class NoiseSpec:
    """
    level is the ratio of changed edges to |E|; add_fraction of the changes
    are additions (rounded down), deletions take the remainder.
    """
    def __init__(self, level, add_fraction=0.5, seed=0):
        if level < 0:
            raise NoiseError("noise level must be >= 0, got {}".format(level))
        if not 0 <= add_fraction <= 1:
            raise NoiseError("add_fraction must be in [0, 1], got {}".format(add_fraction))
        self.level = level
        self.add_fraction = add_fraction
        self.seed = seed

    def counts(self, num_edges):
        total = int(math.floor(self.level * num_edges + 0.5))
        additions = int(math.floor(total * self.add_fraction))
        return additions, total - additions


def _sample_non_edges(rng, n, count, existing_keys):
    """Uniformly samples count distinct pairs (u < v) whose keys are not in existing_keys"""
    chosen = np.zeros(0, dtype=np.int64)
    draws = 0
    cap = REJECTION_RETRY_FACTOR * count
    while len(chosen) < count and draws < cap:
        batch = max(16, 2 * (count - len(chosen)))
        u = rng.integers(0, n, size=batch)
        v = rng.integers(0, n, size=batch)
        draws += batch
        ok = u != v
        lo = np.minimum(u, v)[ok]
        hi = np.maximum(u, v)[ok]
        keys = lo * n + hi
        keys = keys[~np.isin(keys, existing_keys)]
        keys = keys[~np.isin(keys, chosen)]
        # Keep first occurrences in draw order
        _, first = np.unique(keys, return_index=True)
        keys = keys[np.sort(first)]
        chosen = np.concatenate([chosen, keys[:count - len(chosen)]])

    if len(chosen) < count:
        logger.info("Rejection sampling stalled after %d draws, enumerating non-edges", draws)
        all_lo, all_hi = np.triu_indices(n, k=1)
        all_keys = all_lo.astype(np.int64) * n + all_hi
        free = all_keys[~np.isin(all_keys, existing_keys) & ~np.isin(all_keys, chosen)]
        extra = rng.choice(free, size=count - len(chosen), replace=False)
        chosen = np.concatenate([chosen, extra])

    return chosen


def inject_random_noise(graph, spec):
    """Adds uniformly sampled fake edges and removes uniformly sampled real edges"""
    n = graph.num_nodes
    num_edges = graph.num_edges
    additions, deletions = spec.counts(num_edges)

    if deletions > num_edges:
        raise NoiseError("requested {} deletions, but the graph has only {} edges"
                         .format(deletions, num_edges))
    available = n * (n - 1) // 2 - num_edges
    if additions > available:
        raise NoiseError("graph too dense: requested {} additions, only {} non-edges available"
                         .format(additions, available))

    if additions == 0 and deletions == 0:
        return graph

    rng = np.random.default_rng(spec.seed)
    keys = graph.edge_keys()

    removed = rng.choice(num_edges, size=deletions, replace=False)
    keep = np.ones(num_edges, dtype=bool)
    keep[removed] = False

    added = _sample_non_edges(rng, n, additions, keys)

    new_keys = np.concatenate([keys[keep], added])
    logger.info("Noise level %.2f: added %d, removed %d edges", spec.level, additions, deletions)

    return graph.with_edges(new_keys // n, new_keys % n)


def changed_edge_ratio(original, noisy):
    if original.num_nodes != noisy.num_nodes:
        raise NoiseError("node count mismatch: {} vs {}"
                         .format(original.num_nodes, noisy.num_nodes))
    if original.num_edges == 0:
        raise NoiseError("original edge set empty")

    changed = np.setxor1d(original.edge_keys(), noisy.edge_keys(), assume_unique=True)
    return len(changed) / original.num_edges
