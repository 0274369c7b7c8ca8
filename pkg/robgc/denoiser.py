"""
Structure denoising guided by a condensed graph.

Edges are scored by the cosine between two per-node vectors: a node's own
features followed by its correlation with every condensed node, and the
other node's features followed by that correlation propagated over the
condensed graph. Edges scoring at or below eps1 are deleted, and nearby
non-edges scoring above eps2 are added. The thresholds are chosen by a
lattice search that maximizes label-propagation accuracy on held-out
training nodes.
"""
from concurrent.futures import ThreadPoolExecutor
import logging

import numpy as np

from .condenser import make_condenser
from .graph import EdgeCandidateSet, khop_candidates, normalize, normalize_dense
from .models import Thresholds
from .utils import get_thread_count, stage


logger = logging.getLogger(__name__)

# Edges scored per block by edge_reliability
EDGE_BLOCK = 65536


class DenoiseError(Exception):
    pass


class ReliabilityCounters:
    """Work done by one reliability pass: correlation entries built and pairs scored"""
    def __init__(self):
        self.reset()

    def reset(self):
        self.pairs_scored = 0
        self.correlation_entries = 0


COUNTERS = ReliabilityCounters()


def _unit_rows(matrix):
    norms = np.linalg.norm(matrix, axis=1)
    return matrix / np.where(norms > 0, norms, 1.0)[:, None]


def correlation_matrix(features, features_c):
    """E_ij = cos(X_i, X'_j); a zero row correlates 0 with everything"""
    if features.shape[1] != features_c.shape[1]:
        raise DenoiseError("feature dimension mismatch: {} vs {}"
                           .format(features.shape[1], features_c.shape[1]))

    return np.clip(_unit_rows(features) @ _unit_rows(features_c).T, -1.0, 1.0)


class CorrelationBundle:
    """E (N x N') and U^(0)..U^(K) (each N' x N), with U^(0) = Eᵀ"""
    def __init__(self, correlation, u_powers):
        self.correlation = correlation
        self.u_powers = u_powers

    @property
    def order(self):
        return len(self.u_powers) - 1

    @property
    def num_nodes(self):
        return self.correlation.shape[0]


def propagate_correlation(adjacency_c, correlation, order, propagate=True):
    """
    U^(k) = Â' U^(k-1), Â' the normalized self-looped condensed adjacency.
    With propagate=False every order repeats U^(0).
    """
    adjacency_c = np.asarray(adjacency_c)
    if adjacency_c.shape != (correlation.shape[1], correlation.shape[1]):
        raise DenoiseError("condensed adjacency has shape {}, expected {}x{}"
                           .format(adjacency_c.shape, correlation.shape[1],
                                   correlation.shape[1]))
    if order < 0:
        raise DenoiseError("correlation order must be >= 0, got {}".format(order))

    adj = normalize_dense(adjacency_c)
    u_powers = [correlation.T]
    for _ in range(order):
        u_powers.append(adj.dot(u_powers[-1]) if propagate else u_powers[0])

    COUNTERS.correlation_entries += correlation.size * len(u_powers)

    return CorrelationBundle(correlation, u_powers)


def build_correlation(features, condensed, config):
    """The bundle for scoring against a condensed graph, or None for feature-only scoring"""
    if condensed is None or not config.use_correlation:
        return None

    if features.shape[1] != condensed.features.shape[1]:
        raise DenoiseError("graph has {} features, condensed graph has {}"
                           .format(features.shape[1], condensed.features.shape[1]))

    return propagate_correlation(condensed.adjacency,
                                 correlation_matrix(features, condensed.features),
                                 config.k, propagate=config.use_propagation)


class ReliabilityScores:
    def __init__(self, u, v, scores):
        self.u = u
        self.v = v
        self.scores = scores

    def __len__(self):
        return len(self.scores)

    def subset(self, mask):
        return ReliabilityScores(self.u[mask], self.v[mask], self.scores[mask])


def _pair_arrays(edges):
    if isinstance(edges, EdgeCandidateSet):
        return edges.u, edges.v
    u, v = edges
    return np.asarray(u, dtype=np.int64), np.asarray(v, dtype=np.int64)


def edge_reliability(features, bundle, edges):
    """
    Scores (i, j) as cos([X_i | E_i ... E_i], [X_j | U^(0)ᵀ_j ... U^(K)ᵀ_j]),
    E_i repeated K+1 times. With bundle=None only the feature blocks remain.

    Both vectors are linear in blocks that can be collapsed per node, so
    scoring an edge costs O(d + N') and no pairwise matrix is formed.
    """
    u, v = _pair_arrays(edges)
    n = features.shape[0]
    bad = np.nonzero((u < 0) | (u >= n) | (v < 0) | (v >= n))[0]
    if len(bad):
        raise DenoiseError("pair ({}, {}) has an endpoint outside [0, {})"
                           .format(u[bad[0]], v[bad[0]], n))
    if bundle is not None and bundle.num_nodes != n:
        raise DenoiseError("correlation covers {} nodes, features have {}"
                           .format(bundle.num_nodes, n))

    sq_features = (features * features).sum(axis=1)
    if bundle is None:
        left_sq = right_sq = sq_features
        u_sum_t = None
    else:
        e = bundle.correlation
        left_sq = sq_features + (bundle.order + 1) * (e * e).sum(axis=1)
        right_sq = sq_features + sum((p * p).sum(axis=0) for p in bundle.u_powers)
        u_sum_t = sum(bundle.u_powers).T

    scores = np.empty(len(u))
    for start in range(0, len(u), EDGE_BLOCK):
        bu = u[start:start + EDGE_BLOCK]
        bv = v[start:start + EDGE_BLOCK]
        dots = (features[bu] * features[bv]).sum(axis=1)
        if u_sum_t is not None:
            dots += (bundle.correlation[bu] * u_sum_t[bv]).sum(axis=1)
        norms = np.sqrt(left_sq[bu] * right_sq[bv])
        safe = np.where(norms > 0, norms, 1.0)
        scores[start:start + EDGE_BLOCK] = np.where(norms > 0, dots / safe, 0.0)

    COUNTERS.pairs_scored += len(u)

    return ReliabilityScores(u, v, np.clip(scores, -1.0, 1.0))


def delete_unreliable(graph, scores, eps1):
    """Keeps the edges scoring above eps1"""
    if len(scores) != graph.num_edges or \
            not np.array_equal(scores.u * graph.num_nodes + scores.v, graph.edge_keys()):
        raise DenoiseError("scores do not cover the graph's {} edges".format(graph.num_edges))

    keep = scores.scores > eps1
    return graph.with_edges(graph.edge_u[keep], graph.edge_v[keep])


def _knn_mask(candidates, scores, r_nn):
    count = len(candidates)
    if len(scores) != count:
        raise DenoiseError("{} scores for {} candidates".format(len(scores), count))

    node = np.concatenate([candidates.u, candidates.v])
    partner = np.concatenate([candidates.v, candidates.u])
    score = np.concatenate([scores.scores, scores.scores])
    pair = np.concatenate([np.arange(count), np.arange(count)])

    order = np.lexsort((partner, -score, node))
    node = node[order]
    # Position of each entry within its node's run of the sorted order
    starts = np.searchsorted(node, node, side='left')
    rank = np.arange(len(node)) - starts

    mask = np.zeros(count, dtype=bool)
    mask[pair[order][rank < r_nn]] = True

    return mask


def select_knn_candidates(candidates, scores, r_nn):
    """
    Keeps, for every node, its r_nn best-scoring candidate partners (ties to
    the lower node id). A pair survives if either endpoint selected it.
    """
    return candidates.subset(_knn_mask(candidates, scores, r_nn))


def add_reliable(graph, candidates, scores, eps2):
    """Adds the candidates scoring above eps2"""
    if len(scores) != len(candidates):
        raise DenoiseError("{} scores for {} candidates".format(len(scores), len(candidates)))

    n = graph.num_nodes
    overlap = np.nonzero(np.isin(candidates.u * n + candidates.v, graph.edge_keys()))[0]
    if len(overlap):
        k = overlap[0]
        raise DenoiseError("candidate ({}, {}) is already an edge"
                           .format(candidates.u[k], candidates.v[k]))

    add = scores.scores > eps2
    return graph.with_edges(np.concatenate([graph.edge_u, candidates.u[add]]),
                            np.concatenate([graph.edge_v, candidates.v[add]]))


def label_propagate(adj, seeds, alpha, iterations):
    """Y^(k) = alpha Â Y^(k-1) + (1 - alpha) Y^(0), starting from Y^(0) = seeds"""
    if seeds.shape[0] != adj.num_nodes:
        raise DenoiseError("seed matrix has {} rows, graph has {} nodes"
                           .format(seeds.shape[0], adj.num_nodes))
    if not 0 < alpha < 1:
        raise DenoiseError("alpha must be in (0, 1), got {}".format(alpha))

    result = seeds
    for _ in range(iterations):
        result = alpha * adj.dot(result) + (1 - alpha) * seeds

    return result


def lp_objective(propagated, labels, query_nodes):
    """Number of query nodes whose argmax (lowest class on ties) is their label"""
    query_nodes = np.asarray(query_nodes, dtype=np.int64)
    if len(query_nodes) == 0:
        raise DenoiseError("query set is empty")

    predicted = np.argmax(propagated[query_nodes], axis=1)
    return int(np.count_nonzero(predicted == np.asarray(labels)[query_nodes]))


def _support_split(graph, config):
    train = graph.train
    if len(train) < 2:
        raise DenoiseError("need at least 2 training nodes to split support and query, got {}"
                           .format(len(train)))

    rng = np.random.default_rng(config.seed)
    shuffled = rng.permutation(train)
    count = min(len(train) - 1, max(1, int(round(config.support_fraction * len(train)))))

    return np.sort(shuffled[:count]), np.sort(shuffled[count:])


def lattice(scores, count):
    """count evenly spaced points from min(scores) to max(scores)"""
    lo = float(scores.min())
    hi = float(scores.max())
    step = (hi - lo) / (count - 1)
    return [lo + m * step for m in range(count)]


class _ScoredGraph:
    """Scores of a graph's edges and of its selected nearby non-edges"""
    def __init__(self, graph, condensed, config, timer=None):
        COUNTERS.reset()
        with stage(timer, 'correlation'):
            bundle = build_correlation(graph.features, condensed, config)
            self.edges = edge_reliability(graph.features, bundle, (graph.edge_u, graph.edge_v))

            all_candidates = khop_candidates(graph, config.hops) if config.use_addition \
                else EdgeCandidateSet([], [])
            all_scores = edge_reliability(graph.features, bundle, all_candidates)
            mask = _knn_mask(all_candidates, all_scores, config.r_nn)
            self.candidates = all_candidates.subset(mask)
            self.candidate_scores = all_scores.subset(mask)

        logger.debug("Reliability pass: %d pairs scored, %d correlation entries",
                     COUNTERS.pairs_scored, COUNTERS.correlation_entries)

    def all_scores(self):
        return np.concatenate([self.edges.scores, self.candidate_scores.scores])


def _edit(graph, scored, eps1, eps2, config):
    after_delete = delete_unreliable(graph, scored.edges, eps1) if config.use_deletion else graph
    after_add = add_reliable(after_delete, scored.candidates, scored.candidate_scores, eps2) \
        if config.use_addition else after_delete
    return after_delete, after_add


def grid_search_thresholds(graph, condensed, config, timer=None):
    """
    Chooses (eps1, eps2) on the score lattice by label propagation from a
    seeded support half of the training nodes to the other half. Ties go to
    the larger eps1, then the larger eps2. With condensed=None scores use the
    node features only.

    Returns (Thresholds, denoised graph).
    """
    scored = _ScoredGraph(graph, condensed, config, timer=timer)

    with stage(timer, 'search'):
        support, query = _support_split(graph, config)
        seeds = np.zeros((graph.num_nodes, graph.num_classes))
        seeds[support, graph.labels[support]] = 1.0

        scores = scored.all_scores()
        if len(scores) == 0 or scores.min() == scores.max():
            value = float(scores[0]) if len(scores) else 0.0
            logger.warning("Degenerate threshold lattice: every score is %.6g", value)
            points = [value]
        else:
            points = lattice(scores, config.candidates)
        eps1_axis = points if config.use_deletion else [-1.0]
        eps2_axis = points if config.use_addition else [1.0]

        def evaluate_row(eps1):
            after_delete = delete_unreliable(graph, scored.edges, eps1) \
                if config.use_deletion else graph
            row = []
            for eps2 in eps2_axis:
                edited = add_reliable(after_delete, scored.candidates,
                                      scored.candidate_scores, eps2) \
                    if config.use_addition else after_delete
                propagated = label_propagate(normalize(edited), seeds, config.alpha,
                                             config.lp_iterations)
                row.append((eps1, eps2, lp_objective(propagated, graph.labels, query)))
            return row

        threads = min(get_thread_count(), len(eps1_axis))
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as executor:
                rows = list(executor.map(evaluate_row, eps1_axis))
        else:
            rows = [evaluate_row(eps1) for eps1 in eps1_axis]

        trace = [list(entry) for row in rows for entry in row]
        best_eps1, best_eps2, best_count = max(
            trace, key=lambda entry: (entry[2], entry[0], entry[1]))

        _, denoised = _edit(graph, scored, best_eps1, best_eps2, config)

    logger.info("Selected eps1=%.4f eps2=%.4f (%d/%d query nodes correct of %d pairs); "
                "edges %d -> %d",
                best_eps1, best_eps2, best_count, len(query), len(trace),
                graph.num_edges, denoised.num_edges)

    return Thresholds(eps1=best_eps1, eps2=best_eps2, trace=trace), denoised


def warmup_denoise(graph, config, timer=None):
    """Threshold search with feature-only reliability; returns the denoised graph"""
    return grid_search_thresholds(graph, None, config, timer=timer)[1]


def alternating_optimize(train_graph, condense_config, denoise_config, timer=None):
    """
    Warm-up denoising, then condensation epochs against the current structure.
    Every `period` epochs the thresholds are searched again on the original
    training graph against the current condensed graph, and the condenser
    switches to the new structure.

    Returns (condensed graph, Thresholds, denoised training graph).
    """
    with stage(timer, 'denoise'):
        thresholds, denoised = grid_search_thresholds(train_graph, None, denoise_config,
                                                      timer=timer)

    with stage(timer, 'condense'):
        condenser = make_condenser(train_graph, normalize(denoised), condense_config)

    for epoch in range(1, condense_config.outer_epochs + 1):
        with stage(timer, 'condense'):
            condenser.step()

        if epoch % denoise_config.period == 0:
            with stage(timer, 'denoise'):
                thresholds, denoised = grid_search_thresholds(
                    train_graph, condenser.condensed(), denoise_config, timer=timer)
            condenser.set_structure(normalize(denoised))

    return condenser.condensed(), thresholds, denoised


def apply_thresholds(graph, condensed, thresholds, config, timer=None):
    """
    Scores graph against the condensed graph and applies frozen thresholds.
    Returns (graph after deletion, graph after deletion and addition).
    """
    if condensed is not None and graph.feature_dim != condensed.features.shape[1]:
        raise DenoiseError("graph has {} features, condensed graph has {}"
                           .format(graph.feature_dim, condensed.features.shape[1]))

    scored = _ScoredGraph(graph, condensed, config, timer=timer)
    with stage(timer, 'delete'):
        after_delete = delete_unreliable(graph, scored.edges, thresholds.eps1) \
            if config.use_deletion else graph
    with stage(timer, 'add'):
        after_add = add_reliable(after_delete, scored.candidates, scored.candidate_scores,
                                 thresholds.eps2) if config.use_addition else after_delete

    logger.info("Test-time denoising: edges %d -> %d after deletion -> %d after addition",
                graph.num_edges, after_delete.num_edges, after_add.num_edges)

    return after_delete, after_add


def test_time_denoise(test_graph, condensed, thresholds, config, timer=None):
    return apply_thresholds(test_graph, condensed, thresholds, config, timer=timer)[1]
