"""
Graph condensation: learns a small synthetic graph (A', X', Y') whose
training signal stands in for a large training graph.

Two condensers are provided. Distribution matching pulls the per-class mean
of X' towards the per-class mean of the propagated training features.
Gradient matching trains X' so that the gradients an SGC relay sees on X'
match, class by class, the gradients it sees on the training graph; the
condensed side is matched without structure and A' is synthesized from X'
afterwards.
"""
import logging

import numpy as np

from .graph import build_graph, normalize_dense, propagate
from .relay import init_weights, relay_gradient, softmax


logger = logging.getLogger(__name__)

# Steps whose loss stays above DIVERGENCE_FACTOR x the initial loss for
# DIVERGENCE_STEPS in a row abort gradient matching
DIVERGENCE_FACTOR = 10.0
DIVERGENCE_STEPS = 50

MAX_BACKTRACKS = 30


class CondenseError(Exception):
    pass


class CondensedGraph:
    def __init__(self, features, adjacency, labels, ratio, method, num_classes=None,
                 feature_offset=None):
        self.features = np.asarray(features, dtype=np.float64)
        self.adjacency = np.asarray(adjacency, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.ratio = ratio
        self.method = method
        self._num_classes = num_classes
        # Vector subtracted from the source graph features before condensing
        self.feature_offset = feature_offset

        n = len(self.labels)
        if self.features.shape[0] != n or self.adjacency.shape != (n, n):
            raise CondenseError("condensed graph shapes disagree: X' {}, A' {}, Y' {}"
                                .format(self.features.shape, self.adjacency.shape, n))

    @property
    def num_nodes(self):
        return len(self.labels)

    @property
    def num_classes(self):
        if self._num_classes is not None:
            return self._num_classes
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def normalized(self):
        return normalize_dense(self.adjacency)

    def to_graph(self):
        """Unweighted view: an edge wherever A' is nonzero off the diagonal"""
        u, v = np.nonzero(np.triu(self.adjacency, k=1))
        return build_graph(np.stack([u, v], axis=1), self.num_nodes, self.features,
                           self.labels, masks={'train': np.arange(self.num_nodes)},
                           num_classes=self.num_classes)


def init_condensed_labels(labels, ratio, num_classes=None):
    """
    Y' for the given training labels: each class gets max(1, round(ratio * count))
    nodes, rounding half up. The result is sorted by class.
    """
    if not 0 < ratio < 0.2:
        raise CondenseError("ratio must be in (0, 0.2), got {}".format(ratio))

    labels = np.asarray(labels, dtype=np.int64)
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if len(labels) else 0
    counts = np.bincount(labels[labels >= 0], minlength=num_classes)

    empty = np.nonzero(counts == 0)[0]
    if len(empty):
        raise CondenseError("class {} has no training nodes".format(empty[0]))

    per_class = np.maximum(1, np.floor(ratio * counts + 0.5).astype(np.int64))
    result = np.repeat(np.arange(num_classes), per_class)
    logger.info("Condensed labels: %d nodes for %d training nodes", len(result), counts.sum())

    return result


def init_condensed_features(graph, labels_c, seed):
    """Each condensed node starts as a copy of a random training node of its class"""
    rng = np.random.default_rng(seed)
    train = graph.train
    train_labels = graph.labels[train]

    features = np.empty((len(labels_c), graph.feature_dim))
    for c in np.unique(labels_c):
        rows = np.nonzero(labels_c == c)[0]
        members = train[train_labels == c]
        picked = rng.choice(members, size=len(rows), replace=len(rows) > len(members))
        features[rows] = graph.features[picked]

    return features


def synthesize_condensed_adjacency(features, threshold):
    """A'_ij = cos(X'_i, X'_j) where that exceeds threshold, else 0; unit diagonal"""
    if not 0 <= threshold < 1:
        raise CondenseError("adjacency threshold must be in [0, 1), got {}".format(threshold))

    norms = np.linalg.norm(features, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = features / safe[:, None]
    cos = np.clip(unit @ unit.T, -1.0, 1.0)
    adjacency = np.where(cos > threshold, cos, 0.0)
    adjacency = (adjacency + adjacency.T) / 2
    np.fill_diagonal(adjacency, 1.0)

    return adjacency


def _as_layers(g):
    return g if isinstance(g, (list, tuple)) else [g]


def _column_norms(g):
    return np.sqrt((g * g).sum(axis=0))


def gradient_distance(grads, grads_c):
    """
    Sum over layers and output columns of 1 - cos(g, g'). A zero column
    against a nonzero one counts 1; two zero columns count 0.
    """
    grads = _as_layers(grads)
    grads_c = _as_layers(grads_c)
    if len(grads) != len(grads_c):
        raise CondenseError("layer count mismatch: {} vs {}".format(len(grads), len(grads_c)))

    total = 0.0
    for p, (g, gc) in enumerate(zip(grads, grads_c)):
        if g.shape != gc.shape:
            raise CondenseError("layer {}: shape mismatch {} vs {}".format(p, g.shape, gc.shape))
        na = _column_norms(g)
        nb = _column_norms(gc)
        both = (na > 0) & (nb > 0)
        dots = (g * gc).sum(axis=0)
        total += float((1.0 - dots[both] / (na[both] * nb[both])).sum())
        total += float(np.count_nonzero((na > 0) != (nb > 0)))

    return total


def _distance_gradient(g, gc):
    """d/dG' of gradient_distance(G, G') for one layer; zero on degenerate columns"""
    na = _column_norms(g)
    nb = _column_norms(gc)
    both = (na > 0) & (nb > 0)
    result = np.zeros_like(gc)
    if not both.any():
        return result

    a = na[both]
    b = nb[both]
    dots = (g[:, both] * gc[:, both]).sum(axis=0)
    result[:, both] = -(g[:, both] / (a * b) - dots * gc[:, both] / (a * b ** 3))

    return result


def matching_objective(x_cond, onehot_cond, weights, real_gradient):
    """
    Distance between real_gradient and the relay gradient on (x_cond, onehot_cond),
    with its gradient with respect to x_cond.
    """
    n = len(x_cond)
    probs = softmax(x_cond @ weights)
    residual = probs - onehot_cond
    grad_c = x_cond.T @ residual / n

    distance = gradient_distance(real_gradient, grad_c)
    b = _distance_gradient(real_gradient, grad_c)

    # Through the explicit X' factor of G' = X'ᵀ (P - Y') / n
    direct = residual @ b.T / n
    # Through P = softmax(X' W)
    m = x_cond @ b / n
    d_logits = probs * (m - (m * probs).sum(axis=1, keepdims=True))

    return distance, direct + d_logits @ weights.T


def _one_hot(labels, num_classes):
    result = np.zeros((len(labels), num_classes))
    result[np.arange(len(labels)), labels] = 1.0
    return result


class _Condenser:
    method = None

    def __init__(self, graph, adj, config):
        self.graph = graph
        self.config = config
        self.labels = init_condensed_labels(graph.labels[graph.train], config.ratio,
                                            num_classes=graph.num_classes)
        self.features = init_condensed_features(graph, self.labels, config.seed)
        self.epoch = 0
        self.losses = []
        self.set_structure(adj)

    def set_structure(self, adj):
        """Recomputes the training-side targets for a new (denoised) normalized adjacency"""
        self.embeddings = propagate(adj, self.graph.features,
                                    self.config.relay_propagation_steps)[self.graph.train]

    def step(self):
        raise NotImplementedError()

    def run(self, epochs=None):
        epochs = self.config.outer_epochs if epochs is None else epochs
        for _ in range(epochs):
            self.step()
        return self

    def condensed(self):
        return CondensedGraph(self.features,
                              synthesize_condensed_adjacency(self.features,
                                                             self.config.adjacency_threshold),
                              self.labels,
                              len(self.labels) / len(self.graph.train),
                              self.method,
                              num_classes=self.graph.num_classes)

    def _check_loss(self, loss):
        if not np.isfinite(loss):
            raise CondenseError("{} matching: non-finite loss at epoch {}"
                                .format(self.method, self.epoch))


class DistributionMatchingCondenser(_Condenser):
    method = 'distribution'

    def set_structure(self, adj):
        super().set_structure(adj)
        train_labels = self.graph.labels[self.graph.train]
        self.targets = np.stack([self.embeddings[train_labels == c].mean(axis=0)
                                 for c in range(self.graph.num_classes)])
        self.lr = self.config.feature_lr

    def loss(self, features=None):
        features = self.features if features is None else features
        total = 0.0
        for c in range(self.graph.num_classes):
            diff = self.targets[c] - features[self.labels == c].mean(axis=0)
            total += float(diff @ diff)
        return total

    def _gradient(self):
        grad = np.zeros_like(self.features)
        for c in range(self.graph.num_classes):
            rows = self.labels == c
            diff = self.targets[c] - self.features[rows].mean(axis=0)
            grad[rows] = -2.0 * diff / np.count_nonzero(rows)
        return grad

    def step(self):
        loss = self.loss()
        self._check_loss(loss)
        if loss > 0:
            grad = self._gradient()
            for _ in range(MAX_BACKTRACKS):
                candidate = self.features - self.lr * grad
                new_loss = self.loss(candidate)
                self._check_loss(new_loss)
                if new_loss < loss:
                    self.features = candidate
                    loss = new_loss
                    break
                self.lr /= 2

        self.losses.append(loss)
        logger.info("distribution matching epoch %d: loss %.6g", self.epoch, loss)
        self.epoch += 1


class GradientMatchingCondenser(_Condenser):
    method = 'gradient'

    def __init__(self, graph, adj, config):
        self.rng = np.random.default_rng([config.seed, 1])
        self.initial_loss = None
        self.diverging = 0
        super().__init__(graph, adj, config)

    def set_structure(self, adj):
        super().set_structure(adj)
        num_classes = self.graph.num_classes
        train_labels = self.graph.labels[self.graph.train]
        self.real_by_class = [(self.embeddings[train_labels == c],
                               _one_hot(np.full(np.count_nonzero(train_labels == c), c),
                                        num_classes))
                              for c in range(num_classes)]

    def _match(self, weights):
        """Sum over classes of the matching distance, and its gradient for X'"""
        total = 0.0
        grad = np.zeros_like(self.features)
        num_classes = self.graph.num_classes
        for c, (real, real_onehot) in enumerate(self.real_by_class):
            rows = self.labels == c
            x_c = self.features[rows]
            distance, d_x = matching_objective(
                x_c, _one_hot(self.labels[rows], num_classes), weights,
                relay_gradient(weights, real, real_onehot))
            total += distance
            grad[rows] = d_x
        return total, grad

    def _track_divergence(self, loss):
        self._check_loss(loss)
        if self.initial_loss is None:
            self.initial_loss = loss
        if loss > DIVERGENCE_FACTOR * self.initial_loss:
            self.diverging += 1
            if self.diverging >= DIVERGENCE_STEPS:
                raise CondenseError("gradient matching diverged: loss {:.6g} vs initial {:.6g}"
                                    .format(loss, self.initial_loss))
        else:
            self.diverging = 0

    def step(self):
        num_classes = self.graph.num_classes
        onehot_c = _one_hot(self.labels, num_classes)
        epoch_loss = 0.0
        for _ in range(self.config.relay_inits):
            weights = init_weights(self.rng, self.features.shape[1], num_classes)
            for _ in range(self.config.match_steps):
                loss, grad = self._match(weights)
                self._track_divergence(loss)
                epoch_loss += loss
                self.features = self.features - self.config.feature_lr * grad
                # The relay only ever trains on the condensed graph
                weights = weights - self.config.relay_lr * relay_gradient(
                    weights, self.features, onehot_c)

        epoch_loss /= max(1, self.config.relay_inits * self.config.match_steps)
        self.losses.append(epoch_loss)
        logger.info("gradient matching epoch %d: mean loss %.6g", self.epoch, epoch_loss)
        self.epoch += 1


CONDENSERS = {
    'distribution': DistributionMatchingCondenser,
    'gradient': GradientMatchingCondenser,
}


def make_condenser(graph, adj, config):
    return CONDENSERS[config.method](graph, adj, config)


def condense_distribution_matching(graph, adj, config):
    return DistributionMatchingCondenser(graph, adj, config).run().condensed()


def condense_gradient_matching(graph, adj, config):
    return GradientMatchingCondenser(graph, adj, config).run().condensed()


def condense(graph, adj, config):
    return make_condenser(graph, adj, config).run().condensed()
