"""
Graph classifiers trained by full-batch gradient descent with hand-derived
gradients: SGC (a linear classifier on propagated features, used as the
condensation relay and downstream) and a two-layer GCN (downstream).
"""
import logging
import os

import numpy as np

from .graph import normalize, normalize_dense, propagate
from .utils import atomic_writer, read_matrix_bin, write_matrix_bin


logger = logging.getLogger(__name__)

MANIFEST = 'model.txt'


class RelayError(Exception):
    pass


def softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits, onehot):
    """Mean cross-entropy of softmax(logits) against one-hot rows"""
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return float(-(onehot * log_probs).sum() / len(onehot))


def relay_gradient(weights, embeddings, labels_onehot):
    """d/dW of the mean cross-entropy of softmax(Z W): Zᵀ(softmax(ZW) - Y) / n"""
    if embeddings.shape[1] != weights.shape[0] or labels_onehot.shape != \
            (embeddings.shape[0], weights.shape[1]):
        raise RelayError("shape mismatch: W {}, Z {}, Y {}"
                         .format(weights.shape, embeddings.shape, labels_onehot.shape))

    probs = softmax(embeddings @ weights)
    return embeddings.T @ (probs - labels_onehot) / len(embeddings)


def init_weights(rng, fan_in, fan_out):
    return rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)


def _one_hot(labels, num_classes):
    result = np.zeros((len(labels), num_classes))
    result[np.arange(len(labels)), labels] = 1.0
    return result


class LinearGraphModel:
    kind = 'sgc'

    def __init__(self, steps, weights):
        self.steps = steps
        self.weights = weights

    def embed(self, adj, features):
        return propagate(adj, features, self.steps)

    def logits(self, adj, features):
        return self.embed(adj, features) @ self.weights

    def weight_matrices(self):
        return {'W': self.weights}

    def loss_and_gradients(self, embeddings, onehot, weight_decay):
        loss = cross_entropy(embeddings @ self.weights, onehot)
        loss += 0.5 * weight_decay * float((self.weights ** 2).sum())
        grad = relay_gradient(self.weights, embeddings, onehot) + weight_decay * self.weights
        return loss, {'W': grad}

    def apply(self, grads, lr):
        return LinearGraphModel(self.steps, self.weights - lr * grads['W'])


class TwoLayerGCN:
    """softmax(Â · ReLU(Â X W1) · W2)"""
    kind = 'gcn'

    def __init__(self, w1, w2):
        self.w1 = w1
        self.w2 = w2

    @property
    def hidden(self):
        return self.w1.shape[1]

    def _forward(self, adj, ax):
        z1 = ax @ self.w1
        h1 = np.maximum(z1, 0.0)
        ah = adj.dot(h1)
        return z1, ah, ah @ self.w2

    def logits(self, adj, features):
        return self._forward(adj, adj.dot(features))[2]

    def weight_matrices(self):
        return {'W1': self.w1, 'W2': self.w2}

    def loss_and_gradients(self, adj, ax, onehot, mask, weight_decay):
        """
        Loss over the rows in mask, and its gradients. ax is Â·X, which does
        not depend on the weights. Â is symmetric, so Âᵀ = Â in the backward pass.
        """
        z1, ah, logits = self._forward(adj, ax)
        n = len(mask)

        loss = cross_entropy(logits[mask], onehot)
        loss += 0.5 * weight_decay * float((self.w1 ** 2).sum() + (self.w2 ** 2).sum())

        d_logits = np.zeros_like(logits)
        d_logits[mask] = (softmax(logits[mask]) - onehot) / n
        d_w2 = ah.T @ d_logits + weight_decay * self.w2
        d_h1 = adj.dot(d_logits @ self.w2.T)
        d_z1 = d_h1 * (z1 > 0)
        d_w1 = ax.T @ d_z1 + weight_decay * self.w1

        return loss, {'W1': d_w1, 'W2': d_w2}

    def apply(self, grads, lr):
        return TwoLayerGCN(self.w1 - lr * grads['W1'], self.w2 - lr * grads['W2'])


def evaluate_accuracy(model, adj, features, labels, eval_mask):
    """Argmax accuracy on eval_mask; ties go to the lowest class id"""
    eval_mask = np.asarray(eval_mask, dtype=np.int64)
    if len(eval_mask) == 0:
        raise RelayError("evaluation mask is empty")

    predictions = np.argmax(model.logits(adj, features)[eval_mask], axis=1)
    return float(np.count_nonzero(predictions == np.asarray(labels)[eval_mask])) / len(eval_mask)


class _EarlyStopping:
    def __init__(self, validation, patience):
        self.validation = validation
        self.patience = patience
        self.best_accuracy = -1.0
        self.best_model = None
        self.since_best = 0

    def update(self, model):
        """Returns True when training should stop"""
        if self.validation is None or self.patience == 0:
            return False

        accuracy = evaluate_accuracy(model, *self.validation)
        if accuracy > self.best_accuracy:
            self.best_accuracy = accuracy
            self.best_model = model
            self.since_best = 0
        else:
            self.since_best += 1

        return self.since_best >= self.patience

    def final(self, model):
        return self.best_model if self.best_model is not None else model


def _check_train_mask(train_mask, labels):
    train_mask = np.asarray(train_mask, dtype=np.int64)
    if len(train_mask) == 0:
        raise RelayError("training mask is empty")
    bad = train_mask[np.asarray(labels)[train_mask] < 0]
    if len(bad):
        raise RelayError("training node {} is unlabeled".format(bad[0]))
    return train_mask


def _num_classes(labels, num_classes):
    return num_classes if num_classes is not None else int(np.max(labels)) + 1


def _descend(model, step, config, validation, name):
    stopping = _EarlyStopping(validation, config.patience)
    loss = None
    for epoch in range(config.epochs):
        loss, grads = step(model)
        if not np.isfinite(loss):
            raise RelayError("{}: non-finite loss at epoch {}".format(name, epoch))
        model = model.apply(grads, config.learning_rate)
        if stopping.update(model):
            logger.info("%s: early stop at epoch %d, validation accuracy %.4f",
                        name, epoch, stopping.best_accuracy)
            break

    if loss is not None:
        logger.info("%s: final training loss %.6f", name, loss)

    return stopping.final(model)


def train_sgc(adj, features, labels, train_mask, config, validation=None, num_classes=None):
    """
    validation, if given, is (adj, features, labels, mask) used for early
    stopping on accuracy.
    """
    train_mask = _check_train_mask(train_mask, labels)
    num_classes = _num_classes(labels, num_classes)
    rng = np.random.default_rng(config.seed)

    embeddings = propagate(adj, features, config.steps)[train_mask]
    onehot = _one_hot(np.asarray(labels)[train_mask], num_classes)
    model = LinearGraphModel(config.steps, init_weights(rng, features.shape[1], num_classes))

    return _descend(model,
                    lambda m: m.loss_and_gradients(embeddings, onehot, config.weight_decay),
                    config, validation, 'sgc')


def train_gcn(adj, features, labels, train_mask, config, validation=None, num_classes=None):
    train_mask = _check_train_mask(train_mask, labels)
    num_classes = _num_classes(labels, num_classes)
    rng = np.random.default_rng(config.seed)

    ax = adj.dot(features)
    onehot = _one_hot(np.asarray(labels)[train_mask], num_classes)
    model = TwoLayerGCN(init_weights(rng, features.shape[1], config.hidden),
                        init_weights(rng, config.hidden, num_classes))

    return _descend(model,
                    lambda m: m.loss_and_gradients(adj, ax, onehot, train_mask,
                                                   config.weight_decay),
                    config, validation, 'gcn')


TRAINERS = {
    'sgc': train_sgc,
    'gcn': train_gcn,
}


def train_model(kind, adj, features, labels, train_mask, config, validation=None,
                num_classes=None):
    try:
        trainer = TRAINERS[kind]
    except KeyError:
        raise RelayError("unknown model {!r}".format(kind)) from None

    return trainer(adj, features, labels, train_mask, config,
                   validation=validation, num_classes=num_classes)


def graph_validation(graph):
    """Early-stopping tuple for a graph's validation mask, or None"""
    if graph is None or len(graph.val) == 0:
        return None
    return normalize(graph), graph.features, graph.labels, graph.val


def train_on_graph(graph, config, model='gcn', validation_graph=None):
    """Trains on a graph's training nodes (the Whole Dataset reference)"""
    return train_model(model, normalize(graph), graph.features, graph.labels, graph.train,
                       config, validation=graph_validation(validation_graph),
                       num_classes=graph.num_classes)


def train_on_condensed(condensed, config, model='gcn', validation_graph=None):
    """Trains on (A', X', Y'), every condensed node labeled"""
    return train_model(model, normalize_dense(condensed.adjacency), condensed.features,
                       condensed.labels, np.arange(condensed.num_nodes), config,
                       validation=graph_validation(validation_graph),
                       num_classes=condensed.num_classes)


def evaluate_on_graph(model, graph):
    return evaluate_accuracy(model, normalize(graph), graph.features, graph.labels, graph.test)


def train_on_condensed_eval_on_graph(condensed, test_graph, config, model='gcn',
                                     validation_graph=None):
    trained = train_on_condensed(condensed, config, model=model,
                                 validation_graph=validation_graph)
    return evaluate_on_graph(trained, test_graph)


def save_model(model, directory):
    """Writes one <name>.bin per weight matrix and a one-line manifest"""
    os.makedirs(directory, exist_ok=True)
    matrices = model.weight_matrices()
    for name, matrix in matrices.items():
        with atomic_writer(os.path.join(directory, name + '.bin'), binary=True) as writer:
            write_matrix_bin(writer, matrix)

    steps = getattr(model, 'steps', 0)
    with atomic_writer(os.path.join(directory, MANIFEST)) as writer:
        writer.write("{} {} {}\n".format(model.kind, steps,
                                         ' '.join(name + '.bin' for name in matrices)))


def load_model(directory):
    try:
        with open(os.path.join(directory, MANIFEST), 'r') as f:
            fields = f.readline().split()
    except FileNotFoundError:
        raise RelayError("{} not found in {}".format(MANIFEST, directory)) from None

    if len(fields) < 3:
        raise RelayError("{}: malformed manifest".format(directory))

    kind, steps, files = fields[0], int(fields[1]), fields[2:]
    try:
        matrices = [read_matrix_bin(os.path.join(directory, f)) for f in files]
    except (OSError, ValueError) as e:
        raise RelayError(str(e)) from None

    if kind == 'sgc' and len(matrices) == 1:
        return LinearGraphModel(steps, matrices[0])
    elif kind == 'gcn' and len(matrices) == 2:
        return TwoLayerGCN(*matrices)

    raise RelayError("{}: unknown model {} with {} matrices".format(directory, kind, len(files)))
