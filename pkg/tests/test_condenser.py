import numpy as np
import pytest
from pytest import raises

from robgc.condenser import (condense, condense_distribution_matching, condense_gradient_matching,
                             CondensedGraph, CondenseError, DistributionMatchingCondenser,
                             gradient_distance, GradientMatchingCondenser,
                             init_condensed_features, init_condensed_labels, make_condenser,
                             matching_objective, synthesize_condensed_adjacency)
from robgc.graph import normalize
from robgc.relay import init_weights
from .utils import (central_difference, dense_adjacency, dense_normalize, fast_condense_config,
                    random_graph, relative_error, sbm_bundle)


def test_init_condensed_labels():
    labels = np.array([0] * 10 + [1] * 25 + [2] * 3)
    np.random.default_rng(0).shuffle(labels)
    # 1.0 -> 1, 2.5 -> 3 (half up), 0.3 -> 0 -> at least 1
    assert init_condensed_labels(labels, 0.1).tolist() == [0, 1, 1, 1, 2]


def test_init_condensed_labels_half_up():
    assert init_condensed_labels([0] * 10 + [1] * 30, 0.05).tolist() == [0, 1, 1]


@pytest.mark.parametrize('labels,ratio,num_classes,message', [
    ([0, 1], 0.2, None, r"ratio must be in \(0, 0.2\), got 0.2"),
    ([0, 1], 0.0, None, r"ratio must be in \(0, 0.2\)"),
    ([0, 2], 0.1, None, r"class 1 has no training nodes"),
    ([0, 1], 0.1, 3, r"class 2 has no training nodes"),
])
def test_init_condensed_labels_errors(labels, ratio, num_classes, message):
    with raises(CondenseError, match=message):
        init_condensed_labels(labels, ratio, num_classes=num_classes)


def test_init_condensed_features():
    rng = np.random.default_rng(1)
    graph = random_graph(rng, 30, train_fraction=0.5)
    labels_c = init_condensed_labels(graph.labels[graph.train], 0.1,
                                     num_classes=graph.num_classes)
    features = init_condensed_features(graph, labels_c, seed=3)

    assert features.shape == (len(labels_c), graph.feature_dim)
    for row, c in zip(features, labels_c):
        members = graph.train[graph.labels[graph.train] == c]
        assert any(np.array_equal(row, graph.features[m]) for m in members)

    assert np.array_equal(features, init_condensed_features(graph, labels_c, seed=3))


def test_condensed_graph():
    features = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    adjacency = np.array([[1.0, 0.0, 0.8], [0.0, 1.0, 0.0], [0.8, 0.0, 1.0]])
    condensed = CondensedGraph(features, adjacency, [0, 1, 1], 0.05, 'gradient')

    assert condensed.num_nodes == 3
    assert condensed.num_classes == 2
    graph = condensed.to_graph()
    assert graph.edge_set() == {(0, 2)}
    assert graph.train.tolist() == [0, 1, 2]
    assert np.allclose(condensed.normalized().to_dense(), dense_normalize(adjacency - np.eye(3)))

    with raises(CondenseError, match=r"condensed graph shapes disagree"):
        CondensedGraph(features, np.eye(2), [0, 1, 1], 0.05, 'gradient')


def test_synthesize_condensed_adjacency():
    features = np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [-1.0, 0.0], [0.0, 0.0]])
    adjacency = synthesize_condensed_adjacency(features, 0.5)
    s = 1 / np.sqrt(2)
    expected = np.array([
        [1, s, 0, 0, 0],
        [s, 1, s, 0, 0],
        [0, s, 1, 0, 0],
        [0, 0, 0, 1, 0],
        [0, 0, 0, 0, 1],
    ])
    assert np.allclose(adjacency, expected)
    assert np.array_equal(adjacency, adjacency.T)

    assert np.allclose(synthesize_condensed_adjacency(features, 0.75), np.eye(5))


def test_synthesize_condensed_adjacency_errors():
    with raises(CondenseError, match=r"adjacency threshold must be in \[0, 1\), got 1.0"):
        synthesize_condensed_adjacency(np.eye(2), 1.0)


def test_gradient_distance():
    rng = np.random.default_rng(2)
    g = rng.standard_normal((5, 3))

    assert gradient_distance(g, g) == pytest.approx(0.0, abs=1e-12)
    assert gradient_distance(g, 3.0 * g) == pytest.approx(0.0, abs=1e-12)
    assert gradient_distance(g, -g) == pytest.approx(6.0)

    other = rng.standard_normal((5, 3))
    d = gradient_distance(g, other)
    assert 0 <= d <= 6
    assert d == pytest.approx(gradient_distance(other, g))

    # Layers add up
    assert gradient_distance([g, other], [other, g]) == pytest.approx(2 * d)


def test_gradient_distance_zero_columns():
    a = np.array([[1.0, 0.0], [0.0, 0.0]])
    b = np.array([[2.0, 0.0], [0.0, 0.0]])
    assert gradient_distance(a, b) == 0.0

    c = np.array([[2.0, 1.0], [0.0, 0.0]])
    assert gradient_distance(a, c) == 1.0


def test_gradient_distance_errors():
    with raises(CondenseError, match=r"layer count mismatch: 2 vs 1"):
        gradient_distance([np.eye(2), np.eye(2)], [np.eye(2)])
    with raises(CondenseError, match=r"layer 0: shape mismatch"):
        gradient_distance(np.eye(2), np.eye(3))


def test_matching_objective_gradient():
    rng = np.random.default_rng(3)
    for _ in range(5):
        x = rng.standard_normal((4, 5))
        onehot = np.eye(3)[rng.integers(0, 3, size=4)]
        weights = rng.standard_normal((5, 3))
        real = rng.standard_normal((5, 3))

        distance, grad = matching_objective(x, onehot, weights, real)
        numeric = central_difference(lambda z: matching_objective(z, onehot, weights, real)[0],
                                     x.copy())
        assert distance == pytest.approx(matching_objective(x, onehot, weights, real)[0])
        assert relative_error(grad, numeric) < 1e-5


def _dense_targets(graph, steps):
    adj = dense_normalize(dense_adjacency(graph))
    embedded = np.linalg.matrix_power(adj, steps) @ graph.features
    train_labels = graph.labels[graph.train]
    return np.stack([embedded[graph.train][train_labels == c].mean(axis=0)
                     for c in range(graph.num_classes)])


def test_distribution_matching_one_node_per_class():
    rng = np.random.default_rng(4)
    graph = random_graph(rng, 20, num_classes=2)
    config = fast_condense_config(method='distribution', ratio=0.1, feature_lr=0.5,
                                  relay_propagation_steps=2)
    condenser = DistributionMatchingCondenser(graph, normalize(graph), config)
    assert condenser.labels.tolist() == [0, 1]

    # With one node per class, a step of 0.5 lands exactly on the class mean
    condenser.run(1)
    assert np.allclose(condenser.features, _dense_targets(graph, 2), atol=1e-6)
    assert condenser.loss() < 1e-12

    features = condenser.features.copy()
    condenser.run(2)
    assert np.allclose(condenser.features, features, atol=1e-12)
    assert condenser.epoch == 3
    assert len(condenser.losses) == 3


def test_distribution_matching_loss_decreases():
    graph = sbm_bundle(seed=1).graph
    config = fast_condense_config(method='distribution', ratio=0.15, feature_lr=2.0)
    condenser = DistributionMatchingCondenser(graph, normalize(graph), config)
    condenser.run(10)
    assert all(b <= a for a, b in zip(condenser.losses, condenser.losses[1:]))
    assert condenser.losses[-1] < condenser.losses[0]


def test_distribution_matching_set_structure_resets_lr():
    graph = sbm_bundle(seed=2).graph
    config = fast_condense_config(method='distribution', feature_lr=0.5)
    condenser = DistributionMatchingCondenser(graph, normalize(graph), config)
    condenser.lr = 0.01
    condenser.set_structure(normalize(graph.with_edges([], [])))
    assert condenser.lr == 0.5
    # Edgeless normalized adjacency is the identity
    train_labels = graph.labels[graph.train]
    assert np.allclose(condenser.targets[0],
                       graph.features[graph.train][train_labels == 0].mean(axis=0))


def test_zero_epochs_keeps_initial_features():
    graph = sbm_bundle(seed=3).graph
    config = fast_condense_config(method='gradient', outer_epochs=0)
    condenser = make_condenser(graph, normalize(graph), config)
    initial = condenser.features.copy()
    condensed = condenser.run().condensed()

    assert isinstance(condenser, GradientMatchingCondenser)
    assert condenser.losses == []
    assert np.array_equal(condensed.features, initial)


def test_gradient_matching_step_descends():
    graph = sbm_bundle(seed=4).graph
    config = fast_condense_config(method='gradient')
    condenser = GradientMatchingCondenser(graph, normalize(graph), config)
    weights = init_weights(np.random.default_rng(0), graph.feature_dim, graph.num_classes)

    loss, grad = condenser._match(weights)
    assert np.abs(grad).max() > 0
    condenser.features = condenser.features - 1e-4 * grad
    assert condenser._match(weights)[0] < loss


def test_gradient_matching_divergence(monkeypatch):
    monkeypatch.setattr('robgc.condenser.DIVERGENCE_STEPS', 2)
    graph = sbm_bundle(seed=5).graph
    condenser = GradientMatchingCondenser(graph, normalize(graph),
                                          fast_condense_config(method='gradient'))

    condenser._track_divergence(1.0)
    condenser._track_divergence(11.0)
    condenser._track_divergence(5.0)
    condenser._track_divergence(11.0)
    with raises(CondenseError, match=r"gradient matching diverged: loss 12 vs initial 1"):
        condenser._track_divergence(12.0)

    with raises(CondenseError, match=r"gradient matching: non-finite loss at epoch 0"):
        condenser._track_divergence(float('nan'))


def test_condense_deterministic():
    graph = sbm_bundle(seed=6).graph
    config = fast_condense_config(method='gradient', outer_epochs=2, match_steps=2,
                                  relay_inits=2, seed=7)
    a = condense(graph, normalize(graph), config)
    b = condense(graph, normalize(graph), config)

    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.adjacency, b.adjacency)
    assert a.method == 'gradient'
    assert a.labels.tolist() == sorted(a.labels.tolist())
    assert a.ratio == pytest.approx(len(a.labels) / len(graph.train))
    assert np.all(np.isfinite(a.features))
    assert np.array_equal(a.adjacency, a.adjacency.T)
    assert np.all(np.diag(a.adjacency) == 1.0)


def test_condense_by_method():
    graph = sbm_bundle(seed=8).graph
    adj = normalize(graph)

    config = fast_condense_config(method='distribution', outer_epochs=0, seed=2)
    condensed = condense_distribution_matching(graph, adj, config)
    assert condensed.method == 'distribution'
    assert np.array_equal(condensed.features,
                          init_condensed_features(graph, condensed.labels, seed=2))

    config = fast_condense_config(method='gradient', outer_epochs=1, match_steps=2,
                                  relay_inits=1)
    condensed = condense_gradient_matching(graph, adj, config)
    assert condensed.method == 'gradient'
    assert np.array_equal(condensed.adjacency,
                          synthesize_condensed_adjacency(condensed.features,
                                                         config.adjacency_threshold))
