import os
from tempfile import NamedTemporaryFile

import numpy as np
import yaml

from robgc.config import Config, CondenseConfig, DenoiseConfig, TrainConfig
from robgc.datasource.synthetic import generate_sbm, SyntheticSpec
from robgc.graph import build_graph


def write_config(tmp_path, content):
    tmpfile = NamedTemporaryFile(delete=False, prefix="config-", suffix=".yaml", dir=tmp_path)
    yaml.dump(content, tmpfile, encoding="UTF=8")
    tmpfile.close()
    return tmpfile.name


def get_config(tmp_path, content, overrides=()):
    path = write_config(tmp_path, content)
    conf = Config(path, overrides=overrides)
    os.unlink(path)
    return conf


# A pipeline small enough to run several times per test
SMALL_CONFIG = {
    'dataset': {
        'name': 'tiny-sbm',
        'synthetic': {
            'classes': 2,
            'nodes_per_class': 30,
            'intra_p': 0.2,
            'inter_p': 0.02,
            'feature_dim': 8,
            'feature_noise': 0.3,
            'seed': 3,
        },
    },
    'noise': {'levels': [0.0, 1.0]},
    'condense': {
        'ratio': 0.1,
        'method': 'distribution',
        'outer_epochs': 4,
        'feature_lr': 0.5,
    },
    'denoise': {
        'candidates': 4,
        'period': 2,
        'hops': 2,
    },
    'train': {
        'epochs': 20,
        'hidden': 8,
        'patience': 0,
    },
    'model': 'sgc',
    'methods': ['plain', 'robgc'],
    'seeds': [0, 1],
    'report': {'timings': False},
}


def random_graph(rng, num_nodes, edge_prob=0.2, feature_dim=4, num_classes=3,
                 train_fraction=1.0, binary_features=False):
    """Erdős–Rényi graph with random features and labels; every class is present"""
    upper = np.triu(rng.random((num_nodes, num_nodes)) < edge_prob, k=1)
    u, v = np.nonzero(upper)
    if binary_features:
        features = (rng.random((num_nodes, feature_dim)) < 0.4).astype(float)
    else:
        features = rng.standard_normal((num_nodes, feature_dim))
    labels = np.arange(num_nodes) % num_classes
    rng.shuffle(labels[num_classes:])
    train = np.arange(min(num_nodes, max(num_classes, int(round(train_fraction * num_nodes)))))
    test = np.arange(len(train), num_nodes)

    return build_graph(np.stack([u, v], axis=1), num_nodes, features, labels,
                       masks={'train': train, 'test': test}, num_classes=num_classes)


def sbm_bundle(classes=2, nodes_per_class=30, intra_p=0.2, inter_p=0.02, feature_dim=8,
               feature_noise=0.3, seed=0):
    spec = SyntheticSpec(classes=classes, nodes_per_class=nodes_per_class, intra_p=intra_p,
                         inter_p=inter_p, feature_dim=feature_dim, feature_noise=feature_noise,
                         seed=seed)
    return generate_sbm(spec, seed)


def dense_normalize(adjacency):
    """Dense D^-1/2 (A + I) D^-1/2"""
    a = np.asarray(adjacency, dtype=float) + np.eye(len(adjacency))
    d = 1 / np.sqrt(a.sum(axis=1))
    return a * d[:, None] * d[None, :]


def dense_adjacency(graph):
    a = np.zeros((graph.num_nodes, graph.num_nodes))
    a[graph.edge_u, graph.edge_v] = 1
    a[graph.edge_v, graph.edge_u] = 1
    return a


def cosine(a, b):
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


def fast_condense_config(**kwargs):
    return CondenseConfig().replace(**kwargs)


def fast_denoise_config(**kwargs):
    return DenoiseConfig().replace(**kwargs)


def fast_train_config(**kwargs):
    defaults = {'epochs': 50, 'hidden': 16, 'patience': 0}
    defaults.update(kwargs)
    return TrainConfig().replace(**defaults)


def relative_error(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.abs(a - b).max() / max(1e-12, np.abs(a).max(), np.abs(b).max()))


def central_difference(f, x, eps=1e-6):
    """Numerical gradient of scalar f at array x"""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=['multi_index'])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + eps
        plus = f(x)
        x[idx] = old - eps
        minus = f(x)
        x[idx] = old
        grad[idx] = (plus - minus) / (2 * eps)
    return grad
