from collections import namedtuple
import logging

import numpy as np


logger = logging.getLogger(__name__)


class DatasetError(Exception):
    pass


class DatasetBundle:
    """A full graph whose train/val/test masks define the inductive split"""
    def __init__(self, name, graph, feature_offset=None):
        self.name = name
        self.graph = graph
        # Vector already subtracted from graph.features, if any
        self.feature_offset = feature_offset

        for a, b in (('train', 'val'), ('train', 'test'), ('val', 'test')):
            overlap = np.intersect1d(getattr(graph, a), getattr(graph, b))
            if len(overlap):
                raise DatasetError("split overlap: node {} is in both {} and {}"
                                   .format(overlap[0], a, b))

    @property
    def split_sizes(self):
        return len(self.graph.train), len(self.graph.val), len(self.graph.test)


def center_features(bundle):
    """
    Subtracts the mean feature vector of the training nodes from every node.
    feature_offset of the result is the total vector subtracted so far.
    """
    graph = bundle.graph
    if len(graph.train) == 0:
        raise DatasetError("{}: cannot center features without training nodes"
                           .format(bundle.name))

    offset = graph.features[graph.train].mean(axis=0)
    if bundle.feature_offset is not None:
        offset_total = bundle.feature_offset + offset
    else:
        offset_total = offset

    return DatasetBundle(bundle.name, graph.with_features(graph.features - offset),
                         feature_offset=offset_total)


InductiveSplit = namedtuple('InductiveSplit', ['train', 'val', 'test'])


def inductive_split(bundle):
    """
    Cuts the training, validation and test graphs. Training nodes come first
    in every graph, in the same order, so the training graph's ids are valid
    in the other two; the inductive nodes follow. node_ids records the
    mapping back to the full graph.
    """
    graph = bundle.graph
    train_nodes = graph.train
    n_train = len(train_nodes)

    train = graph.subgraph(train_nodes, train=np.arange(n_train))

    def extended(extra, mask_name):
        if len(extra) == 0:
            return train
        nodes = np.concatenate([train_nodes, extra])
        masks = {
            'train': np.arange(n_train),
            mask_name: np.arange(n_train, len(nodes)),
        }
        return graph.subgraph(nodes, **masks)

    val = extended(graph.val, 'val')
    test = extended(graph.test, 'test')

    logger.info("%s: train/val/test graph sizes %d/%d/%d",
                bundle.name, train.num_nodes, val.num_nodes, test.num_nodes)

    return InductiveSplit(train, val, test)


def load_dataset_source(dataset_config):
    if dataset_config.directory is not None:
        from .directory import load_dataset
        bundle = load_dataset(dataset_config.directory)
        bundle.name = dataset_config.name
        return bundle
    else:
        from .synthetic import generate_sbm
        return generate_sbm(dataset_config.synthetic, dataset_config.synthetic.seed,
                            name=dataset_config.name)
