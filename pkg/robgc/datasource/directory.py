"""
Dataset directories:

  edges.txt     "u v" per line, 0-based; duplicates and self-loops are cleaned
  features.bin  little-endian [u64 N][u64 d] then N*d float32, row-major
  features.csv  (alternative) N lines of d comma-separated decimals
  labels.txt    one integer class id per line
  split.json    {"train": [...], "val": [...], "test": [...]}

A condensed graph directory adds adjacency.bin ([u64 N'] then N'*N' float32)
and condensed.json, whose feature_offset must be subtracted from the features
of a graph before it is scored against the condensed graph.
"""
import json
import logging
import os

import numpy as np

from . import DatasetBundle, DatasetError
from ..condenser import CondensedGraph
from ..graph import build_graph, GraphError
from ..models import CondensedInfoModel
from ..utils import atomic_writer, read_matrix_bin, write_matrix_bin


logger = logging.getLogger(__name__)


def _required_path(directory, filename):
    path = os.path.join(directory, filename)
    if not os.path.exists(path):
        raise DatasetError("{} not found in {}".format(filename, directory))
    return path


def _read_edges(path):
    edges = []
    with open(path, 'r') as f:
        for lineno, line in enumerate(f, 1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 2:
                raise DatasetError("{}:{}: expected two node ids, got {!r}"
                                   .format(path, lineno, line.rstrip('\n')))
            try:
                edges.append((int(fields[0]), int(fields[1])))
            except ValueError:
                raise DatasetError("{}:{}: malformed node id in {!r}"
                                   .format(path, lineno, line.rstrip('\n'))) from None
    return edges


def _read_labels(path):
    labels = []
    with open(path, 'r') as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                labels.append(int(line))
            except ValueError:
                raise DatasetError("{}:{}: malformed label {!r}"
                                   .format(path, lineno, line)) from None
    return labels


def _read_matrix(path, square=False):
    try:
        return read_matrix_bin(path, square=square)
    except ValueError as e:
        raise DatasetError(str(e)) from None


def _read_features_csv(path):
    rows = []
    with open(path, 'r') as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(x) for x in line.split(',')])
            except ValueError:
                raise DatasetError("{}:{}: malformed feature row".format(path, lineno)) from None
            if len(rows[-1]) != len(rows[0]):
                raise DatasetError("{}:{}: expected {} values, got {}"
                                   .format(path, lineno, len(rows[0]), len(rows[-1])))
    return np.array(rows, dtype=np.float64)


def _read_split(path):
    with open(path, 'r') as f:
        try:
            split = json.load(f)
        except ValueError as e:
            raise DatasetError("{}: {}".format(path, e)) from None

    if not isinstance(split, dict):
        raise DatasetError("{}: must be an object with train/val/test keys".format(path))

    result = {}
    for key in ('train', 'val', 'test'):
        ids = split.get(key, [])
        if not isinstance(ids, list) or not all(isinstance(i, int) for i in ids):
            raise DatasetError("{}: {} must be a list of integers".format(path, key))
        result[key] = ids

    return result


def load_dataset(directory):
    edges = _read_edges(_required_path(directory, 'edges.txt'))
    labels = _read_labels(_required_path(directory, 'labels.txt'))

    if os.path.exists(os.path.join(directory, 'features.bin')):
        features = _read_matrix(os.path.join(directory, 'features.bin'))
    elif os.path.exists(os.path.join(directory, 'features.csv')):
        features = _read_features_csv(os.path.join(directory, 'features.csv'))
    else:
        raise DatasetError("features.bin or features.csv not found in {}".format(directory))

    split = _read_split(_required_path(directory, 'split.json'))
    seen = {}
    for key in ('train', 'val', 'test'):
        for node in split[key]:
            if node in seen:
                raise DatasetError("split overlap: node {} is in both {} and {}"
                                   .format(node, seen[node], key))
            seen[node] = key

    try:
        graph = build_graph(edges, len(labels), features, labels, masks=split)
    except GraphError as e:
        raise DatasetError("{}: {}".format(directory, e)) from None

    bundle = DatasetBundle(os.path.basename(os.path.normpath(directory)), graph)
    logger.info("Loaded %s: %d nodes, %d edges, %d classes, split %d/%d/%d",
                directory, graph.num_nodes, graph.num_edges, graph.num_classes,
                *bundle.split_sizes)

    return bundle


def _write_graph_files(graph, directory, binary):
    with atomic_writer(os.path.join(directory, 'edges.txt')) as writer:
        for u, v in zip(graph.edge_u.tolist(), graph.edge_v.tolist()):
            writer.write("{} {}\n".format(u, v))

    with atomic_writer(os.path.join(directory, 'labels.txt')) as writer:
        for label in graph.labels.tolist():
            writer.write("{}\n".format(label))

    if binary:
        with atomic_writer(os.path.join(directory, 'features.bin'), binary=True) as writer:
            write_matrix_bin(writer, graph.features)
    else:
        with atomic_writer(os.path.join(directory, 'features.csv')) as writer:
            for row in graph.features.tolist():
                writer.write(",".join(repr(x) for x in row) + "\n")

    with atomic_writer(os.path.join(directory, 'split.json')) as writer:
        json.dump({
            'train': graph.train.tolist(),
            'val': graph.val.tolist(),
            'test': graph.test.tolist(),
        }, writer, sort_keys=True)


def save_dataset(bundle, directory, binary=True):
    os.makedirs(directory, exist_ok=True)
    _write_graph_files(bundle.graph, directory, binary)


def save_condensed(condensed, directory):
    os.makedirs(directory, exist_ok=True)

    _write_graph_files(condensed.to_graph(), directory, binary=True)

    with atomic_writer(os.path.join(directory, 'adjacency.bin'), binary=True) as writer:
        write_matrix_bin(writer, condensed.adjacency, square=True)

    info = CondensedInfoModel(method=condensed.method,
                              ratio=condensed.ratio,
                              num_nodes=condensed.num_nodes,
                              num_classes=condensed.num_classes,
                              feature_offset=[] if condensed.feature_offset is None
                              else [float(x) for x in condensed.feature_offset])
    with atomic_writer(os.path.join(directory, 'condensed.json')) as writer:
        writer.write(info.to_json_text(indent=4))


def load_condensed(directory):
    with open(_required_path(directory, 'condensed.json'), 'r') as f:
        info = CondensedInfoModel.from_json_text(f.read())

    adjacency = _read_matrix(_required_path(directory, 'adjacency.bin'), square=True)
    features = _read_matrix(_required_path(directory, 'features.bin'))
    labels = np.array(_read_labels(_required_path(directory, 'labels.txt')), dtype=np.int64)

    if not (adjacency.shape[0] == features.shape[0] == len(labels)):
        raise DatasetError("{}: adjacency, features and labels disagree on node count"
                           .format(directory))

    offset = np.array(info.feature_offset, dtype=np.float64) if info.feature_offset else None
    if offset is not None and len(offset) != features.shape[1]:
        raise DatasetError("{}: feature_offset has {} values for {} feature columns"
                           .format(directory, len(offset), features.shape[1]))

    return CondensedGraph(features, adjacency, labels, info.ratio, info.method,
                          num_classes=info.num_classes, feature_offset=offset)
