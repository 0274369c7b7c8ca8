"""
Experiment driver: for every (noise level, seed) cell, noise the full graph
once and cut the inductive graphs from it, build a condensed graph with each
requested method, train the downstream model on it and evaluate on the
(possibly denoised) test graph.
"""
import itertools
import logging
import os

import numpy as np
import yaml

from .baselines import jaccard_denoise, knn_augment, svd_denoise
from .condenser import condense
from .config import Config, ConfigError
from .datasource import center_features, DatasetBundle, inductive_split, load_dataset_source
from .datasource.directory import save_condensed
from .denoiser import alternating_optimize, apply_thresholds
from .graph import edge_homophily, GraphError, normalize
from .models import AggregateRowModel, RunReport, RunRowModel
from .noise import inject_random_noise, NoiseSpec
from .relay import evaluate_on_graph, save_model, train_on_condensed, train_on_graph
from .utils import atomic_writer, stage, StageTimer


logger = logging.getLogger(__name__)

# Denoise config changes made by the RobGC ablation methods
ROBGC_VARIANTS = {
    'robgc': {},
    'robgc-no-test-denoise': {},
    'robgc-no-corr': {'use_correlation': False},
    'robgc-no-prop': {'use_propagation': False},
    'robgc-no-add': {'use_addition': False},
    'robgc-no-delete': {'use_deletion': False},
}

def _homophily(graph):
    try:
        return edge_homophily(graph)
    except GraphError:
        return None


def _dataset_key(dataset_config):
    centered = dataset_config.center_features
    if dataset_config.directory is not None:
        return ('directory', os.path.abspath(dataset_config.directory), centered)

    spec = dataset_config.synthetic
    return ('synthetic', dataset_config.name, tuple(sorted(vars(spec).items())), centered)


def load_bundle(config, cache=None):
    key = _dataset_key(config.dataset)
    if cache is not None and key in cache:
        return cache[key]

    bundle = load_dataset_source(config.dataset)
    if config.dataset.center_features:
        bundle = center_features(bundle)
    if cache is not None:
        cache[key] = bundle

    return bundle


def _level_name(level):
    return '{:g}'.format(level)


class _CellResult:
    """What a method produced for one cell, before it becomes a report row"""
    def __init__(self, model, test_graph, train_graph=None, after_delete=None, timer=None):
        self.model = model
        self.test_graph = test_graph
        self.train_graph = train_graph
        self.after_delete = after_delete
        self.timer = timer


class _Cell:
    """One (noise level, seed) cell of an experiment"""
    def __init__(self, config, bundle, level, seed, cell_name=None):
        self.config = config
        self.level = level
        self.seed = seed
        self.cell_name = cell_name

        self.condense_config = config.condense.with_seed(seed)
        self.denoise_config = config.denoise.with_seed(seed)
        self.train_config = config.train.with_seed(seed)
        self.baseline_config = config.baselines.with_seed(seed)

        # One noise draw on the full graph, so the training graph's edges are
        # exactly the training-node edges of the validation and test graphs
        noisy = inject_random_noise(bundle.graph,
                                    NoiseSpec(level, config.noise.add_fraction, seed=seed))
        self.train, self.val, self.test = inductive_split(
            DatasetBundle(bundle.name, noisy, feature_offset=bundle.feature_offset))
        self.feature_offset = bundle.feature_offset
        self._robgc = {}
        self.last_robgc = None

    def _fit(self, condensed, validation):
        return train_on_condensed(condensed, self.train_config, model=self.config.model,
                                  validation_graph=validation)

    def _condense(self, graph, timer):
        with stage(timer, 'condense'):
            return condense(graph, normalize(graph), self.condense_config)

    def _baseline(self, graph, method):
        b = self.baseline_config
        if method == 'jaccard':
            return jaccard_denoise(graph, b.jaccard_threshold)
        elif method == 'svd':
            return svd_denoise(graph, b.svd_rank, cutoff=b.svd_cutoff, seed=b.seed)
        else:
            return knn_augment(graph, b.knn_k)

    def _trained_robgc(self, variant):
        changes = ROBGC_VARIANTS[variant]
        key = tuple(sorted(changes.items()))
        if key not in self._robgc:
            timer = StageTimer()
            denoise_config = self.denoise_config.replace(**changes)
            condensed, thresholds, denoised = alternating_optimize(
                self.train, self.condense_config, denoise_config, timer=timer)
            self._robgc[key] = (denoise_config, condensed, thresholds, denoised, timer)
        return self._robgc[key]

    def run_method(self, method):
        if method == 'whole':
            timer = StageTimer()
            model = train_on_graph(self.train, self.train_config, model=self.config.model,
                                   validation_graph=self.val)
            return _CellResult(model, self.test, train_graph=self.train, timer=timer)

        elif method == 'plain':
            timer = StageTimer()
            condensed = self._condense(self.train, timer)
            return _CellResult(self._fit(condensed, self.val), self.test,
                               train_graph=self.train, timer=timer)

        elif method in ('jaccard', 'svd', 'knn'):
            timer = StageTimer()
            with stage(timer, 'denoise'):
                train, val, test = [self._baseline(g, method)
                                    for g in (self.train, self.val, self.test)]
            condensed = self._condense(train, timer)
            return _CellResult(self._fit(condensed, val), test, train_graph=train, timer=timer)

        denoise_config, condensed, thresholds, denoised, trained_timer = \
            self._trained_robgc(method)
        timer = StageTimer()
        timer.merge(trained_timer)
        self.last_robgc = (condensed, thresholds, self.feature_offset)

        if method == 'robgc-no-test-denoise':
            return _CellResult(self._fit(condensed, self.val), self.test,
                               train_graph=denoised, timer=timer)

        with stage(timer, 'denoise'):
            after_delete, test = apply_thresholds(self.test, condensed, thresholds,
                                                  denoise_config, timer=timer)
        val = self.val
        if len(val.val):
            val = apply_thresholds(val, condensed, thresholds, denoise_config)[1]

        return _CellResult(self._fit(condensed, val), test, train_graph=denoised,
                           after_delete=after_delete, timer=timer)

    def row(self, dataset_name, method, result=None, error=None):
        config = self.config
        row = RunRowModel(dataset=dataset_name,
                          ratio=config.condense.ratio,
                          noise_level=self.level,
                          method=method,
                          seed=self.seed,
                          edges_before=2 * self.test.num_edges,
                          homophily_before=_homophily(self.test),
                          train_homophily_before=_homophily(self.train),
                          status='ok' if error is None else 'error: {}'.format(error),
                          cell=self.cell_name)
        if result is None:
            return row

        row.accuracy = evaluate_on_graph(result.model, result.test_graph)
        row.homophily_after = _homophily(result.test_graph)
        if result.after_delete is not None:
            row.edges_after_delete = 2 * result.after_delete.num_edges
            row.edges_after_add = 2 * result.test_graph.num_edges
        if result.train_graph is not None:
            row.train_homophily_after = _homophily(result.train_graph)

        if config.report.timings:
            timer = result.timer
            row.t_correlation_s = timer.get('correlation')
            row.t_delete_s = timer.get('delete')
            row.t_add_s = timer.get('add')
            row.t_search_s = timer.get('search')
            row.t_denoise_s = timer.get('denoise')
            row.t_condense_s = timer.get('condense')

        return row


def aggregate_rows(rows):
    """Mean and sample standard deviation of accuracy per (dataset, ratio, level, method, cell)"""
    groups = {}
    for row in rows:
        key = (row.dataset, row.ratio, row.noise_level, row.method, row.cell)
        groups.setdefault(key, []).append(row)

    result = []
    for (dataset, ratio, level, method, cell), group in groups.items():
        accuracies = [r.accuracy for r in group if r.accuracy is not None]
        if accuracies:
            mean = float(np.mean(accuracies))
            std = float(np.std(accuracies, ddof=1)) if len(accuracies) > 1 else 0.0
        else:
            mean = std = None
        result.append(AggregateRowModel(dataset=dataset, ratio=ratio, noise_level=level,
                                        method=method, runs=len(accuracies),
                                        accuracy_mean=mean, accuracy_std=std, cell=cell))

    return result


def _metadata(config):
    return {
        'config': str(config.path),
        'model': config.model,
        'seeds': ','.join(str(s) for s in config.seeds),
        'baselines': 'applied to the training, validation and test graphs',
        'whole': 'trained on the noisy training graph with the downstream train config',
    }


def _write_artifacts(config, condensed, thresholds, feature_offset):
    os.makedirs(config.output_dir, exist_ok=True)
    condensed.feature_offset = feature_offset
    save_condensed(condensed, os.path.join(config.output_dir, 'condensed'))
    with atomic_writer(os.path.join(config.output_dir, 'thresholds.json')) as writer:
        writer.write(thresholds.to_json_text(indent=4))


def run_pipeline(config, cache=None, cell_name=None):
    """
    Runs every (noise level, seed, method) of config. A failing method only
    fails its own row.
    """
    bundle = load_bundle(config, cache=cache)

    rows = []
    last_robgc = None
    for level in config.noise.levels:
        for seed in config.seeds:
            try:
                cell = _Cell(config, bundle, level, seed, cell_name=cell_name)
            except Exception as e:
                logger.exception("Failed to noise graphs for level %s, seed %d", level, seed)
                for method in config.methods:
                    rows.append(RunRowModel(dataset=bundle.name, ratio=config.condense.ratio,
                                            noise_level=level, method=method, seed=seed,
                                            status='error: {}'.format(e), cell=cell_name))
                continue

            for method in config.methods:
                try:
                    result = cell.run_method(method)
                    row = cell.row(bundle.name, method, result)
                except Exception as e:
                    logger.exception("%s failed at noise level %s, seed %d", method, level, seed)
                    rows.append(cell.row(bundle.name, method, error=e))
                    continue

                logger.info("%s: noise level %s, seed %d: accuracy %.4f",
                            method, _level_name(level), seed, row.accuracy)
                rows.append(row)

                if config.report.save_models:
                    save_model(result.model, os.path.join(
                        config.output_dir, 'models',
                        '{}-{}-{}'.format(method, _level_name(level), seed)))

            if cell.last_robgc is not None:
                last_robgc = cell.last_robgc

    if last_robgc is not None:
        _write_artifacts(config, *last_robgc)

    return RunReport(rows=rows, aggregates=aggregate_rows(rows), metadata=_metadata(config))


def load_grid(grid_path):
    """Returns (base config path, [(cell name, [(path, value), ...]), ...])"""
    try:
        with open(grid_path, 'r') as f:
            yml = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError("{}: {}".format(grid_path, e)) from None

    if not isinstance(yml, dict) or 'config' not in yml:
        raise ConfigError("{}: must be an object with a config key".format(grid_path))

    base = os.path.join(os.path.dirname(grid_path), str(yml['config']))
    grid = yml.get('grid') or {}
    if not isinstance(grid, dict):
        raise ConfigError("{}: grid must map key paths to lists of values".format(grid_path))

    keys = list(grid)
    values = []
    for key in keys:
        v = grid[key]
        if not isinstance(v, list) or not v:
            raise ConfigError("{}: grid/{} must be a non-empty list".format(grid_path, key))
        values.append(v)

    cells = []
    for combination in itertools.product(*values):
        overrides = [([p for p in key.split('/') if p], value)
                     for key, value in zip(keys, combination)]
        name = ','.join('{}={}'.format(key, value) for key, value in zip(keys, combination))
        cells.append((name, overrides))

    return base, cells


def sweep(grid_path):
    """
    Runs run_pipeline on every cell of a grid file, loading each dataset
    once. Returns the combined report and the first cell's Config.
    """
    base, cells = load_grid(grid_path)
    named = len(cells) > 1

    cache = {}
    rows = []
    first_config = None
    for name, overrides in cells:
        config = Config(base, overrides=overrides)
        if first_config is None:
            first_config = config
        logger.info("Sweep cell %s", name or '(base)')
        report = run_pipeline(config, cache=cache, cell_name=name if named else None)
        rows.extend(report.rows)

    metadata = _metadata(first_config)
    metadata['grid'] = str(grid_path)
    metadata['cells'] = str(len(cells))

    return RunReport(rows=rows, aggregates=aggregate_rows(rows), metadata=metadata), first_config
