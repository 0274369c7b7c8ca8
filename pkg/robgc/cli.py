from contextlib import contextmanager
import logging

import click

from .config import Config, ConfigError, DenoiseConfig
from .datasource import DatasetBundle, DatasetError
from .datasource.directory import load_condensed, load_dataset, save_dataset
from .datasource.synthetic import generate_sbm
from .denoiser import apply_thresholds, DenoiseError
from .graph import graph_statistics
from .harness import run_pipeline, sweep
from .models import Thresholds
from .report import emit_report, ReportError


logger = logging.getLogger(__name__)


@contextmanager
def _usage_errors():
    try:
        yield
    except (ConfigError, DatasetError, DenoiseError, ReportError) as e:
        raise click.ClickException(str(e)) from None


@click.group()
@click.option('-v', '--verbose', is_flag=True,
              help='Show verbose debugging output')
def cli(verbose):
    FORMAT = "%(asctime)s:%(levelname)s:%(name)s:%(message)s"
    logging.basicConfig(level=logging.WARNING, format=FORMAT)
    if verbose:
        logging.getLogger('robgc').setLevel(logging.INFO)


@cli.command(name="run")
@click.option('--config', 'config_file', required=True, type=click.Path(exists=True),
              help='Experiment config file')
@click.option('--override', 'overrides', multiple=True, metavar='KEY/PATH=VALUE',
              help='Replace a config value, e.g. denoise/alpha=0.5')
def run(config_file, overrides):
    """Run every noise level, seed and method of an experiment

    \b
    Config keys (slash paths, as accepted by --override):
      output_dir                  reports, condensed/ and thresholds.json
      dataset/name, dataset/directory, dataset/center_features
      dataset/synthetic/...       classes, nodes_per_class, intra_p, inter_p,
                                  feature_dim, feature_noise, seed, split
      noise/levels, noise/add_fraction
      condense/...                ratio, method (gradient|distribution),
                                  relay_propagation_steps, outer_epochs,
                                  match_steps, feature_lr, relay_lr, relay_inits,
                                  adjacency_threshold, seed
      denoise/...                 k, hops, r_nn, alpha, lp_iterations, candidates,
                                  period, support_fraction, use_correlation,
                                  use_propagation, use_deletion, use_addition, seed
      baselines/...               jaccard_threshold, svd_rank, svd_cutoff, knn_k, seed
      train/...                   learning_rate_grid, learning_rate, epochs,
                                  weight_decay, patience, hidden, steps, seed
      model                       sgc or gcn
      methods                     plain, robgc, jaccard, svd, knn, whole and the
                                  robgc-no-* ablations
      seeds                       one run per seed in every noise level
      report/formats, report/timings, report/save_models

    See config-example.yaml for defaults.
    """
    with _usage_errors():
        cfg = Config(config_file, overrides=overrides)
        report = run_pipeline(cfg)
        for path in emit_report(report, cfg.report.formats, cfg.output_dir):
            click.echo(path)


@cli.command(name="sweep")
@click.option('--grid', 'grid_file', required=True, type=click.Path(exists=True),
              help='Grid file: a base config and lists of values to cross')
def sweep_command(grid_file):
    """Run run over the cross product of a grid"""
    with _usage_errors():
        report, cfg = sweep(grid_file)
        for path in emit_report(report, cfg.report.formats, cfg.output_dir):
            click.echo(path)


@cli.command(name="stats")
@click.option('--graph', 'graph_dir', required=True, type=click.Path(exists=True),
              help='Dataset directory')
def stats(graph_dir):
    """Print node, edge, sparsity and homophily statistics"""
    with _usage_errors():
        bundle = load_dataset(graph_dir)
    click.echo(graph_statistics(bundle.graph).to_json_text(indent=4))


@cli.command(name="denoise")
@click.option('--graph', 'graph_dir', required=True, type=click.Path(exists=True),
              help='Dataset directory to denoise')
@click.option('--condensed', 'condensed_dir', required=True, type=click.Path(exists=True),
              help='Condensed graph directory')
@click.option('--thresholds', 'thresholds_file', required=True, type=click.Path(exists=True),
              help='thresholds.json from a run')
@click.option('--output', 'output_dir', required=True, type=click.Path(),
              help='Directory to write the denoised dataset to')
@click.option('--config', 'config_file', type=click.Path(exists=True),
              help='Experiment config file supplying the denoise settings')
def denoise(graph_dir, condensed_dir, thresholds_file, output_dir, config_file):
    """Apply frozen thresholds and a condensed graph to a dataset"""
    with _usage_errors():
        denoise_config = Config(config_file).denoise if config_file else DenoiseConfig()
        bundle = load_dataset(graph_dir)
        condensed = load_condensed(condensed_dir)
        with open(thresholds_file, 'r') as f:
            try:
                thresholds = Thresholds.from_json_text(f.read())
            except ValueError as e:
                raise ConfigError("{}: {}".format(thresholds_file, e)) from None

        graph = bundle.graph
        offset = condensed.feature_offset
        if offset is not None:
            if len(offset) != graph.features.shape[1]:
                raise DatasetError("{}: {} feature columns, but the condensed graph's "
                                   "feature_offset has {} values"
                                   .format(graph_dir, graph.features.shape[1], len(offset)))
            graph = graph.with_features(graph.features - offset)

        after_delete, after_add = apply_thresholds(graph, condensed, thresholds,
                                                   denoise_config)
        # Only the edges change; the written features are the ones read
        denoised = bundle.graph.with_edges(after_add.edge_u, after_add.edge_v)
        save_dataset(DatasetBundle(bundle.name, denoised), output_dir)

    click.echo("edges: {} -> {} after deletion -> {} after addition"
               .format(bundle.graph.num_edges, after_delete.num_edges, after_add.num_edges))


@cli.command(name="generate")
@click.option('--config', 'config_file', required=True, type=click.Path(exists=True),
              help='Config file with a dataset/synthetic section')
@click.option('--output', 'output_dir', required=True, type=click.Path(),
              help='Directory to write the dataset to')
def generate(config_file, output_dir):
    """Write a synthetic block-model dataset in the directory format"""
    with _usage_errors():
        dataset = Config(config_file).dataset
        if dataset.synthetic is None:
            raise ConfigError("dataset: generate needs a synthetic section, not a directory")
        bundle = generate_sbm(dataset.synthetic, dataset.synthetic.seed, name=dataset.name)
        save_dataset(bundle, output_dir)

    click.echo("{}: {} nodes, {} edges".format(output_dir, bundle.graph.num_nodes,
                                               bundle.graph.num_edges))
