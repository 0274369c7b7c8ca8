import copy
from enum import Enum
import os

import yaml

from .utils import substitute_env_vars


class ConfigError(Exception):
    pass


class Defaults(Enum):
    REQUIRED = 1


# Learning rates searched for condensation and downstream training
LEARNING_RATE_GRID = [1e-2, 5e-3, 1e-3, 5e-4, 1e-4]

METHODS = ('plain', 'robgc', 'jaccard', 'svd', 'knn', 'whole',
           'robgc-no-corr', 'robgc-no-prop', 'robgc-no-add', 'robgc-no-delete',
           'robgc-no-test-denoise')

REPORT_FORMATS = ('csv', 'markdown', 'json')


class Lookup:
    def __init__(self, attrs=None, path=None):
        self.path = path
        self.attrs = attrs if attrs is not None else {}

    def _get_path(self, key):
        if self.path is not None:
            return self.path + '/' + key
        else:
            return key

    def section(self, key):
        attrs = self.attrs.get(key)
        if attrs is None:
            attrs = {}
        if not isinstance(attrs, dict):
            raise ConfigError("{} must be a mapping".format(self._get_path(key)))
        return Lookup(attrs, self._get_path(key))

    def has(self, key):
        return self.attrs.get(key) is not None

    def _get(self, key, default):
        if default is Defaults.REQUIRED:
            try:
                return self.attrs[key]
            except KeyError:
                raise ConfigError("A value is required for {}".format(self._get_path(key))) \
                    from None
        else:
            return self.attrs.get(key, default)

    def get_str(self, key, default=Defaults.REQUIRED):
        val = self._get(key, default)
        if default is None and val is None:
            return None

        if not isinstance(val, str):
            raise ConfigError("{} must be a string".format(self._get_path(key)))

        return substitute_env_vars(val)

    def get_choice(self, key, choices, default=Defaults.REQUIRED):
        val = self.get_str(key, default)
        if val not in choices:
            raise ConfigError("{} must be one of {}".format(self._get_path(key),
                                                            ', '.join(choices)))
        return val

    def get_bool(self, key, default=Defaults.REQUIRED):
        val = self._get(key, default)
        if not isinstance(val, bool):
            raise ConfigError("{} must be a boolean".format(self._get_path(key)))

        return val

    def get_int(self, key, default=Defaults.REQUIRED):
        val = self._get(key, default)
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError("{} must be an integer".format(self._get_path(key)))

        return val

    def get_float(self, key, default=Defaults.REQUIRED):
        val = self._get(key, default)
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError("{} must be a number".format(self._get_path(key)))

        return float(val)

    def get_int_list(self, key, default=Defaults.REQUIRED):
        val = self._get(key, default)
        if not isinstance(val, list) or \
                not all(isinstance(v, int) and not isinstance(v, bool) for v in val):
            raise ConfigError("{} must be a list of integers".format(self._get_path(key)))

        return list(val)

    def get_float_list(self, key, default=Defaults.REQUIRED):
        val = self._get(key, default)
        if not isinstance(val, list) or \
                not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in val):
            raise ConfigError("{} must be a list of numbers".format(self._get_path(key)))

        return [float(v) for v in val]

    def get_str_list(self, key, default=Defaults.REQUIRED):
        val = self._get(key, default)
        if not isinstance(val, list) or not all(isinstance(v, str) for v in val):
            raise ConfigError("{} must be a list of strings".format(self._get_path(key)))

        return [substitute_env_vars(v) for v in val]

    def check(self, condition, key, message):
        if not condition:
            raise ConfigError("{} {}".format(self._get_path(key), message))


class _SeededConfig:
    def with_seed(self, seed):
        result = copy.copy(self)
        result.seed = seed
        return result

    def replace(self, **kwargs):
        result = copy.copy(self)
        for k, v in kwargs.items():
            if not hasattr(result, k):
                raise AttributeError(k)
            setattr(result, k, v)
        return result


class CondenseConfig(_SeededConfig):
    def __init__(self, lookup=None):
        lookup = lookup or Lookup()
        self.ratio = lookup.get_float('ratio', 0.1)
        self.method = lookup.get_choice('method', ('distribution', 'gradient'), 'gradient')
        self.relay_propagation_steps = lookup.get_int('relay_propagation_steps', 2)
        self.outer_epochs = lookup.get_int('outer_epochs', 100)
        self.match_steps = lookup.get_int('match_steps', 10)
        self.feature_lr = lookup.get_float('feature_lr', 1e-2)
        self.relay_lr = lookup.get_float('relay_lr', 1e-2)
        self.relay_inits = lookup.get_int('relay_inits', 5)
        self.adjacency_threshold = lookup.get_float('adjacency_threshold', 0.5)
        self.seed = lookup.get_int('seed', 0)

        lookup.check(0 < self.ratio < 0.2, 'ratio', "must be in (0, 0.2)")
        for key in ('relay_propagation_steps', 'match_steps', 'relay_inits'):
            lookup.check(getattr(self, key) >= 1, key, "must be >= 1")
        lookup.check(self.outer_epochs >= 0, 'outer_epochs', "must be >= 0")
        for key in ('feature_lr', 'relay_lr'):
            lookup.check(getattr(self, key) > 0, key, "must be > 0")
        lookup.check(0 <= self.adjacency_threshold < 1, 'adjacency_threshold',
                     "must be in [0, 1)")


class DenoiseConfig(_SeededConfig):
    def __init__(self, lookup=None):
        lookup = lookup or Lookup()
        self.k = lookup.get_int('k', 2)
        self.hops = lookup.get_int('hops', 3)
        self.r_nn = lookup.get_int('r_nn', 3)
        self.alpha = lookup.get_float('alpha', 0.9)
        self.lp_iterations = lookup.get_int('lp_iterations', 10)
        self.candidates = lookup.get_int('candidates', 20)
        self.period = lookup.get_int('period', 50)
        self.support_fraction = lookup.get_float('support_fraction', 0.5)
        self.use_correlation = lookup.get_bool('use_correlation', True)
        self.use_propagation = lookup.get_bool('use_propagation', True)
        self.use_deletion = lookup.get_bool('use_deletion', True)
        self.use_addition = lookup.get_bool('use_addition', True)
        self.seed = lookup.get_int('seed', 0)

        lookup.check(self.k >= 1, 'k', "must be >= 1")
        lookup.check(1 <= self.hops <= 5, 'hops', "must be between 1 and 5")
        lookup.check(self.r_nn >= 1, 'r_nn', "must be >= 1")
        lookup.check(0 < self.alpha < 1, 'alpha', "must be in (0, 1)")
        lookup.check(self.lp_iterations >= 1, 'lp_iterations', "must be >= 1")
        lookup.check(self.candidates >= 2, 'candidates', "must be >= 2")
        lookup.check(self.period >= 1, 'period', "must be >= 1")
        lookup.check(0 < self.support_fraction < 1, 'support_fraction', "must be in (0, 1)")


class BaselineConfig(_SeededConfig):
    def __init__(self, lookup=None):
        lookup = lookup or Lookup()
        self.jaccard_threshold = lookup.get_float('jaccard_threshold', 0.01)
        self.svd_rank = lookup.get_int('svd_rank', 50)
        self.svd_cutoff = lookup.get_float('svd_cutoff', 0.5)
        self.knn_k = lookup.get_int('knn_k', 3)
        self.seed = lookup.get_int('seed', 0)

        lookup.check(0 <= self.jaccard_threshold <= 1, 'jaccard_threshold', "must be in [0, 1]")
        lookup.check(self.svd_rank >= 1, 'svd_rank', "must be >= 1")
        lookup.check(self.knn_k >= 1, 'knn_k', "must be >= 1")


class TrainConfig(_SeededConfig):
    def __init__(self, lookup=None):
        lookup = lookup or Lookup()
        self.learning_rate_grid = lookup.get_float_list('learning_rate_grid', LEARNING_RATE_GRID)
        self.learning_rate = lookup.get_float('learning_rate', 1e-2)
        self.epochs = lookup.get_int('epochs', 300)
        self.weight_decay = lookup.get_float('weight_decay', 5e-4)
        self.patience = lookup.get_int('patience', 50)
        self.hidden = lookup.get_int('hidden', 256)
        self.steps = lookup.get_int('steps', 2)
        self.seed = lookup.get_int('seed', 0)

        lookup.check(self.learning_rate in self.learning_rate_grid, 'learning_rate',
                     "must be one of learning_rate_grid {}".format(self.learning_rate_grid))
        lookup.check(self.epochs >= 0, 'epochs', "must be >= 0")
        lookup.check(self.weight_decay >= 0, 'weight_decay', "must be >= 0")
        lookup.check(self.patience >= 0, 'patience', "must be >= 0")
        lookup.check(self.hidden >= 1, 'hidden', "must be >= 1")
        lookup.check(self.steps >= 0, 'steps', "must be >= 0")


class DatasetConfig:
    def __init__(self, lookup):
        self.name = lookup.get_str('name', 'sbm')
        self.directory = lookup.get_str('directory', None)
        self.center_features = lookup.get_bool('center_features', True)
        self.synthetic = None
        if self.directory is None:
            # Imported here since the synthetic source pulls in numpy machinery
            from .datasource import DatasetError
            from .datasource.synthetic import SyntheticSpec

            synthetic = lookup.section('synthetic')
            try:
                self.synthetic = SyntheticSpec(
                    classes=synthetic.get_int('classes', 4),
                    nodes_per_class=synthetic.get_int('nodes_per_class', 150),
                    intra_p=synthetic.get_float('intra_p', 0.05),
                    inter_p=synthetic.get_float('inter_p', 0.005),
                    feature_dim=synthetic.get_int('feature_dim', 32),
                    feature_noise=synthetic.get_float('feature_noise', 0.6),
                    seed=synthetic.get_int('seed', 0),
                    split=synthetic.get_float_list('split', [0.6, 0.2, 0.2]))
            except DatasetError as e:
                raise ConfigError("dataset/synthetic: {}".format(e)) from None
        elif lookup.has('synthetic'):
            raise ConfigError("dataset: directory and synthetic cannot both be set")


class NoiseConfig:
    def __init__(self, lookup):
        self.levels = lookup.get_float_list('levels', [0.0])
        self.add_fraction = lookup.get_float('add_fraction', 0.5)

        lookup.check(all(0 <= level <= 2 for level in self.levels), 'levels',
                     "must all be in [0, 2]")
        lookup.check(0 <= self.add_fraction <= 1, 'add_fraction', "must be in [0, 1]")


class ReportConfig:
    def __init__(self, lookup):
        self.formats = lookup.get_str_list('formats', list(REPORT_FORMATS))
        self.timings = lookup.get_bool('timings', True)
        self.save_models = lookup.get_bool('save_models', False)

        for f in self.formats:
            lookup.check(f in REPORT_FORMATS, 'formats',
                         "must only contain {}".format(', '.join(REPORT_FORMATS)))


def parse_override(override):
    """'denoise/alpha=0.5' => (['denoise', 'alpha'], 0.5)"""
    if '=' not in override:
        raise ConfigError("override {!r} must have the form key/path=value".format(override))
    key, raw = override.split('=', 1)
    path = [p for p in key.strip().split('/') if p]
    if not path:
        raise ConfigError("override {!r} has an empty key".format(override))
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ConfigError("override {!r}: {}".format(override, e)) from None

    return path, value


def apply_override(yml, path, value):
    node = yml
    for i, part in enumerate(path[:-1]):
        child = node.get(part)
        if child is None:
            child = node[part] = {}
        elif not isinstance(child, dict):
            raise ConfigError("cannot override {}: {} is not a mapping"
                              .format('/'.join(path), '/'.join(path[:i + 1])))
        node = child
    node[path[-1]] = value


class Config:
    def __init__(self, path, overrides=()):
        with open(path, 'r') as f:
            yml = yaml.safe_load(f)

        if not isinstance(yml, dict):
            raise ConfigError("Top level of the config file must be an object with keys")

        for override in overrides:
            if isinstance(override, str):
                apply_override(yml, *parse_override(override))
            else:
                apply_override(yml, *override)

        self.path = path
        lookup = Lookup(yml)

        self.dataset = DatasetConfig(lookup.section('dataset'))
        self.noise = NoiseConfig(lookup.section('noise'))
        self.condense = CondenseConfig(lookup.section('condense'))
        self.denoise = DenoiseConfig(lookup.section('denoise'))
        self.baselines = BaselineConfig(lookup.section('baselines'))
        self.train = TrainConfig(lookup.section('train'))
        self.report = ReportConfig(lookup.section('report'))

        self.model = lookup.get_choice('model', ('sgc', 'gcn'), 'gcn')
        self.methods = lookup.get_str_list('methods', ['plain', 'robgc'])
        for method in self.methods:
            if method not in METHODS:
                raise ConfigError("methods: unknown method {!r}; known methods are {}"
                                  .format(method, ', '.join(METHODS)))

        self.seeds = lookup.get_int_list('seeds', [0])
        env_seed = os.environ.get('ROBGC_SEED')
        if env_seed:
            try:
                self.seeds = [int(env_seed)]
            except ValueError:
                raise ConfigError("ROBGC_SEED must be an integer") from None
        if not self.seeds:
            raise ConfigError("seeds must contain at least one seed")

        self.output_dir = lookup.get_str('output_dir', 'out')
