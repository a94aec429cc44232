"""
dirveval - online comparison of rankings on post-click metrics

Loading and validation of experiment config files.
"""
import os
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import yaml
from rxjson import Rx

from .utils import recursive_update_ignore_none

_log = logging.getLogger(__name__)

SCHEMA_FILE = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'experiment_config_schema.yml')

SIMULATE = 'simulate'
REPLAY = 'replay'

DEFAULTS = {
    'mode': SIMULATE,
    'dataset': 'ec',
    'num_items': 50,
    'sample_size': 20,
    'behavior': 'cascade',
    'click_model': 'cascade',
    'policy': 'dirv',
    'gamma': 1.0,
    'predictor_value': 0.0,
    'num_impressions': 10000,
    'num_repeats': 30,
    'num_rankings': 5,
    'depth': 10,
    'duplication_k': 0,
    'seed': 0,
    'checkpoint_interval': 100,
    'output': 'results',
    'attraction_prior': 0.0,
}
FILE_KEYS = ('relevance_file', 'feature_file', 'world_file', 'predictor_file', 'output')
OPTIONAL_KEYS = ('features', 'behavior_position_probs', 'click_model_position_probs', 'predictor')


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = SIMULATE
    dataset: str = 'ec'
    num_items: int = 50
    relevance_file: Optional[str] = None
    feature_file: Optional[str] = None
    # None selects every feature column of the feature file
    features: Optional[Tuple[str, ...]] = None
    sample_size: int = 20
    world_file: Optional[str] = None
    behavior: str = 'cascade'
    behavior_position_probs: dict = field(default_factory=dict)
    click_model: str = 'cascade'
    click_model_position_probs: dict = field(default_factory=dict)
    policy: str = 'dirv'
    gamma: float = 1.0
    predictor: str = 'oracle_noise'
    predictor_value: float = 0.0
    predictor_file: Optional[str] = None
    num_impressions: int = 10000
    num_repeats: int = 30
    num_rankings: int = 5
    depth: int = 10
    duplication_k: int = 0
    seed: int = 0
    checkpoint_interval: int = 100
    output: str = 'results'
    attraction_prior: float = 0.0


def load_experiment_config(config_path):
    """
    Loads an experiment config and validates it against the config schema.
    """
    schema_path = SCHEMA_FILE
    schema = None
    if os.path.isfile(schema_path):
        with open(schema_path, 'r') as schema_file:
            schema_config = yaml.safe_load(schema_file)
            rxf = Rx.Factory({"register_core_types": True})
            schema = rxf.make_schema(schema_config)
    else:
        _log.warning('Config schema description is missing (re-install recommended): {}'.format(schema_path))

    with open(config_path, 'r') as config_file:
        try:
            yaml_config = yaml.safe_load(config_file)
        except yaml.YAMLError as exc:
            raise ConfigInvalidException("'{}' isn't valid YAML: {}".format(config_path, exc)) from exc

    if yaml_config is None:
        return {}
    if schema is not None and not schema.check(yaml_config):
        unknown = sorted(set(yaml_config) - set(DEFAULTS) - set(FILE_KEYS) - set(OPTIONAL_KEYS)) \
            if isinstance(yaml_config, dict) else []
        hint = " (unknown keys: {})".format(unknown) if len(unknown) > 0 else ""
        raise ConfigInvalidException("incorrect format for '{}'{}, should match description in '{}'"
                                     .format(config_path, hint, schema_path))
    return yaml_config


def position_table(probs):
    """
    Convert a list of examination probabilities into a table keyed by rank, starting at rank 1.
    """
    if probs is None:
        return {}
    return {rank: float(prob) for rank, prob in enumerate(probs, start=1)}


def _resolve(path, base_dir):
    if path is None or base_dir is None or os.path.isabs(path):
        return path
    return os.path.join(base_dir, path)


def build_experiment_config(values, base_dir=None):
    """
    Applies defaults to the values of a config file, resolves file paths relative to the config's directory and checks
    that the settings fit together.
    """
    values = dict(values)
    unknown = set(values) - set(DEFAULTS) - set(FILE_KEYS) - set(OPTIONAL_KEYS)
    if len(unknown) > 0:
        raise ConfigInvalidException("unknown keys: {}".format(sorted(unknown)))
    settings = dict(DEFAULTS)
    recursive_update_ignore_none(settings, values)
    for key in FILE_KEYS:
        if key in settings:
            settings[key] = _resolve(settings[key], base_dir)

    if 'predictor' not in settings:
        settings['predictor'] = 'oracle_noise' if settings['mode'] == SIMULATE else 'constant'
    if settings['policy'] == 'dirv_no_varpred':
        settings['predictor'] = 'constant'
        settings['predictor_value'] = 0.0
    if settings.get('features') is not None:
        settings['features'] = tuple(settings['features'])
    settings['behavior_position_probs'] = position_table(settings.get('behavior_position_probs'))
    settings['click_model_position_probs'] = position_table(settings.get('click_model_position_probs'))

    cfg = ExperimentConfig(**settings)
    validate_experiment_config(cfg)
    return cfg


def validate_experiment_config(cfg):
    for key in ('num_items', 'num_repeats', 'depth', 'sample_size', 'checkpoint_interval'):
        if getattr(cfg, key) < 1:
            raise ConfigInvalidException("has to be positive, got {}".format(getattr(cfg, key)), key)
    if cfg.num_rankings < 2:
        raise ConfigInvalidException("at least 2 input rankings are needed, got {}".format(cfg.num_rankings),
                                     'num_rankings')
    for key in ('num_impressions', 'duplication_k', 'seed', 'gamma', 'predictor_value'):
        if getattr(cfg, key) < 0:
            raise ConfigInvalidException("can't be negative, got {}".format(getattr(cfg, key)), key)
    if not 0.0 <= cfg.attraction_prior <= 1.0:
        raise ConfigInvalidException("has to be a probability, got {}".format(cfg.attraction_prior),
                                     'attraction_prior')
    if cfg.mode not in (SIMULATE, REPLAY):
        raise ConfigInvalidException("unknown mode '{}'".format(cfg.mode), 'mode')
    if cfg.duplication_k > cfg.depth:
        raise ConfigInvalidException("duplication_k ({}) can't be larger than depth ({})"
                                     .format(cfg.duplication_k, cfg.depth))

    if cfg.behavior == 'position_based' and len(cfg.behavior_position_probs) == 0:
        raise ConfigInvalidException("position-based users need 'behavior_position_probs'", 'behavior')
    if cfg.click_model == 'position_based' and len(cfg.click_model_position_probs) == 0:
        raise ConfigInvalidException("the position-based click model needs 'click_model_position_probs'",
                                     'click_model')

    if cfg.mode == SIMULATE:
        if cfg.dataset == 'letor':
            _require_file(cfg, 'relevance_file')
            _require_file(cfg, 'feature_file')
            if cfg.features is not None and len(cfg.features) < 2:
                raise ConfigInvalidException("at least 2 feature columns are needed", 'features')
        elif cfg.dataset == 'news':
            _require_file(cfg, 'world_file')
    else:
        if cfg.predictor == 'oracle_noise':
            raise ConfigInvalidException("oracle-noise variance prediction needs a simulated world, "
                                         "use 'constant' or 'table' in replay mode", 'predictor')
        if cfg.policy == 'tdm':
            raise ConfigInvalidException("team-draft multileaving can't be replayed from logged rankings", 'policy')
    if cfg.predictor == 'table':
        _require_file(cfg, 'predictor_file')


def _require_file(cfg, key):
    path = getattr(cfg, key)
    if path is None:
        raise ConfigInvalidException("required for the '{}' dataset".format(cfg.dataset), key)
    if not os.path.isfile(path):
        raise ConfigInvalidException("file not found: '{}'".format(path), key)


def read_experiment_config(config_path, overrides=None):
    """
    Load, default and validate a config file. Overrides that are None leave the file's values untouched.

    Relative paths from the file are resolved against the config's directory, relative paths in the overrides against
    the working directory.
    """
    values = load_experiment_config(config_path)
    if not isinstance(values, dict):
        raise ConfigInvalidException("'{}' has to contain a mapping of keys to values".format(config_path))
    if overrides is not None:
        recursive_update_ignore_none(values, {key: os.path.abspath(value) if key in FILE_KEYS and value is not None
                                              else value for key, value in overrides.items()})
    return build_experiment_config(values, base_dir=os.path.dirname(os.path.abspath(config_path)))


class ConfigInvalidException(Exception):
    """
    Exception raised for invalid config file.
    """

    def __init__(self, message, key=None):
        if key is not None:
            message = "Configuration key '{}' is invalid:\n {}".format(key, message)
        else:
            message = "Configuration is invalid:\n {}".format(message)
        super().__init__(message)
