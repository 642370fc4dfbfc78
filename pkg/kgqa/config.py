# config.py
import copy
import importlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from dotenv import load_dotenv

from .errors import ConfigError

# Base directory of the project
BASE_DIR = Path(__file__).parent.parent

# Default locations; a command writes under --out, else under OUTPUT_DIR/<command>
OUTPUT_DIR = BASE_DIR / 'runs'
CONFIGS_DIR = BASE_DIR / 'configs'

PATHS_DEFAULTS: Dict[str, Any] = {
    'data_dir': None,         # directory produced by gen-data; fills the paths below
    'kg': None,
    'train': None,
    'dev': None,
    'test': None,
    'embeddings': None,       # precomputed '<count> <dim>' table; hash mode when unset
    'checkpoint': None,       # model checkpoint stem (no suffix)
    'cam_checkpoint': None,
    'predictions': None,      # JSONL {id, predictions: [...]} scored by eval
}

RETRIEVER_DEFAULTS: Dict[str, Any] = {
    'embedding_dim': 512,
    'num_layers': 3,
    'threshold': 0.1,
    'prune_trigger_budget': 16,
    'temperature': 1.0,
    'pruning': 'threshold',
    'top_k': 10,
    'entity_update': True,
    'question_interaction': False,
    'use_cam': False,
    'fixed_budget': 10,
    'min_layers': 1,
}

BRIDGE_DEFAULTS: Dict[str, Any] = {
    'graph_token': True,
    'textual_subgraph': True,
    'mlp_hidden': 64,
}

REASONER_DEFAULTS: Dict[str, Any] = {
    'name': 'toy',
    'd_llm': 64,
    'head_hidden': 64,
    'vocab_buckets': 4096,
    'exclude_seeds': True,
    'f1_relative_threshold': 0.5,
}

TRAINING_DEFAULTS: Dict[str, Any] = {
    'mode': 'full',
    'learning_rate': 1e-5,
    'beta1': 0.9,
    'beta2': 0.999,
    'adam_eps': 1e-8,
    'batch_size': 2,
    'eval_batch_size': 4,
    'max_epochs': 100,
    'patience': 5,
    'weight_reasoner': 1.0,
    'weight_feedback': 1.0,
    'weight_graph': 1.0,
}

CAM_DEFAULTS: Dict[str, Any] = {
    'max_hops': 4,
    'hidden': 64,
    'learning_rate': 1e-2,
    'epochs': 200,
    'batch_size': 32,
    'triples_per_hop': 5,
}

EVAL_DEFAULTS: Dict[str, Any] = {
    'split': 'test',
    'casefold': False,
    'timing_warmup': 2,
    'timing_repeats': 3,
    'ablation_seeds': [0, 1, 2],
}

SYNTHETIC_DEFAULTS: Dict[str, Any] = {
    'num_entities': 2000,
    'num_relations': 24,
    'branching': 3,
    'min_hops': 1,
    'max_hops': 3,
    'distractor_density': 3.0,
    'num_questions': 2000,
    'multiple_choice_fraction': 0.0,
    'num_options': 4,
}

SECTION_DEFAULTS: Dict[str, Dict[str, Any]] = {
    'paths': PATHS_DEFAULTS,
    'retriever': RETRIEVER_DEFAULTS,
    'bridge': BRIDGE_DEFAULTS,
    'reasoner': REASONER_DEFAULTS,
    'training': TRAINING_DEFAULTS,
    'cam': CAM_DEFAULTS,
    'eval': EVAL_DEFAULTS,
    'synthetic': SYNTHETIC_DEFAULTS,
}

TOP_LEVEL_DEFAULTS: Dict[str, Any] = {
    'seed': 0,
    'workers': 1,
}

COMMANDS = ('gen-data', 'train-cam', 'train', 'retrieve', 'eval', 'ablate')
TRAINING_MODES = ('full', 'feedback_only', 'separate')

# Pruning policies selectable with retriever.pruning
PRUNING_POLICIES = {
    'threshold': {
        'name': 'Attention threshold with trigger budget',
        'class': 'kgqa.retriever.pruning.ThresholdPruning',
    },
    'topk': {
        'name': 'Per-source top-K attention',
        'class': 'kgqa.retriever.pruning.TopKPruning',
    },
    'none': {
        'name': 'No pruning',
        'class': 'kgqa.retriever.pruning.NoPruning',
    },
}

# Reasoners selectable with reasoner.name
REASONERS = {
    'toy': {
        'name': 'Bilinear-plus-perceptron candidate scorer',
        'class': 'kgqa.reasoner.toy.ToyReasoner',
    },
}

# Arms run by the ablate command: (name, overrides)
ABLATION_ARMS: List[Dict[str, Any]] = [
    # the default full-mode settings; also the end-to-end reference for 'separate'
    {'arm': 'threshold_0.1', 'retriever': {'pruning': 'threshold', 'threshold': 0.1}},
    {'arm': 'threshold_0.2', 'retriever': {'pruning': 'threshold', 'threshold': 0.2}},
    {'arm': 'threshold_0.5', 'retriever': {'pruning': 'threshold', 'threshold': 0.5}},
    {'arm': 'top_5', 'retriever': {'pruning': 'topk', 'top_k': 5}},
    {'arm': 'top_10', 'retriever': {'pruning': 'topk', 'top_k': 10}},
    {'arm': 'top_20', 'retriever': {'pruning': 'topk', 'top_k': 20}},
    {'arm': 'without_pruning', 'retriever': {'pruning': 'none'}},
    {'arm': 'without_entity_update', 'retriever': {'entity_update': False}},
    {'arm': 'without_soft_token', 'bridge': {'graph_token': False}},
    {'arm': 'without_textual_subgraph', 'bridge': {'textual_subgraph': False}},
    {'arm': 'separate', 'training': {'mode': 'separate'}},
]


def load_class(dotted_path: str):
    """Dynamically load a class from its dotted path"""
    module_path, _, class_name = dotted_path.rpartition('.')
    try:
        module = importlib.import_module(module_path)
        return getattr(module, class_name)
    except (ImportError, AttributeError) as e:
        raise ConfigError(f"cannot load {dotted_path}: {e}")


def resolve_registry(registry: Mapping[str, Mapping[str, str]], key: str, what: str):
    if key not in registry:
        raise ConfigError(f"unknown {what} {key!r}; expected one of {sorted(registry)}")
    return load_class(registry[key]['class'])


# Environment configuration
class Config:
    DEBUG = False
    TESTING = False

    # Logging configuration
    LOG_FORMAT = 'console'
    LOG_LEVEL = 'INFO'
    LOG_FILE: Optional[str] = None

    def __init__(self):
        self.LOG_LEVEL = os.getenv('KGQA_LOG_LEVEL', self.LOG_LEVEL)
        self.LOG_FILE = os.getenv('KGQA_LOG_FILE', self.LOG_FILE)


class DevelopmentConfig(Config):
    DEBUG = True
    LOG_LEVEL = 'DEBUG'

    def __init__(self):
        super().__init__()


class ProductionConfig(Config):
    LOG_FORMAT = 'json'
    LOG_LEVEL = 'WARNING'

    def __init__(self):
        super().__init__()


class TestingConfig(Config):
    TESTING = True
    LOG_LEVEL = 'DEBUG'

    def __init__(self):
        super().__init__()


# Export configs
config_by_name = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'test': TestingConfig,
}

env_mapping = {
    'dev': 'development',
    'prod': 'production',
    'test': 'test',
}


def environment_config() -> Config:
    load_dotenv()
    env = os.getenv('KGQA_ENV', 'development')
    env = env_mapping.get(env, env)
    if env not in config_by_name:
        raise ConfigError(f"unknown KGQA_ENV {env!r}; expected one of {sorted(config_by_name)}")
    return config_by_name[env]()


@dataclass
class RunConfig:
    """Validated settings for one command.

    Layering is defaults < config file < command-line overrides; every key must
    exist in the defaults.
    """
    command: str
    seed: int = 0
    workers: int = 1
    paths: Dict[str, Any] = field(default_factory=lambda: copy.deepcopy(PATHS_DEFAULTS))
    retriever: Dict[str, Any] = field(default_factory=lambda: copy.deepcopy(RETRIEVER_DEFAULTS))
    bridge: Dict[str, Any] = field(default_factory=lambda: copy.deepcopy(BRIDGE_DEFAULTS))
    reasoner: Dict[str, Any] = field(default_factory=lambda: copy.deepcopy(REASONER_DEFAULTS))
    training: Dict[str, Any] = field(default_factory=lambda: copy.deepcopy(TRAINING_DEFAULTS))
    cam: Dict[str, Any] = field(default_factory=lambda: copy.deepcopy(CAM_DEFAULTS))
    eval: Dict[str, Any] = field(default_factory=lambda: copy.deepcopy(EVAL_DEFAULTS))
    synthetic: Dict[str, Any] = field(default_factory=lambda: copy.deepcopy(SYNTHETIC_DEFAULTS))

    def section(self, name: str) -> Dict[str, Any]:
        return getattr(self, name)

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {'command': self.command, 'seed': self.seed, 'workers': self.workers}
        for name in SECTION_DEFAULTS:
            out[name] = copy.deepcopy(self.section(name))
        return out

    def with_overrides(self, overrides: Mapping[str, Any]) -> 'RunConfig':
        """Copy with nested overrides ({'retriever': {'threshold': 0.2}, 'seed': 1})."""
        merged = self.to_dict()
        _merge(merged, overrides, prefix='')
        return build_run_config(merged)

    def validate(self) -> 'RunConfig':
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {list(COMMANDS)}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")

        r = self.retriever
        if not 0.0 < r['threshold'] < 1.0:
            raise ConfigError(f"retriever.threshold must lie in (0, 1), got {r['threshold']}")
        if r['temperature'] <= 0:
            raise ConfigError(f"retriever.temperature must be positive, got {r['temperature']}")
        for key in ('num_layers', 'embedding_dim', 'fixed_budget', 'top_k', 'min_layers'):
            if r[key] < 1:
                raise ConfigError(f"retriever.{key} must be >= 1, got {r[key]}")
        if r['prune_trigger_budget'] < 0:
            raise ConfigError(f"retriever.prune_trigger_budget must be >= 0, got {r['prune_trigger_budget']}")
        if r['pruning'] not in PRUNING_POLICIES:
            raise ConfigError(f"retriever.pruning must be one of {sorted(PRUNING_POLICIES)}, got {r['pruning']!r}")

        if self.reasoner['name'] not in REASONERS:
            raise ConfigError(f"reasoner.name must be one of {sorted(REASONERS)}, got {self.reasoner['name']!r}")
        for key in ('d_llm', 'head_hidden', 'vocab_buckets'):
            if self.reasoner[key] < 1:
                raise ConfigError(f"reasoner.{key} must be >= 1, got {self.reasoner[key]}")
        if self.bridge['mlp_hidden'] < 1:
            raise ConfigError(f"bridge.mlp_hidden must be >= 1, got {self.bridge['mlp_hidden']}")

        t = self.training
        if t['mode'] not in TRAINING_MODES:
            raise ConfigError(f"training.mode must be one of {list(TRAINING_MODES)}, got {t['mode']!r}")
        if t['learning_rate'] <= 0:
            raise ConfigError(f"training.learning_rate must be positive, got {t['learning_rate']}")
        for key in ('batch_size', 'eval_batch_size', 'max_epochs'):
            if t[key] < 1:
                raise ConfigError(f"training.{key} must be >= 1, got {t[key]}")
        if t['patience'] < 0:
            raise ConfigError(f"training.patience must be >= 0, got {t['patience']}")
        for key in ('weight_reasoner', 'weight_feedback', 'weight_graph'):
            if t[key] < 0:
                raise ConfigError(f"training.{key} must be >= 0, got {t[key]}")

        c = self.cam
        for key in ('max_hops', 'hidden', 'epochs', 'batch_size', 'triples_per_hop'):
            if c[key] < 1:
                raise ConfigError(f"cam.{key} must be >= 1, got {c[key]}")
        if c['learning_rate'] <= 0:
            raise ConfigError(f"cam.learning_rate must be positive, got {c['learning_rate']}")

        if self.eval['split'] not in ('train', 'dev', 'test'):
            raise ConfigError(f"eval.split must be train, dev or test, got {self.eval['split']!r}")
        if not self.eval['ablation_seeds']:
            raise ConfigError("eval.ablation_seeds must list at least one seed")

        s = self.synthetic
        if not 1 <= s['min_hops'] <= s['max_hops']:
            raise ConfigError(f"synthetic hop range [{s['min_hops']}, {s['max_hops']}] is invalid")
        if s['max_hops'] > c['max_hops']:
            raise ConfigError(f"synthetic.max_hops {s['max_hops']} exceeds cam.max_hops {c['max_hops']}")
        if not 0.0 <= s['multiple_choice_fraction'] <= 1.0:
            raise ConfigError("synthetic.multiple_choice_fraction must lie in [0, 1]")
        return self


def _check_type(key: str, default: Any, value: Any) -> Any:
    if default is None:
        if value is not None and not isinstance(value, str):
            raise ConfigError(f"{key} must be a string path or null, got {value!r}")
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true or false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{key} must be a list, got {value!r}")
        return list(value)
    if not isinstance(value, type(default)):
        raise ConfigError(f"{key} must be {type(default).__name__}, got {value!r}")
    return value


def _merge(target: Dict[str, Any], overrides: Mapping[str, Any], prefix: str) -> None:
    for key, value in overrides.items():
        name = f"{prefix}{key}"
        if key not in target:
            raise ConfigError(f"unknown config key {name!r}")
        if isinstance(target[key], dict):
            if not isinstance(value, Mapping):
                raise ConfigError(f"config key {name!r} must be an object")
            _merge(target[key], value, prefix=f"{name}.")
        else:
            target[key] = value


def build_run_config(data: Mapping[str, Any]) -> RunConfig:
    """Construct and validate a RunConfig from a fully merged mapping."""
    known = {'command'} | set(TOP_LEVEL_DEFAULTS) | set(SECTION_DEFAULTS)
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
    kwargs: Dict[str, Any] = {'command': data.get('command')}
    for key, default in TOP_LEVEL_DEFAULTS.items():
        kwargs[key] = _check_type(key, default, data.get(key, default))
    for section, defaults in SECTION_DEFAULTS.items():
        values = copy.deepcopy(defaults)
        for key, value in (data.get(section) or {}).items():
            if key not in defaults:
                raise ConfigError(f"unknown config key '{section}.{key}'")
            values[key] = _check_type(f"{section}.{key}", defaults[key], value)
        kwargs[section] = values
    return RunConfig(**kwargs).validate()


def resolve_config_path(name: Union[str, Path]) -> Path:
    """A path as given, or a bare name such as ``synthetic`` looked up in ``configs/``."""
    path = Path(name)
    if not path.exists() and not path.suffix:
        bundled = CONFIGS_DIR / f'{name}.json'
        if bundled.exists():
            return bundled
    return path


def load_run_config(
    command: str,
    config_file: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    merged: Dict[str, Any] = {'command': command}
    merged.update(copy.deepcopy(TOP_LEVEL_DEFAULTS))
    for section, defaults in SECTION_DEFAULTS.items():
        merged[section] = copy.deepcopy(defaults)

    if config_file:
        config_file = resolve_config_path(config_file)
        try:
            with open(config_file) as f:
                file_values = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config file {config_file}: {e}")
        if not isinstance(file_values, dict):
            raise ConfigError(f"config file {config_file} must hold a JSON object")
        file_values.pop('command', None)
        _merge(merged, file_values, prefix='')
    if overrides:
        _merge(merged, overrides, prefix='')

    config = build_run_config(merged)
    _fill_data_paths(config)
    return config


def _fill_data_paths(config: RunConfig) -> None:
    data_dir = config.paths.get('data_dir')
    if not data_dir:
        return
    base = Path(data_dir)
    defaults = {'kg': 'kg.tsv', 'train': 'train.jsonl', 'dev': 'dev.jsonl', 'test': 'test.jsonl'}
    for key, filename in defaults.items():
        if not config.paths.get(key):
            config.paths[key] = str(base / filename)
