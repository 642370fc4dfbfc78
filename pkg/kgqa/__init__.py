"""Attention-grown subgraph retrieval over a knowledge graph, trained jointly
with a pluggable answer reasoner.
"""
from .engine import EngineModules, Prediction, build_engine, build_provider, predict
from .errors import ConfigError, DataError, KGQAError, NumericError, RetrievalError

__version__ = '0.1.0'

__all__ = [
    'ConfigError',
    'DataError',
    'EngineModules',
    'KGQAError',
    'NumericError',
    'Prediction',
    'RetrievalError',
    'build_engine',
    'build_provider',
    'predict',
]
