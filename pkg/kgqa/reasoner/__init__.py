from typing import Any, Dict

import numpy as np

from ..config import REASONERS, resolve_registry
from ..kg.embeddings import EmbeddingProvider
from .base import Candidate, ReasonerContract, ReasonerFeedback, build_candidates, reasoner_loss
from .toy import ToyHead, ToyReasoner, toy_forward


def load_reasoner(settings: Dict[str, Any], provider: EmbeddingProvider,
                  rng: np.random.Generator) -> ReasonerContract:
    """Instantiate the reasoner named by ``settings['name']``"""
    reasoner_cls = resolve_registry(REASONERS, settings['name'], 'reasoner')
    return reasoner_cls.from_config(settings, provider, rng)


__all__ = [
    'Candidate',
    'ReasonerContract',
    'ReasonerFeedback',
    'ToyHead',
    'ToyReasoner',
    'build_candidates',
    'load_reasoner',
    'reasoner_loss',
    'toy_forward',
]
