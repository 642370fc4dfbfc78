# retriever/pruning.py
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, Type

import numpy as np

from ..config import PRUNING_POLICIES, resolve_registry
from ..logs import get_logger


@dataclass
class PruneDecision:
    keep: np.ndarray            # bool per candidate edge: survives into expansion
    triggered: bool
    low_attention: int          # distinct triples with alpha below the threshold

    @property
    def pruned(self) -> int:
        return int((~self.keep).sum())


class PruningPolicy(ABC):
    """Decides which scored candidate edges may grow the frontier."""

    policy_id = 'base'

    def __init__(self, params):
        self.params = params
        self.logger = get_logger(f"pruning.{self.policy_id}")

    def low_attention(self, alpha: np.ndarray, triple_ids: np.ndarray) -> int:
        # a triple scored from both endpoints counts once
        return int(np.unique(triple_ids[alpha < self.params.threshold]).size)

    @abstractmethod
    def decide(self, alpha: np.ndarray, sources: np.ndarray, triple_ids: np.ndarray) -> PruneDecision:
        ...


class ThresholdPruning(PruningPolicy):
    """Prune only when more than ``prune_trigger_budget`` triples score below
    sigma; then keep the candidates strictly above sigma.
    """

    policy_id = 'threshold'

    def decide(self, alpha, sources, triple_ids):
        low = self.low_attention(alpha, triple_ids)
        triggered = low > self.params.prune_trigger_budget
        keep = alpha > self.params.threshold if triggered else alpha > 0.0
        if triggered:
            self.logger.debug("pruning_triggered", low_attention=low, kept=int(keep.sum()))
        return PruneDecision(keep=keep, triggered=triggered, low_attention=low)


class TopKPruning(PruningPolicy):
    """Keep the K best candidates of every source (ties to the lower triple id)."""

    policy_id = 'topk'

    def decide(self, alpha, sources, triple_ids):
        keep = np.zeros(alpha.shape[0], dtype=bool)
        order = np.lexsort((triple_ids, -alpha, sources))
        taken: Dict[int, int] = {}
        for pos in order:
            src = int(sources[pos])
            if taken.get(src, 0) < self.params.top_k:
                keep[pos] = True
                taken[src] = taken.get(src, 0) + 1
        return PruneDecision(keep=keep, triggered=bool((~keep).any()),
                             low_attention=self.low_attention(alpha, triple_ids))


class NoPruning(PruningPolicy):
    policy_id = 'none'

    def decide(self, alpha, sources, triple_ids):
        return PruneDecision(keep=alpha > 0.0, triggered=False, low_attention=self.low_attention(alpha, triple_ids))


def load_policy(params) -> PruningPolicy:
    policy_cls: Type[PruningPolicy] = resolve_registry(PRUNING_POLICIES, params.pruning, 'pruning policy')
    return policy_cls(params)
