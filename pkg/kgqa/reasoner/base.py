# reasoner/base.py
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from ..bridge.inputs import TokenEmbedder
from ..errors import DomainError, SupervisionError
from ..kg.dataset import TrainSample
from ..kg.embeddings import EmbeddingProvider
from ..kg.store import KnowledgeGraph
from ..logs import get_logger
from ..numerics import Parameters, Tensor
from ..numerics import ops
from ..retriever.state import Subgraph


@dataclass(frozen=True)
class Candidate:
    """An answer the reasoner may pick: a graph entity or a free-text option."""
    key: str
    entity: Optional[int] = None

    def embedding(self, provider: EmbeddingProvider) -> np.ndarray:
        if self.entity is not None:
            return provider.entity(self.entity)
        return provider.text(self.key)


def build_candidates(
    sample: TrainSample,
    subgraph: Subgraph,
    g: KnowledgeGraph,
    include_gold: bool,
    exclude_seeds: bool = True,
) -> List[Candidate]:
    """Options for multiple-choice samples; otherwise the subgraph's entities
    (seeds dropped) plus, while training, every gold answer.
    """
    if sample.is_multiple_choice:
        return [Candidate(key=opt, entity=g.entity_ids.get(opt)) for opt in sample.options]

    entities = set(subgraph.entities(g)) if not subgraph.is_empty else set()
    if exclude_seeds:
        pruned = entities - set(sample.seeds)
        entities = pruned if pruned or include_gold else entities
    candidates = {g.entity_names[e]: Candidate(key=g.entity_names[e], entity=e) for e in entities}
    if include_gold:
        for text in sample.answer_texts:
            if text not in candidates:
                candidates[text] = Candidate(key=text, entity=g.entity_ids.get(text))
    # entities by id, then free-text answers alphabetically
    ordered = sorted(candidates.values(), key=lambda c: (c.entity is None, -1 if c.entity is None else c.entity, c.key))
    return ordered


@dataclass
class ReasonerFeedback:
    """Log-probabilities over one candidate set, plus the gold marginal when known."""
    candidates: List[Candidate]
    answer_logits: Tensor
    log_probs: Tensor
    gold_logprob: Optional[float] = None

    @property
    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_probs.values)

    def ranking(self) -> List[str]:
        """Candidate keys ordered by descending probability, ties by candidate order."""
        order = np.lexsort((np.arange(len(self.candidates)), -self.log_probs.values))
        return [self.candidates[i].key for i in order]

    def predicted_set(self, relative_threshold: float = 0.5) -> List[str]:
        probs = self.probabilities
        if not len(probs):
            return []
        cutoff = relative_threshold * probs.max()
        return [key for key in self.ranking() if probs[self.index_of(key)] >= cutoff]

    def index_of(self, key: str) -> int:
        for i, c in enumerate(self.candidates):
            if c.key == key:
                return i
        raise KeyError(key)

    def gold_positions(self, gold: Iterable[str]) -> List[int]:
        wanted = set(gold)
        return [i for i, c in enumerate(self.candidates) if c.key in wanted]


def reasoner_loss(feedback: ReasonerFeedback, gold: Sequence[str]) -> Tensor:
    """Negative log-likelihood of the gold answer set (marginal over the gold candidates)."""
    positions = feedback.gold_positions(gold)
    if not positions:
        raise SupervisionError(f"none of the gold answers {list(gold)} is among the candidates")
    gold_lp = ops.logsumexp(ops.take(feedback.log_probs, positions))
    feedback.gold_logprob = min(0.0, gold_lp.item())
    return ops.scale(gold_lp, -1.0)


class ReasonerContract(ABC):
    """What the engine needs from a reasoner: a token embedder of width
    ``d_llm``, trainable parameters phi and a deterministic forward pass.
    """

    reasoner_id = 'base'

    def __init__(self, d_llm: int):
        if d_llm < 1:
            raise DomainError(f"d_llm must be positive, got {d_llm}")
        self.d_llm = d_llm
        self.weights = Parameters('reasoner')
        self.logger = get_logger(f"reasoner.{self.reasoner_id}")

    @property
    @abstractmethod
    def embedder(self) -> TokenEmbedder:
        ...

    @abstractmethod
    def forward(
        self,
        input_seq: Tensor,
        candidates: Sequence[Candidate],
        question_embedding: np.ndarray,
    ) -> ReasonerFeedback:
        ...

    def describe(self) -> Dict[str, Any]:
        return {'reasoner': self.reasoner_id, 'd_llm': self.d_llm, 'parameters': len(self.weights)}
