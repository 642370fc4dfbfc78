# retriever/state.py
import hashlib
from dataclasses import dataclass, field, replace
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigError
from ..kg.embeddings import EmbeddingProvider
from ..kg.store import KnowledgeGraph
from ..numerics import Parameters, Tensor, constant, glorot
from ..numerics import ops

PROB_FLOOR = 1e-6


class RetrieverParams:
    """Learnable retriever weights (the edge scorer and the entity update) plus the
    hyperparameters that steer growing and pruning.
    """

    def __init__(
        self,
        dim: int,
        rng: np.random.Generator,
        num_layers: int = 3,
        threshold: float = 0.1,
        prune_trigger_budget: int = 16,
        temperature: float = 1.0,
        pruning: str = 'threshold',
        top_k: int = 10,
        entity_update: bool = True,
        question_interaction: bool = False,
    ):
        if not 0.0 < threshold < 1.0:
            raise ConfigError(f"threshold must lie in (0, 1), got {threshold}")
        if num_layers < 1:
            raise ConfigError(f"num_layers must be >= 1, got {num_layers}")
        if temperature <= 0:
            raise ConfigError(f"temperature must be positive, got {temperature}")
        self.dim = dim
        self.num_layers = num_layers
        self.threshold = threshold
        self.prune_trigger_budget = prune_trigger_budget
        self.temperature = temperature
        self.pruning = pruning
        self.top_k = top_k
        self.entity_update = entity_update
        self.question_interaction = question_interaction

        features = (5 if question_interaction else 4) * dim
        self.weights = Parameters('retriever')
        self.score_weight = self.weights.add('score.weight', glorot(rng, (1, features)))
        self.score_bias = self.weights.add('score.bias', np.zeros(1))
        self.w_self = self.weights.add('update.w1', np.eye(dim) + glorot(rng, (dim, dim), gain=0.1))
        self.w_neigh = self.weights.add('update.w2', glorot(rng, (dim, dim), gain=0.5))

    @classmethod
    def from_config(cls, settings: Dict[str, Any], rng: np.random.Generator) -> 'RetrieverParams':
        return cls(
            dim=settings['embedding_dim'],
            rng=rng,
            num_layers=settings['num_layers'],
            threshold=settings['threshold'],
            prune_trigger_budget=settings['prune_trigger_budget'],
            temperature=settings['temperature'],
            pruning=settings['pruning'],
            top_k=settings['top_k'],
            entity_update=settings['entity_update'],
            question_interaction=settings['question_interaction'],
        )

    def with_settings(self, **changes) -> 'RetrieverParams':
        """Shallow copy sharing the weights but with different hyperparameters."""
        clone = object.__new__(RetrieverParams)
        clone.__dict__.update(self.__dict__)
        for key, value in changes.items():
            if not hasattr(clone, key):
                raise ConfigError(f"unknown retriever setting {key!r}")
            setattr(clone, key, value)
        return clone


@dataclass
class EdgeProbs:
    """The accumulated triple probabilities P, stored sparsely.

    ``triple_ids[i]`` owns ``values[i]``; triples never scored are implicitly 0.
    """
    triple_ids: np.ndarray
    values: Optional[Tensor]

    @classmethod
    def empty(cls) -> 'EdgeProbs':
        return cls(np.zeros(0, dtype=np.int64), None)

    def __len__(self) -> int:
        return int(self.triple_ids.shape[0])

    def as_array(self) -> np.ndarray:
        return np.zeros(0) if self.values is None else self.values.values

    def as_map(self) -> Dict[int, float]:
        return {int(t): float(p) for t, p in zip(self.triple_ids, self.as_array())}

    def slots(self) -> Dict[int, int]:
        return {int(t): i for i, t in enumerate(self.triple_ids)}


@dataclass
class LayerAttention:
    """Directed candidate edges scored in one layer.

    Candidate ``i`` grows triple ``triple_ids[i]`` from ``sources[i]`` to
    ``targets[i]``; ``alpha`` holds the per-source softmax over candidates.
    """
    triple_ids: np.ndarray
    sources: np.ndarray
    targets: np.ndarray
    relations: np.ndarray
    alpha: Optional[Tensor]
    keep: Optional[np.ndarray] = None
    # rows of ``table`` are the embeddings of ``table_entities``
    table: Optional[Tensor] = None
    table_entities: Tuple[int, ...] = ()

    def __len__(self) -> int:
        return int(self.triple_ids.shape[0])

    def as_map(self) -> Dict[int, float]:
        """Triple id -> alpha (the larger of the two directions when both apply)."""
        out: Dict[int, float] = {}
        if self.alpha is None:
            return out
        for tid, a in zip(self.triple_ids, self.alpha.values):
            tid = int(tid)
            out[tid] = max(out.get(tid, 0.0), float(a))
        return out


@dataclass
class LayerTrace:
    layer: int
    frontier_size: int
    candidate_edges: int
    low_attention_edges: int
    pruning_triggered: bool
    pruned_edges: int
    new_entities: int
    alpha: Dict[int, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'layer': self.layer,
            'frontier_size': self.frontier_size,
            'candidate_edges': self.candidate_edges,
            'low_attention_edges': self.low_attention_edges,
            'pruning_triggered': self.pruning_triggered,
            'pruned_edges': self.pruned_edges,
            'new_entities': self.new_entities,
            'alpha': {str(k): v for k, v in sorted(self.alpha.items())},
        }


@dataclass
class RetrievalState:
    """Where a retrieval run stands after some number of layers.

    ``visited`` fixes the row order of ``context``; ``frontier`` holds the entities the next layer
    expands from and is always a subset of the visited entities.
    """
    seeds: Tuple[int, ...]
    frontier: FrozenSet[int]
    visited: Tuple[int, ...]
    context: Tensor
    edge_probs: EdgeProbs
    edge_scores: Dict[int, float] = field(default_factory=dict)
    layer_index: int = 0
    exhausted: bool = False
    last_attention: Optional[LayerAttention] = None
    trace: List[LayerTrace] = field(default_factory=list)

    @classmethod
    def initial(cls, seeds: Sequence[int], g: KnowledgeGraph, provider: EmbeddingProvider) -> 'RetrievalState':
        ordered = tuple(sorted({g.check_entity(s) for s in seeds}))
        return cls(
            seeds=ordered,
            frontier=frozenset(ordered),
            visited=ordered,
            context=constant(provider.entity_matrix(ordered)),
            edge_probs=EdgeProbs.empty(),
        )

    def local_index(self) -> Dict[int, int]:
        return {e: i for i, e in enumerate(self.visited)}

    def evolve(self, **changes) -> 'RetrievalState':
        return replace(self, **changes)

    def embeddings_for(self, entities: Sequence[int], provider: EmbeddingProvider) -> Tensor:
        """Context rows for ``entities``; initial embeddings for any not yet visited."""
        index = self.local_index()
        missing = [e for e in entities if e not in index]
        table = self.context
        if missing:
            extra = {e: len(self.visited) + i for i, e in enumerate(missing)}
            index = {**index, **extra}
            table = ops.concat([self.context, constant(provider.entity_matrix(missing))], axis=0)
        return ops.take_rows(table, [index[e] for e in entities])

    def entity_scores(self, g: KnowledgeGraph) -> Tuple[Tuple[int, ...], Optional[Tensor]]:
        """Per visited entity, the maximum probability over its scored incident triples."""
        probs = self.edge_probs
        if probs.values is None or not len(probs):
            return self.visited, None
        index = self.local_index()
        positions: List[int] = []
        owners: List[int] = []
        for slot, tid in enumerate(probs.triple_ids):
            h, _, t = g.triple(int(tid))
            for endpoint in sorted({h, t}):
                if endpoint in index:
                    positions.append(slot)
                    owners.append(index[endpoint])
        if not positions:
            return self.visited, None
        gathered = ops.take(probs.values, positions)
        return self.visited, ops.segment_max(gathered, owners, len(self.visited))

    def max_reported_score(self, entity: int, g: KnowledgeGraph) -> float:
        """Largest alpha recorded for any scored triple incident to ``entity``, in either direction (reporting only)."""
        best = 0.0
        for tid in g.incident(entity):
            best = max(best, self.edge_scores.get(int(tid), 0.0))
        return best


@dataclass
class Subgraph:
    """Selected triples, ordered by descending probability then ascending id."""
    triples: List[int]
    mask: Optional[Tensor]
    importance: np.ndarray
    probs: Optional[Tensor] = None

    def __len__(self) -> int:
        return len(self.triples)

    @property
    def is_empty(self) -> bool:
        return not self.triples

    def entities(self, g: KnowledgeGraph) -> List[int]:
        found = set()
        for tid in self.triples:
            h, _, t = g.triple(tid)
            found.update((h, t))
        return sorted(found)

    def identifier(self) -> str:
        joined = ','.join(str(t) for t in self.triples)
        return 'sg-' + hashlib.sha1(joined.encode('ascii')).hexdigest()[:12]
