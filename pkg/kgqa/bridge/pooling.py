# bridge/pooling.py
from dataclasses import dataclass
from typing import Any, Dict, List

import numpy as np

from ..errors import ConfigError, PoolingError
from ..kg.store import KnowledgeGraph
from ..numerics import Parameters, Tensor, glorot
from ..numerics import ops
from ..retriever.state import Subgraph


class BridgeParams:
    """psi: the self-attention pooling scorer and the projection into the
    reasoner's embedding space.
    """

    def __init__(self, dim: int, d_llm: int, hidden: int, rng: np.random.Generator):
        if min(dim, d_llm, hidden) < 1:
            raise ConfigError(f"bridge dimensions must be positive, got dim={dim} d_llm={d_llm} hidden={hidden}")
        self.dim = dim
        self.d_llm = d_llm
        self.hidden = hidden
        self.weights = Parameters('bridge')
        self.attn_weight = self.weights.add('sag.weight', glorot(rng, (1, dim)))
        self.attn_bias = self.weights.add('sag.bias', np.zeros(1))
        self.w1 = self.weights.add('mlp.w1', glorot(rng, (hidden, dim)))
        self.b1 = self.weights.add('mlp.b1', np.zeros(hidden))
        self.w2 = self.weights.add('mlp.w2', glorot(rng, (d_llm, hidden)))
        self.b2 = self.weights.add('mlp.b2', np.zeros(d_llm))

    @classmethod
    def from_config(cls, retriever: Dict[str, Any], bridge: Dict[str, Any], reasoner: Dict[str, Any],
                    rng: np.random.Generator) -> 'BridgeParams':
        return cls(retriever['embedding_dim'], reasoner['d_llm'], bridge['mlp_hidden'], rng)

    def project(self, pooled: Tensor) -> Tensor:
        return ops.linear(ops.tanh(ops.linear(pooled, self.w1, self.b1)), self.w2, self.b2)


@dataclass
class GraphToken:
    vector: Tensor
    provenance: str
    attention: np.ndarray       # A^s over ``entities``
    entities: List[int]

    @property
    def dim(self) -> int:
        return self.vector.shape[0]


def inclusion_weights(subgraph: Subgraph, g: KnowledgeGraph, entities: List[int]) -> Tensor:
    """Per entity, the largest mask value over the selected triples touching it."""
    slot = {e: i for i, e in enumerate(entities)}
    positions: List[int] = []
    owners: List[int] = []
    for pos, tid in enumerate(subgraph.triples):
        h, _, t = g.triple(tid)
        for endpoint in sorted({h, t}):
            positions.append(pos)
            owners.append(slot[endpoint])
    return ops.segment_max(ops.take(subgraph.mask, positions), owners, len(entities))


def sag_pool(subgraph: Subgraph, g: KnowledgeGraph, context: Tensor, params: BridgeParams) -> GraphToken:
    """Self-attention graph pooling into a single soft token.

    ``context`` holds h' for ``subgraph.entities(g)`` row by row. Each entity's
    attention share is scaled by its inclusion weight so the token stays
    differentiable in the edge mask.
    """
    if subgraph.is_empty or subgraph.mask is None:
        raise PoolingError("cannot pool an empty subgraph")
    entities = subgraph.entities(g)
    if context.shape != (len(entities), params.dim):
        raise PoolingError(
            f"context has shape {context.shape}, expected {(len(entities), params.dim)}"
        )
    scores = ops.reshape(ops.linear(context, params.attn_weight, params.attn_bias), (len(entities),))
    attention = ops.softmax(scores)
    weights = ops.mul(attention, inclusion_weights(subgraph, g, entities))
    pooled = ops.sum_rows(ops.scale_rows(context, weights))
    return GraphToken(
        vector=params.project(pooled),
        provenance=subgraph.identifier(),
        attention=attention.values.copy(),
        entities=entities,
    )
