# retriever/core.py
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from ..errors import DomainError, RetrievalError
from ..kg.embeddings import EmbeddingProvider
from ..kg.store import KnowledgeGraph
from ..logs import get_logger
from ..numerics import Tensor, constant
from ..numerics import ops
from ..storage import StorageManager
from .attention import attention_scores, update_entity_embeddings
from .pruning import load_policy
from .state import PROB_FLOOR, EdgeProbs, LayerTrace, RetrievalState, RetrieverParams, Subgraph

logger = get_logger(__name__)


def grow_prune_step(
    state: RetrievalState,
    g: KnowledgeGraph,
    q_embed: Tensor,
    params: RetrieverParams,
    provider: EmbeddingProvider,
) -> RetrievalState:
    """One growing/pruning layer.

    Scores the frontier edges, lets the pruning policy drop low-attention
    edges from expansion, grows the frontier along the survivors and folds the
    layer's attention into P by element-wise maximum.
    """
    if state.layer_index >= params.num_layers:
        raise RetrievalError(f"layer {state.layer_index} exceeds the configured {params.num_layers} layers")

    attention = attention_scores(state, g, q_embed, params, provider)
    layer = state.layer_index + 1
    if attention.alpha is None:
        trace = LayerTrace(layer, len(state.frontier), 0, 0, False, 0, 0)
        return state.evolve(exhausted=True, last_attention=attention, trace=state.trace + [trace])

    alpha = attention.alpha.values
    decision = load_policy(params).decide(alpha, attention.sources, attention.triple_ids)
    attention.keep = decision.keep
    trace = LayerTrace(
        layer=layer,
        frontier_size=len(state.frontier),
        candidate_edges=len(attention),
        low_attention_edges=decision.low_attention,
        pruning_triggered=decision.triggered,
        pruned_edges=decision.pruned,
        new_entities=0,
        alpha=attention.as_map(),
    )
    if not decision.keep.any():
        logger.debug("frontier_exhausted", layer=layer)
        return state.evolve(exhausted=True, last_attention=attention, trace=state.trace + [trace])

    grown = {int(t) for t in attention.targets[decision.keep]}
    new_entities = sorted(grown - set(state.visited))
    visited = tuple(state.visited) + tuple(new_entities)
    table_index = {e: i for i, e in enumerate(attention.table_entities)}
    context = ops.take_rows(attention.table, [table_index[e] for e in visited])
    trace.new_entities = len(new_entities)

    edge_probs = _fold_probabilities(state.edge_probs, attention.triple_ids, attention.alpha)
    edge_scores = dict(state.edge_scores)
    edge_scores.update(trace.alpha)

    return state.evolve(
        frontier=frozenset(state.frontier | grown),
        visited=visited,
        context=context,
        edge_probs=edge_probs,
        edge_scores=edge_scores,
        layer_index=layer,
        last_attention=attention,
        trace=state.trace + [trace],
    )


def _fold_probabilities(previous: EdgeProbs, triple_ids: np.ndarray, alpha: Tensor) -> EdgeProbs:
    """P <- max(P, alpha) per triple; the two directions of a triple count once."""
    slots = previous.slots()
    order = list(previous.triple_ids)
    for tid in triple_ids:
        tid = int(tid)
        if tid not in slots:
            slots[tid] = len(order)
            order.append(tid)
    layer_alpha = ops.segment_max(alpha, [slots[int(t)] for t in triple_ids], len(order))
    if previous.values is None:
        merged = layer_alpha
    else:
        padding = len(order) - len(previous)
        extended = previous.values
        if padding:
            extended = ops.concat([previous.values, constant(np.zeros(padding))])
        merged = ops.maximum(extended, layer_alpha)
    return EdgeProbs(np.asarray(order, dtype=np.int64), merged)


def sample_mask(
    edge_probs: Tensor,
    tau: float,
    rng: Optional[np.random.Generator] = None,
    noise: Optional[Union[float, np.ndarray]] = None,
) -> Tensor:
    """M = sigmoid((logit(eps) + logit(P)) / tau) with eps ~ U(0, 1) per edge.

    ``noise`` pins eps (0.5 gives the noiseless mask used at inference).
    """
    if tau <= 0:
        raise DomainError(f"temperature must be positive, got {tau}")
    n = edge_probs.shape[0]
    if noise is None:
        if rng is None:
            raise DomainError("sample_mask needs an rng or fixed noise")
        eps = rng.uniform(0.0, 1.0, size=n)
    else:
        eps = np.broadcast_to(np.asarray(noise, dtype=np.float64), (n,)).copy()
    eps = np.clip(eps, PROB_FLOOR, 1.0 - PROB_FLOOR)
    noise_logit = np.log(eps) - np.log1p(-eps)

    p = ops.clamp(edge_probs, PROB_FLOOR, 1.0 - PROB_FLOOR)
    p_logit = ops.sub(ops.log(p), ops.log(ops.one_minus(p)))
    return ops.sigmoid(ops.scale(ops.add_const(p_logit, noise_logit), 1.0 / tau))


def select_subgraph(edge_probs: EdgeProbs, mask: Optional[Tensor], budget: int) -> Subgraph:
    """Top-``budget`` triples by P (ties to the lower triple id) carrying their mask values."""
    if budget < 1:
        raise DomainError(f"budget must be >= 1, got {budget}")
    values = edge_probs.as_array()
    positive = np.flatnonzero(values > 0.0)
    if not len(positive) or mask is None or edge_probs.values is None:
        return Subgraph(triples=[], mask=None, importance=np.zeros(0), probs=None)
    order = positive[np.lexsort((edge_probs.triple_ids[positive], -values[positive]))][:budget]
    return Subgraph(
        triples=[int(edge_probs.triple_ids[i]) for i in order],
        mask=ops.take(mask, order),
        importance=values[order].copy(),
        probs=ops.take(edge_probs.values, order),
    )


@dataclass
class RetrievalResult:
    state: RetrievalState
    mask: Optional[Tensor]
    subgraph: Subgraph
    budget: int
    question: str = ''

    def trace_record(self, g: KnowledgeGraph, qid: str = '') -> Dict[str, Any]:
        return {
            'id': qid,
            'question': self.question,
            'seeds': [g.entity_names[s] for s in self.state.seeds],
            'layers': [layer.to_dict() for layer in self.state.trace],
            'exhausted': self.state.exhausted,
            'entity_scores': {
                g.entity_names[e]: self.state.max_reported_score(e, g) for e in self.state.visited
            },
            'budget': self.budget,
            'subgraph': [
                {
                    'triple': int(tid),
                    'path': list(g.triple_names(tid)),
                    'probability': float(p),
                    'mask': float(m),
                }
                for tid, p, m in zip(
                    self.subgraph.triples,
                    self.subgraph.importance,
                    self.subgraph.mask.values if self.subgraph.mask is not None else [],
                )
            ],
        }


def retrieve(
    g: KnowledgeGraph,
    provider: EmbeddingProvider,
    question: str,
    seeds: Sequence[int],
    params: RetrieverParams,
    budget: int,
    rng: Optional[np.random.Generator] = None,
    noise: Optional[float] = None,
    q_embed: Optional[np.ndarray] = None,
) -> RetrievalResult:
    """Run every layer of growing and pruning, then sample the mask and keep the
    best ``budget`` triples.
    """
    q = constant(q_embed if q_embed is not None else provider.question(question))
    state = RetrievalState.initial(seeds, g, provider)
    while state.layer_index < params.num_layers and not state.exhausted:
        state = grow_prune_step(state, g, q, params, provider)
        if state.exhausted:
            break
        if params.entity_update:
            state = update_entity_embeddings(state, g, params)

    mask = None
    if state.edge_probs.values is not None:
        mask = sample_mask(state.edge_probs.values, params.temperature, rng=rng, noise=noise)
    subgraph = select_subgraph(state.edge_probs, mask, budget)
    return RetrievalResult(state=state, mask=mask, subgraph=subgraph, budget=budget, question=question)


def write_traces(storage: StorageManager, records: List[Dict[str, Any]], name: str = 'traces.jsonl') -> Path:
    """One JSON object per query under ``traces/``, written atomically."""
    path = storage.write_jsonl('traces', name, records)
    logger.debug("traces_written", path=str(path), queries=len(records))
    return path


def render_case_study(record: Dict[str, Any]) -> str:
    """Plain-text table of the retrieved triples with their importance scores."""
    lines = [f"Question: {record.get('question', '')}"]
    lines.append(f"Seeds: {', '.join(record.get('seeds', []))}")
    for layer in record.get('layers', []):
        lines.append(
            f"  layer {layer['layer']}: frontier={layer['frontier_size']} "
            f"candidates={layer['candidate_edges']} pruned={layer['pruned_edges']}"
        )
    width = max([len(' → '.join(row['path'])) for row in record.get('subgraph', [])] + [4])
    lines.append(f"{'path'.ljust(width)}  {'P':>6}  {'M':>6}")
    for row in record.get('subgraph', []):
        lines.append(f"{' → '.join(row['path']).ljust(width)}  {row['probability']:6.3f}  {row['mask']:6.3f}")
    return '\n'.join(lines) + '\n'
