# retriever/attention.py
from typing import Dict, List

import numpy as np

from ..errors import RetrievalExhaustedError
from ..kg.embeddings import EmbeddingProvider
from ..kg.store import KnowledgeGraph
from ..numerics import Tensor, constant
from ..numerics import ops
from .state import LayerAttention, RetrievalState, RetrieverParams


def _candidates(state: RetrievalState, g: KnowledgeGraph):
    """Directed candidate edges out of the frontier, ordered by (triple id, source)."""
    triple_ids: List[int] = []
    sources: List[int] = []
    targets: List[int] = []
    relations: List[int] = []
    frontier = state.frontier
    for tid in g.frontier_triples(sorted(frontier)):
        tid = int(tid)
        h, r, t = g.triple(tid)
        for src, dst in sorted({(h, t), (t, h)}):
            if src in frontier:
                triple_ids.append(tid)
                sources.append(src)
                targets.append(dst)
                relations.append(r)
    as_ids = lambda xs: np.asarray(xs, dtype=np.int64)
    return as_ids(triple_ids), as_ids(sources), as_ids(targets), as_ids(relations)


def attention_scores(
    state: RetrievalState,
    g: KnowledgeGraph,
    q_embed: Tensor,
    params: RetrieverParams,
    provider: EmbeddingProvider,
) -> LayerAttention:
    """Score every frontier edge with Linear([h_i, h_j, h_r, h_q]) and normalize
    per source entity.
    """
    if not state.frontier:
        raise RetrievalExhaustedError("attention over an empty frontier")
    triple_ids, sources, targets, relations = _candidates(state, g)
    if not len(triple_ids):
        return LayerAttention(triple_ids, sources, targets, relations, alpha=None,
                              table=state.context, table_entities=state.visited)

    # visited rows first, then initial embeddings for neighbors seen for the first time
    index: Dict[int, int] = state.local_index()
    fresh = sorted({int(t) for t in targets} - set(index))
    table = state.context
    if fresh:
        table = ops.concat([state.context, constant(provider.entity_matrix(fresh))], axis=0)
        for i, e in enumerate(fresh):
            index[e] = len(state.visited) + i

    h_src = ops.take_rows(table, [index[int(s)] for s in sources])
    h_dst = ops.take_rows(table, [index[int(t)] for t in targets])
    rel = provider.relation_matrix(relations)
    q = np.broadcast_to(q_embed.values, rel.shape)
    parts = [h_src, h_dst, constant(rel), constant(q)]
    if params.question_interaction:
        parts.append(constant(rel * q))
    features = ops.concat(parts, axis=1)

    scores = ops.reshape(ops.linear(features, params.score_weight, params.score_bias), (len(triple_ids),))
    segment_of = {e: i for i, e in enumerate(sorted(set(int(s) for s in sources)))}
    segments = [segment_of[int(s)] for s in sources]
    alpha = ops.segment_softmax(scores, segments, len(segment_of))
    return LayerAttention(
        triple_ids=triple_ids,
        sources=sources,
        targets=targets,
        relations=relations,
        alpha=alpha,
        table=table,
        table_entities=tuple(state.visited) + tuple(fresh),
    )


def update_entity_embeddings(
    state: RetrievalState,
    g: KnowledgeGraph,
    params: RetrieverParams,
) -> RetrievalState:
    """h'_i = W1 h_i + W2 * sum_j alpha_ji h_j over the surviving edges of the last layer."""
    attention = state.last_attention
    if attention is None or attention.alpha is None or attention.keep is None:
        refreshed = ops.linear(state.context, params.w_self)
        return state.evolve(context=refreshed)

    table_index = {e: i for i, e in enumerate(attention.table_entities)}
    rows = state.context
    index = state.local_index()

    kept = np.flatnonzero(attention.keep)
    kept = [k for k in kept if int(attention.targets[k]) in index]
    if kept:
        src_rows = ops.take_rows(attention.table, [table_index[int(attention.sources[k])] for k in kept])
        weights = ops.take(attention.alpha, kept)
        messages = ops.scale_rows(src_rows, weights)
        aggregated = ops.scatter_rows_add(
            messages, [index[int(attention.targets[k])] for k in kept], len(state.visited)
        )
        refreshed = ops.add(ops.linear(rows, params.w_self), ops.linear(aggregated, params.w_neigh))
    else:
        refreshed = ops.linear(rows, params.w_self)
    return state.evolve(context=refreshed)
