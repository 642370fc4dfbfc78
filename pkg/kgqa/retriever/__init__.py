from .attention import attention_scores, update_entity_embeddings
from .core import (
    RetrievalResult,
    grow_prune_step,
    render_case_study,
    retrieve,
    sample_mask,
    select_subgraph,
    write_traces,
)
from .pruning import NoPruning, PruneDecision, PruningPolicy, ThresholdPruning, TopKPruning, load_policy
from .state import (
    PROB_FLOOR,
    EdgeProbs,
    LayerAttention,
    LayerTrace,
    RetrievalState,
    RetrieverParams,
    Subgraph,
)

__all__ = [
    'EdgeProbs',
    'LayerAttention',
    'LayerTrace',
    'NoPruning',
    'PROB_FLOOR',
    'PruneDecision',
    'PruningPolicy',
    'RetrievalResult',
    'RetrievalState',
    'RetrieverParams',
    'Subgraph',
    'ThresholdPruning',
    'TopKPruning',
    'attention_scores',
    'grow_prune_step',
    'load_policy',
    'render_case_study',
    'retrieve',
    'sample_mask',
    'select_subgraph',
    'update_entity_embeddings',
    'write_traces',
]
