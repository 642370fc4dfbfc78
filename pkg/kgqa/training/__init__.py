from .fit import FitResult, fit
from .joint import LossReport, joint_batch_step, joint_step, subgraph_log_likelihood
from .supervision import (
    PathPositives,
    SupervisionResult,
    bfs_distances,
    graph_supervision_loss,
    shortest_path_positives,
)

__all__ = [
    'FitResult',
    'LossReport',
    'PathPositives',
    'SupervisionResult',
    'bfs_distances',
    'fit',
    'graph_supervision_loss',
    'joint_batch_step',
    'joint_step',
    'shortest_path_positives',
    'subgraph_log_likelihood',
]
