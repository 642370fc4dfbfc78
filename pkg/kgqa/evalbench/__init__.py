from .evaluate import EvalReport, evaluate, evaluate_predictions, random_candidate_baseline, read_predictions
from .metrics import f1_score, hits_at_1, macro_f1, micro_f1, normalize
from .synthetic import SyntheticCorpus, SyntheticSpec, follow_relations, generate_synthetic, question_text
from .timing import LatencyStats, compare_pruning, time_retrieval

# ablation is imported by name; it depends on training, which imports evaluate from here

__all__ = [
    'EvalReport',
    'LatencyStats',
    'SyntheticCorpus',
    'SyntheticSpec',
    'compare_pruning',
    'evaluate',
    'evaluate_predictions',
    'f1_score',
    'follow_relations',
    'generate_synthetic',
    'hits_at_1',
    'macro_f1',
    'micro_f1',
    'normalize',
    'question_text',
    'random_candidate_baseline',
    'read_predictions',
    'time_retrieval',
]
