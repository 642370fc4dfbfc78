from pathlib import Path

from kgqa.config import build_run_config
from kgqa.kg import EmbeddingProvider

GOLDEN_DIR = Path(__file__).parent / 'golden'

TINY_SETTINGS = {
    'retriever': {'embedding_dim': 8, 'num_layers': 2, 'fixed_budget': 6},
    'bridge': {'mlp_hidden': 6},
    'reasoner': {'d_llm': 6, 'head_hidden': 6, 'vocab_buckets': 64},
    'training': {'learning_rate': 0.01, 'batch_size': 2, 'max_epochs': 2, 'patience': 1},
    'cam': {'max_hops': 3, 'hidden': 8, 'epochs': 30, 'batch_size': 8},
    'eval': {'timing_warmup': 0, 'timing_repeats': 1, 'ablation_seeds': [0]},
    'synthetic': {'num_entities': 60, 'num_relations': 4, 'branching': 2, 'min_hops': 1, 'max_hops': 2,
                  'distractor_density': 1.0, 'num_questions': 20},
}


def tiny_config(command='train', **sections):
    data = {'command': command}
    for name, values in TINY_SETTINGS.items():
        data[name] = dict(values)
    for name, values in sections.items():
        if isinstance(values, dict):
            data.setdefault(name, {}).update(values)
        else:
            data[name] = values
    return build_run_config(data)


def hash_provider(graph, dim=8):
    return EmbeddingProvider(graph, dim=dim)
