from .dataset import TrainSample, read_dataset, write_dataset
from .embeddings import EmbeddingProvider, get_embeddings, hash_vector
from .store import KnowledgeGraph, bfs_distances, frontier_triples, ingest_triples

__all__ = [
    'EmbeddingProvider',
    'KnowledgeGraph',
    'TrainSample',
    'frontier_triples',
    'get_embeddings',
    'hash_vector',
    'bfs_distances',
    'ingest_triples',
    'read_dataset',
    'write_dataset',
]
