# kg/embeddings.py
import hashlib
import re
import threading
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Union

import numpy as np

from ..errors import ConfigError, DimensionError, IngestError, KnowledgeLookupError
from ..logs import get_logger
from ..numerics import Tensor, constant
from .store import KnowledgeGraph

logger = get_logger(__name__)

KINDS = ('entity', 'relation', 'question')
_TOKEN = re.compile(r"[^\s?!,;]+")


def question_tokens(text: str) -> List[str]:
    return _TOKEN.findall(text)


def hash_vector(text: str, dim: int, salt: str = '') -> np.ndarray:
    """Deterministic pseudo-random unit-scale vector keyed by ``text``."""
    digest = hashlib.blake2b(f"{salt}\x00{text}".encode('utf-8'), digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, 'little'))
    return rng.standard_normal(dim) / np.sqrt(dim)


class EmbeddingProvider:
    """Initial vectors for entities, relations and questions.

    In ``hash`` mode every name maps to a hash-seeded vector; in ``file`` mode
    entity and relation names must be covered by the precomputed table.
    Questions are the mean of their token vectors in both modes, with
    hash vectors standing in for tokens the table does not cover.
    """

    def __init__(
        self,
        graph: KnowledgeGraph,
        dim: int = 512,
        table: Optional[Dict[str, np.ndarray]] = None,
        salt: str = '',
    ):
        if dim < 1:
            raise ConfigError(f"embedding dimension must be positive, got {dim}")
        self.graph = graph
        self.dim = dim
        self.table = table
        self.salt = salt
        self.mode = 'file' if table is not None else 'hash'
        # keyed by kind; only question tokens fall back to hash vectors in file mode
        self._caches: Dict[str, Dict[str, np.ndarray]] = {kind: {} for kind in KINDS}
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: Union[str, Path], graph: KnowledgeGraph) -> 'EmbeddingProvider':
        path = Path(path)
        table: Dict[str, np.ndarray] = {}
        with open(path, encoding='utf-8') as f:
            header = f.readline().split()
            if len(header) != 2:
                raise IngestError("embedding header must be '<count> <dim>'", 1)
            try:
                count, dim = int(header[0]), int(header[1])
            except ValueError:
                raise IngestError(f"embedding header must be two integers, got {' '.join(header)!r}", 1)
            if count < 0 or dim < 1:
                raise IngestError(f"embedding header has count {count} and dimension {dim}", 1)
            for number, line in enumerate(f, start=2):
                if not line.strip():
                    continue
                parts = line.split()
                if len(parts) != dim + 1:
                    raise IngestError(f"expected a name and {dim} floats", number)
                try:
                    vec = np.array([float(v) for v in parts[1:]], dtype=np.float64)
                except ValueError:
                    raise IngestError("embedding values must be floats", number)
                if not np.all(np.isfinite(vec)):
                    raise IngestError("non-finite embedding value", number)
                table[parts[0]] = vec
        if len(table) != count:
            logger.warning("embedding_count_mismatch", path=str(path), header=count, rows=len(table))
        logger.info("embeddings_loaded", path=str(path), rows=len(table), dim=dim)
        return cls(graph, dim=dim, table=table)

    def _lookup(self, kind: str, name: str) -> np.ndarray:
        cache = self._caches[kind]
        strict = kind != 'question'
        cached = cache.get(name)
        if cached is not None:
            return cached
        if self.table is not None and name in self.table:
            vec = self.table[name]
        elif self.table is not None and strict:
            raise KnowledgeLookupError(f"no precomputed embedding for {name!r}")
        else:
            vec = hash_vector(name, self.dim, self.salt)
        if vec.shape != (self.dim,):
            raise DimensionError('embedding', vec.shape, (self.dim,))
        vec.setflags(write=False)
        with self._lock:
            cache[name] = vec
        return vec

    def entity(self, entity_id: int) -> np.ndarray:
        return self._lookup('entity', self.graph.entity_names[self.graph.check_entity(entity_id)])

    def relation(self, relation_id: int) -> np.ndarray:
        if not 0 <= int(relation_id) < self.graph.num_relations:
            raise KnowledgeLookupError(f"unknown relation id {relation_id}")
        return self._lookup('relation', self.graph.relation_names[int(relation_id)])

    def text(self, text: str) -> np.ndarray:
        tokens = question_tokens(text)
        if not tokens:
            return np.zeros(self.dim)
        return np.mean([self._lookup('question', tok) for tok in tokens], axis=0)

    def question(self, text: str) -> np.ndarray:
        return self.text(text)

    def entity_matrix(self, entity_ids: Iterable[int]) -> np.ndarray:
        ids = list(entity_ids)
        if not ids:
            return np.zeros((0, self.dim))
        return np.stack([self.entity(e) for e in ids])

    def relation_matrix(self, relation_ids: Iterable[int]) -> np.ndarray:
        ids = list(relation_ids)
        if not ids:
            return np.zeros((0, self.dim))
        return np.stack([self.relation(r) for r in ids])


def get_embeddings(provider: EmbeddingProvider, kind: str, id_or_text) -> Tensor:
    """Constant tensor for an entity id, relation id or question text."""
    if kind == 'entity':
        return constant(provider.entity(id_or_text))
    if kind == 'relation':
        return constant(provider.relation(id_or_text))
    if kind == 'question':
        return constant(provider.question(id_or_text))
    raise ConfigError(f"unknown embedding kind {kind!r}; expected one of {KINDS}")
