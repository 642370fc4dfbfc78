# kg/store.py
import json
from collections import deque
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from ..errors import IngestError, KnowledgeLookupError
from ..logs import get_logger

logger = get_logger(__name__)

Triple = Tuple[str, str, str]
TRIPLE_KEYS = {'head', 'relation', 'tail'}


class KnowledgeGraph:
    """Immutable triple store with id vocabularies and a CSR incidence index.

    Ids are assigned in first-seen order, so identical input order gives
    identical ids. Each triple appears once in the incidence list of each of
    its endpoints (once in total for a self-loop).
    """

    def __init__(
        self,
        entity_names: Sequence[str],
        relation_names: Sequence[str],
        heads: np.ndarray,
        relations: np.ndarray,
        tails: np.ndarray,
        duplicate_count: int = 0,
    ):
        self.entity_names: Tuple[str, ...] = tuple(entity_names)
        self.relation_names: Tuple[str, ...] = tuple(relation_names)
        self.entity_ids: Dict[str, int] = {n: i for i, n in enumerate(self.entity_names)}
        self.relation_ids: Dict[str, int] = {n: i for i, n in enumerate(self.relation_names)}
        self.heads = np.asarray(heads, dtype=np.int64)
        self.relations = np.asarray(relations, dtype=np.int64)
        self.tails = np.asarray(tails, dtype=np.int64)
        self.duplicate_count = duplicate_count
        for arr in (self.heads, self.relations, self.tails):
            arr.setflags(write=False)
        self._build_incidence()

    def _build_incidence(self) -> None:
        n = self.num_entities
        tids = np.arange(self.num_triples, dtype=np.int64)
        loops = self.heads == self.tails
        ends = np.concatenate([self.heads, self.tails[~loops]])
        owners = np.concatenate([tids, tids[~loops]])
        order = np.lexsort((owners, ends))
        counts = np.bincount(ends, minlength=n) if n else np.zeros(0, dtype=np.int64)
        self._offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self._incident = owners[order]
        self._offsets.setflags(write=False)
        self._incident.setflags(write=False)

    @classmethod
    def from_triples(cls, triples: Iterable[Triple]) -> 'KnowledgeGraph':
        entities: Dict[str, int] = {}
        relations: Dict[str, int] = {}
        seen: Set[Tuple[int, int, int]] = set()
        heads: List[int] = []
        rels: List[int] = []
        tails: List[int] = []
        duplicates = 0
        for head, relation, tail in triples:
            h = entities.setdefault(head, len(entities))
            r = relations.setdefault(relation, len(relations))
            t = entities.setdefault(tail, len(entities))
            key = (h, r, t)
            if key in seen:
                duplicates += 1
                continue
            seen.add(key)
            heads.append(h)
            rels.append(r)
            tails.append(t)
        return cls(list(entities), list(relations), heads, rels, tails, duplicates)

    # sizes ----------------------------------------------------------------

    @property
    def num_entities(self) -> int:
        return len(self.entity_names)

    @property
    def num_relations(self) -> int:
        return len(self.relation_names)

    @property
    def num_triples(self) -> int:
        return int(self.heads.shape[0])

    # lookups --------------------------------------------------------------

    def entity_id(self, name: str) -> int:
        try:
            return self.entity_ids[name]
        except KeyError:
            raise KnowledgeLookupError(f"unknown entity {name!r}")

    def relation_id(self, name: str) -> int:
        try:
            return self.relation_ids[name]
        except KeyError:
            raise KnowledgeLookupError(f"unknown relation {name!r}")

    def check_entity(self, entity: int) -> int:
        if not 0 <= int(entity) < self.num_entities:
            raise KnowledgeLookupError(f"unknown entity id {entity}")
        return int(entity)

    def check_triple(self, tid: int) -> int:
        if not 0 <= int(tid) < self.num_triples:
            raise KnowledgeLookupError(f"unknown triple id {tid}")
        return int(tid)

    def triple(self, tid: int) -> Tuple[int, int, int]:
        tid = self.check_triple(tid)
        return int(self.heads[tid]), int(self.relations[tid]), int(self.tails[tid])

    def triple_names(self, tid: int) -> Triple:
        h, r, t = self.triple(tid)
        return self.entity_names[h], self.relation_names[r], self.entity_names[t]

    def incident(self, entity: int) -> np.ndarray:
        """Ascending ids of the triples touching ``entity``."""
        e = self.check_entity(entity)
        return self._incident[self._offsets[e]:self._offsets[e + 1]]

    def other_endpoint(self, tid: int, entity: int) -> int:
        h, t = int(self.heads[tid]), int(self.tails[tid])
        return t if h == entity else h

    def neighbors(self, entity: int) -> List[int]:
        return sorted({self.other_endpoint(int(tid), entity) for tid in self.incident(entity)})

    def frontier_triples(self, entity_set: Iterable[int]) -> np.ndarray:
        entities = [self.check_entity(e) for e in entity_set]
        if not entities:
            return np.zeros(0, dtype=np.int64)
        chunks = [self._incident[self._offsets[e]:self._offsets[e + 1]] for e in entities]
        return np.unique(np.concatenate(chunks))

    # serialization --------------------------------------------------------

    def records(self) -> List[Triple]:
        return [self.triple_names(tid) for tid in range(self.num_triples)]

    def write(self, path: Union[str, Path], fmt: Optional[str] = None) -> Path:
        path = Path(path)
        fmt = fmt or _format_from_suffix(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            for head, relation, tail in self.records():
                if fmt == 'tsv':
                    f.write(f"{head}\t{relation}\t{tail}\n")
                else:
                    f.write(json.dumps({'head': head, 'relation': relation, 'tail': tail}) + '\n')
        return path

    def is_identical(self, other: 'KnowledgeGraph') -> bool:
        return (
            self.entity_names == other.entity_names
            and self.relation_names == other.relation_names
            and np.array_equal(self.heads, other.heads)
            and np.array_equal(self.relations, other.relations)
            and np.array_equal(self.tails, other.tails)
        )


def _format_from_suffix(path: Path) -> str:
    suffix = path.suffix.lower()
    if suffix in ('.jsonl', '.json'):
        return 'jsonl'
    return 'tsv'


def _parse_tsv(lines: Iterable[str]) -> Iterable[Tuple[int, Triple]]:
    for number, line in enumerate(lines, start=1):
        line = line.rstrip('\n').rstrip('\r')
        if not line.strip():
            continue
        fields = line.split('\t')
        if len(fields) != 3 or not all(fields):
            raise IngestError(f"expected head<TAB>relation<TAB>tail, got {len(fields)} field(s)", number)
        yield number, (fields[0], fields[1], fields[2])


def _parse_jsonl(lines: Iterable[str]) -> Iterable[Tuple[int, Triple]]:
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise IngestError(f"invalid JSON ({e.msg})", number)
        if not isinstance(record, dict) or set(record) != TRIPLE_KEYS:
            raise IngestError("record must have exactly the keys head, relation, tail", number)
        values = (record['head'], record['relation'], record['tail'])
        if not all(isinstance(v, str) and v for v in values):
            raise IngestError("head, relation and tail must be non-empty strings", number)
        yield number, values


def ingest_triples(triple_file: Union[str, Path], fmt: Optional[str] = None) -> KnowledgeGraph:
    """Load a TSV or JSONL triple file into a :class:`KnowledgeGraph`."""
    path = Path(triple_file)
    fmt = fmt or _format_from_suffix(path)
    if fmt not in ('tsv', 'jsonl'):
        raise IngestError(f"unsupported triple format {fmt!r}")
    try:
        with open(path, encoding='utf-8') as f:
            parser = _parse_tsv if fmt == 'tsv' else _parse_jsonl
            graph = KnowledgeGraph.from_triples(triple for _, triple in parser(f))
    except OSError as e:
        raise IngestError(f"cannot read {path}: {e}")

    if graph.duplicate_count:
        logger.warning("duplicate_triples_dropped", path=str(path), count=graph.duplicate_count)
    logger.info(
        "kg_ingested",
        path=str(path),
        entities=graph.num_entities,
        relations=graph.num_relations,
        triples=graph.num_triples,
    )
    return graph


def frontier_triples(g: KnowledgeGraph, entity_set: Iterable[int]) -> List[int]:
    """Every triple with at least one endpoint in ``entity_set``, ascending by id."""
    return [int(t) for t in g.frontier_triples(entity_set)]


def bfs_distances(g: KnowledgeGraph, source: int) -> Dict[int, int]:
    """Undirected hop distance from ``source`` to every reachable entity."""
    dist = {g.check_entity(source): 0}
    queue = deque([source])
    while queue:
        node = queue.popleft()
        for nxt in g.neighbors(node):
            if nxt not in dist:
                dist[nxt] = dist[node] + 1
                queue.append(nxt)
    return dist
