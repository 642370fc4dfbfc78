# training/supervision.py
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, Optional

import numpy as np

from ..kg.store import KnowledgeGraph, bfs_distances
from ..numerics import Tensor, constant
from ..numerics import ops
from ..retriever.state import PROB_FLOOR, RetrievalState


@dataclass(frozen=True)
class PathPositives:
    entities: FrozenSet[int]
    unreachable: bool           # no (seed, answer) pair is connected

    def __contains__(self, entity: int) -> bool:
        return entity in self.entities

    def __len__(self) -> int:
        return len(self.entities)


def shortest_path_positives(g: KnowledgeGraph, seeds: Iterable[int], answers: Iterable[int]) -> PathPositives:
    """Entities on any minimum-length seed-to-answer path, over all connected pairs.

    v lies on a shortest s-a path iff d(s, v) + d(v, a) == d(s, a); one search
    from each end of the pair gives both distance maps.
    """
    seeds = sorted({g.check_entity(s) for s in seeds})
    answers = sorted({g.check_entity(a) for a in answers})
    cache: Dict[int, Dict[int, int]] = {}

    def distances(source: int) -> Dict[int, int]:
        if source not in cache:
            cache[source] = bfs_distances(g, source)
        return cache[source]

    positives = set()
    reached = False
    for s in seeds:
        from_seed = distances(s)
        for a in answers:
            if a not in from_seed:
                continue
            reached = True
            total = from_seed[a]
            from_answer = distances(a)
            positives.update(v for v, d in from_seed.items() if d + from_answer.get(v, total + 1) == total)
    return PathPositives(entities=frozenset(positives), unreachable=not reached)


@dataclass
class SupervisionResult:
    loss: Optional[Tensor]
    feedback_only: bool
    visited: int = 0
    missed_positives: int = 0

    @property
    def value(self) -> float:
        return 0.0 if self.loss is None else self.loss.item()


def graph_supervision_loss(state: RetrievalState, positives: PathPositives, g: KnowledgeGraph) -> SupervisionResult:
    """Binary cross-entropy of entity scores against shortest-path membership.

    Visited entities are scored by their best incident edge probability; each
    positive never visited adds the loss of a label-1 entity scored at the
    clamp floor. The sum is averaged over both groups.
    """
    if not positives.entities:
        return SupervisionResult(loss=None, feedback_only=True)
    visited, scores = state.entity_scores(g)
    if scores is None:
        scores = constant(np.zeros(len(visited)))
    clamped = ops.clamp(scores, PROB_FLOOR, 1.0 - PROB_FLOOR)
    labels = np.asarray([1.0 if v in positives else 0.0 for v in visited])
    missed = len(positives.entities - set(visited))

    total = ops.binary_cross_entropy(clamped, labels, reduction='sum')
    if missed:
        total = ops.add_scalar(total, -missed * np.log(PROB_FLOOR))
    loss = ops.scale(total, 1.0 / (len(visited) + missed))
    return SupervisionResult(loss=loss, feedback_only=False, visited=len(visited), missed_positives=missed)
