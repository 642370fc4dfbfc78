# evalbench/synthetic.py
"""Synthetic multi-hop KGQA corpora with known answer depths.

A random backbone gives every entity ``branching`` outgoing edges. Questions
are random walks along the backbone, phrased by naming the relations walked
and the seed. Distractor triples are then sprinkled over the graph, and a
question is kept only when its walk endpoint still sits exactly at the
labeled depth from the seed.
"""
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from ..errors import GenerationError
from ..kg.dataset import TrainSample, write_dataset
from ..kg.store import KnowledgeGraph, bfs_distances
from ..logs import get_logger

logger = get_logger(__name__)

SPLIT_FRACTIONS = (0.8, 0.1, 0.1)


@dataclass(frozen=True)
class SyntheticSpec:
    num_entities: int = 2000
    num_relations: int = 24
    branching: int = 3
    min_hops: int = 1
    max_hops: int = 3
    distractor_density: float = 3.0     # distractor triples per distinct gold-path triple
    num_questions: int = 2000
    multiple_choice_fraction: float = 0.0
    num_options: int = 4
    seed: int = 0

    @classmethod
    def from_config(cls, settings: Dict[str, Any], seed: int) -> 'SyntheticSpec':
        return cls(seed=seed, **settings)

    def validate(self) -> 'SyntheticSpec':
        if self.num_relations < 1:
            raise GenerationError("at least one relation is required")
        if not 1 <= self.min_hops <= self.max_hops:
            raise GenerationError(f"hop range [{self.min_hops}, {self.max_hops}] is invalid")
        if self.branching < 1:
            raise GenerationError(
                f"branching {self.branching} leaves no path of {self.max_hops} hops out of a seed"
            )
        if self.num_entities < self.max_hops + 1 or self.branching >= self.num_entities:
            raise GenerationError(
                f"{self.num_entities} entities cannot hold branching {self.branching} and {self.max_hops}-hop paths"
            )
        if self.distractor_density < 0:
            raise GenerationError("distractor_density must be >= 0")
        if self.num_questions < 1:
            raise GenerationError("num_questions must be >= 1")
        if self.multiple_choice_fraction > 0 and not 2 <= self.num_options <= self.num_entities:
            raise GenerationError(f"num_options must lie in [2, {self.num_entities}]")
        return self


@dataclass
class SyntheticCorpus:
    graph: KnowledgeGraph
    train: List[TrainSample]
    dev: List[TrainSample]
    test: List[TrainSample]
    spec: SyntheticSpec
    gold_triples: int = 0
    distractor_triples: int = 0

    @property
    def samples(self) -> List[TrainSample]:
        return self.train + self.dev + self.test

    def split(self, name: str) -> List[TrainSample]:
        return {'train': self.train, 'dev': self.dev, 'test': self.test}[name]

    def write(self, out_dir: Union[str, Path]) -> Dict[str, Path]:
        out_dir = Path(out_dir)
        paths = {'kg': self.graph.write(out_dir / 'kg.tsv')}
        for name in ('train', 'dev', 'test'):
            paths[name] = write_dataset(out_dir / f'{name}.jsonl', self.split(name), self.graph)
        return paths

    def summary(self) -> Dict[str, Any]:
        return {
            'spec': asdict(self.spec),
            'entities': self.graph.num_entities,
            'relations': self.graph.num_relations,
            'triples': self.graph.num_triples,
            'gold_triples': self.gold_triples,
            'distractor_triples': self.distractor_triples,
            'splits': {name: len(self.split(name)) for name in ('train', 'dev', 'test')},
        }


def question_text(seed_name: str, relation_names: Sequence[str]) -> str:
    phrase = seed_name
    for rel in relation_names:
        phrase = f"the {rel} of {phrase}"
    return f"what is {phrase}?"


def follow_relations(g: KnowledgeGraph, seed: int, relations: Sequence[int]) -> Set[int]:
    """Entities reached from ``seed`` by following ``relations`` head to tail."""
    current = {seed}
    for rel in relations:
        nxt: Set[int] = set()
        for e in current:
            for tid in g.incident(e):
                h, r, t = g.triple(int(tid))
                if h == e and r == rel:
                    nxt.add(t)
        current = nxt
    return current


def _random_walk(rng: np.random.Generator, out_edges: List[List[Tuple[int, int]]], seed: int,
                 hops: int) -> Optional[Tuple[List[int], List[int]]]:
    path = [seed]
    relations: List[int] = []
    for _ in range(hops):
        options = [(r, t) for r, t in out_edges[path[-1]] if t not in path]
        if not options:
            return None
        r, t = options[int(rng.integers(len(options)))]
        relations.append(r)
        path.append(t)
    return path, relations


def generate_synthetic(spec: SyntheticSpec) -> SyntheticCorpus:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n = spec.num_entities
    ent_names = [f"e{i:0{len(str(n - 1))}d}" for i in range(n)]
    rel_names = [f"r{j:0{len(str(spec.num_relations - 1))}d}" for j in range(spec.num_relations)]

    out_edges: List[List[Tuple[int, int]]] = []
    triples: Set[Tuple[int, int, int]] = set()
    ordered: List[Tuple[int, int, int]] = []
    for u in range(n):
        others = rng.choice(n - 1, size=spec.branching, replace=False)
        edges = []
        for v in others:
            v = int(v) + (int(v) >= u)
            r = int(rng.integers(spec.num_relations))
            edges.append((r, v))
            if (u, r, v) not in triples:
                triples.add((u, r, v))
                ordered.append((u, r, v))
        out_edges.append(edges)

    # candidate walks fix the gold-path triples the distractors are scaled against
    walks = []
    gold: Set[Tuple[int, int, int]] = set()
    for _ in range(spec.num_questions * 2):
        hops = int(rng.integers(spec.min_hops, spec.max_hops + 1))
        walk = _random_walk(rng, out_edges, int(rng.integers(n)), hops)
        if walk is None:
            continue
        walks.append(walk)
        path, relations = walk
        gold.update((path[i], relations[i], path[i + 1]) for i in range(len(relations)))
    if not walks:
        raise GenerationError("no walk of the requested depth exists in the backbone")

    distractors = int(round(spec.distractor_density * len(gold)))
    added = 0
    while added < distractors:
        u, v = (int(x) for x in rng.choice(n, size=2, replace=False))
        r = int(rng.integers(spec.num_relations))
        if (u, r, v) in triples:
            continue
        triples.add((u, r, v))
        ordered.append((u, r, v))
        added += 1

    g = KnowledgeGraph.from_triples(
        (ent_names[h], rel_names[r], ent_names[t]) for h, r, t in ordered
    )
    # from_triples renumbers entities in first-seen order
    remap = {i: g.entity_ids[name] for i, name in enumerate(ent_names) if name in g.entity_ids}
    rel_remap = {j: g.relation_ids[name] for j, name in enumerate(rel_names) if name in g.relation_ids}

    samples: List[TrainSample] = []
    seen: Set[Tuple[int, Tuple[int, ...]]] = set()
    for path, relations in walks:
        if len(samples) >= spec.num_questions:
            break
        seed = remap[path[0]]
        rels = tuple(rel_remap[r] for r in relations)
        if (seed, rels) in seen:
            continue
        dist = bfs_distances(g, seed)
        if dist.get(remap[path[-1]]) != len(rels):
            continue
        answers = sorted(a for a in follow_relations(g, seed, rels) if dist.get(a) == len(rels))
        seen.add((seed, rels))
        samples.append(_make_sample(rng, g, spec, len(samples), seed, rels, answers))

    if len(samples) < spec.num_questions:
        raise GenerationError(
            f"only {len(samples)} of {spec.num_questions} questions kept their labeled depth; "
            f"lower distractor_density or raise num_entities"
        )

    order = rng.permutation(len(samples))
    n_train = int(SPLIT_FRACTIONS[0] * len(samples))
    n_dev = int(SPLIT_FRACTIONS[1] * len(samples))
    shuffled = [samples[i] for i in order]
    corpus = SyntheticCorpus(
        graph=g,
        train=shuffled[:n_train],
        dev=shuffled[n_train:n_train + n_dev],
        test=shuffled[n_train + n_dev:],
        spec=spec,
        gold_triples=len(gold),
        distractor_triples=distractors,
    )
    logger.info("synthetic_generated", triples=g.num_triples, questions=len(samples),
                gold_triples=len(gold), distractors=distractors)
    return corpus


def _make_sample(rng: np.random.Generator, g: KnowledgeGraph, spec: SyntheticSpec, index: int,
                 seed: int, rels: Tuple[int, ...], answers: List[int]) -> TrainSample:
    text = question_text(g.entity_names[seed], [g.relation_names[r] for r in rels])
    qid = f"q{index:05d}"
    if spec.multiple_choice_fraction > 0 and rng.random() < spec.multiple_choice_fraction:
        gold = answers[0]
        pool = [e for e in range(g.num_entities) if e not in answers and e != seed]
        picks = rng.choice(len(pool), size=min(spec.num_options - 1, len(pool)), replace=False)
        options = [g.entity_names[gold]] + [g.entity_names[pool[int(i)]] for i in picks]
        options = [options[int(i)] for i in rng.permutation(len(options))]
        return TrainSample(qid=qid, question=text, seeds=(seed,), answers=(gold,),
                           answer_texts=(g.entity_names[gold],), options=tuple(options), hops=len(rels))
    return TrainSample(
        qid=qid,
        question=text,
        seeds=(seed,),
        answers=tuple(answers),
        answer_texts=tuple(g.entity_names[a] for a in answers),
        hops=len(rels),
    )
