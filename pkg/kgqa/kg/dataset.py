# kg/dataset.py
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import DataError, IngestError
from ..logs import get_logger
from .embeddings import EmbeddingProvider
from .store import KnowledgeGraph

logger = get_logger(__name__)


@dataclass
class TrainSample:
    """One question with its seeds and gold answers.

    ``answers`` are gold entity ids (possibly empty when the answer is not in
    the graph); ``answer_texts`` always holds the gold strings. ``options``
    makes the sample multiple-choice.
    """
    qid: str
    question: str
    seeds: Tuple[int, ...]
    answers: Tuple[int, ...] = ()
    answer_texts: Tuple[str, ...] = ()
    options: Optional[Tuple[str, ...]] = None
    hops: Optional[int] = None
    question_embedding: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if not self.seeds:
            raise DataError(f"sample {self.qid}: at least one seed entity is required")
        if not self.answers and not self.answer_texts:
            raise DataError(f"sample {self.qid}: at least one gold answer is required")
        if self.options is not None:
            missing = [a for a in self.answer_texts if a not in self.options]
            if missing:
                raise DataError(f"sample {self.qid}: gold answers {missing} are not among the options")

    @property
    def is_multiple_choice(self) -> bool:
        return self.options is not None

    def gold_keys(self) -> Tuple[str, ...]:
        return self.answer_texts

    def embed(self, provider: EmbeddingProvider) -> np.ndarray:
        if self.question_embedding is None:
            self.question_embedding = provider.question(self.question)
        return self.question_embedding


def sample_to_record(sample: TrainSample, g: KnowledgeGraph) -> Dict[str, Any]:
    record: Dict[str, Any] = {
        'id': sample.qid,
        'question': sample.question,
        'seeds': [g.entity_names[s] for s in sample.seeds],
        'answers': list(sample.answer_texts),
    }
    if sample.hops is not None:
        record['hops'] = sample.hops
    if sample.options is not None:
        record['options'] = list(sample.options)
    return record


def record_to_sample(record: Dict[str, Any], g: KnowledgeGraph, line_number: int = 0) -> TrainSample:
    for key in ('question', 'seeds', 'answers'):
        if key not in record:
            raise IngestError(f"dataset record is missing {key!r}", line_number)
    seeds = tuple(g.entity_id(name) for name in record['seeds'])
    answer_texts = tuple(str(a) for a in record['answers'])
    answers = tuple(g.entity_ids[a] for a in answer_texts if a in g.entity_ids)
    options = record.get('options')
    return TrainSample(
        qid=str(record.get('id', f"q{line_number}")),
        question=record['question'],
        seeds=seeds,
        answers=answers,
        answer_texts=answer_texts,
        options=tuple(options) if options is not None else None,
        hops=record.get('hops'),
    )


def write_dataset(path: Union[str, Path], samples: Sequence[TrainSample], g: KnowledgeGraph) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        for sample in samples:
            f.write(json.dumps(sample_to_record(sample, g), sort_keys=True) + '\n')
    return path


def read_dataset(path: Union[str, Path], g: KnowledgeGraph) -> List[TrainSample]:
    samples = []
    with open(path, encoding='utf-8') as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise IngestError(f"invalid JSON ({e.msg})", number)
            samples.append(record_to_sample(record, g, number))
    logger.info("dataset_loaded", path=str(path), samples=len(samples))
    return samples
