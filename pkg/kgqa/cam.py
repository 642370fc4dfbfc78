# cam.py
"""Complexity assessment: a two-layer perceptron over question embeddings that
predicts how many hops a question needs and turns that into a triple budget.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from .errors import ConfigError, DataError
from .kg.dataset import TrainSample
from .kg.embeddings import EmbeddingProvider
from .kg.store import KnowledgeGraph, bfs_distances
from .logs import get_logger
from .numerics import Adam, Parameters, constant, glorot, load_checkpoint, save_checkpoint
from .numerics import ops

logger = get_logger(__name__)

TRIPLES_PER_HOP = 5


@dataclass
class HopPrediction:
    predicted_hops: int
    probabilities: np.ndarray      # over hops 1..max_hops

    @property
    def budget(self) -> int:
        return TRIPLES_PER_HOP * self.predicted_hops


class ComplexityAssessor:
    def __init__(self, dim: int, max_hops: int, hidden: int, rng: np.random.Generator,
                 triples_per_hop: int = TRIPLES_PER_HOP):
        if max_hops < 1 or hidden < 1:
            raise ConfigError(f"max_hops and hidden must be >= 1, got {max_hops}, {hidden}")
        self.dim = dim
        self.max_hops = max_hops
        self.hidden = hidden
        self.triples_per_hop = triples_per_hop
        self.weights = Parameters('cam')
        self.w1 = self.weights.add('w1', glorot(rng, (hidden, dim)))
        self.b1 = self.weights.add('b1', np.zeros(hidden))
        self.w2 = self.weights.add('w2', glorot(rng, (max_hops, hidden)))
        self.b2 = self.weights.add('b2', np.zeros(max_hops))

    @classmethod
    def from_config(cls, settings: Dict[str, Any], dim: int, rng: np.random.Generator) -> 'ComplexityAssessor':
        return cls(dim, settings['max_hops'], settings['hidden'], rng, settings['triples_per_hop'])

    def logits(self, embeddings: np.ndarray):
        x = constant(np.atleast_2d(embeddings))
        return ops.linear(ops.tanh(ops.linear(x, self.w1, self.b1)), self.w2, self.b2)

    def predict(self, question_embedding: np.ndarray) -> HopPrediction:
        row = self.logits(question_embedding).values[0]
        probs = np.exp(row - row.max())
        probs /= probs.sum()
        return HopPrediction(predicted_hops=int(np.argmax(probs)) + 1, probabilities=probs)

    def predict_budget(self, question_embedding: np.ndarray) -> int:
        return self.triples_per_hop * self.predict(question_embedding).predicted_hops

    def accuracy(self, embeddings: np.ndarray, labels: Sequence[int]) -> float:
        if not len(labels):
            return 0.0
        predicted = np.argmax(self.logits(embeddings).values, axis=1) + 1
        return float(np.mean(predicted == np.asarray(labels)))

    def save(self, stem: Union[str, Path], meta: Optional[Dict[str, Any]] = None) -> Tuple[Path, Path]:
        info = {'kind': 'cam', 'dim': self.dim, 'max_hops': self.max_hops, 'hidden': self.hidden,
                'triples_per_hop': self.triples_per_hop}
        info.update(meta or {})
        return save_checkpoint(stem, self.weights.state_dict(), info)

    @classmethod
    def load(cls, stem: Union[str, Path]) -> 'ComplexityAssessor':
        tensors, meta = load_checkpoint(stem)
        if meta.get('kind') != 'cam':
            raise DataError(f"{stem} is not a complexity-assessor checkpoint")
        assessor = cls(meta['dim'], meta['max_hops'], meta['hidden'], np.random.default_rng(0),
                       meta.get('triples_per_hop', TRIPLES_PER_HOP))
        assessor.weights.load_state_dict(tensors)
        return assessor


def predict_budget(question_embedding: np.ndarray, assessor: ComplexityAssessor) -> int:
    return assessor.predict_budget(question_embedding)


def hop_label(sample: TrainSample, g: KnowledgeGraph) -> Optional[int]:
    """The labeled hop count, else the shortest seed-to-answer distance."""
    if sample.hops is not None:
        return sample.hops
    best = None
    for seed in sample.seeds:
        dist = bfs_distances(g, seed)
        for answer in sample.answers:
            if answer in dist and (best is None or dist[answer] < best):
                best = dist[answer]
    return best


def hop_dataset(samples: Sequence[TrainSample], g: KnowledgeGraph, provider: EmbeddingProvider,
                max_hops: int) -> Tuple[np.ndarray, np.ndarray]:
    embeddings: List[np.ndarray] = []
    labels: List[int] = []
    for sample in samples:
        label = hop_label(sample, g)
        if label is None:
            continue
        if not 1 <= label <= max_hops:
            raise DataError(f"sample {sample.qid}: hop label {label} outside [1, {max_hops}]")
        embeddings.append(sample.embed(provider))
        labels.append(label)
    if not labels:
        return np.zeros((0, provider.dim)), np.zeros(0, dtype=np.int64)
    return np.stack(embeddings), np.asarray(labels, dtype=np.int64)


def train_cam(
    train: Sequence[TrainSample],
    g: KnowledgeGraph,
    provider: EmbeddingProvider,
    settings: Dict[str, Any],
    rng: np.random.Generator,
    dev: Sequence[TrainSample] = (),
    progress: bool = False,
) -> Tuple[ComplexityAssessor, Dict[str, Any]]:
    """Fit the hop classifier with cross-entropy; returns it with an accuracy report."""
    x, y = hop_dataset(train, g, provider, settings['max_hops'])
    if not len(y):
        raise DataError("no training sample carries a hop label or a reachable answer")
    classes = sorted(set(int(v) for v in y))
    if len(classes) == 1:
        logger.warning("cam_single_class", hops=classes[0], samples=len(y))

    assessor = ComplexityAssessor.from_config(settings, provider.dim, rng)
    optimizer = Adam(list(assessor.weights), lr=settings['learning_rate'])
    batch = settings['batch_size']
    losses: List[float] = []
    epochs = range(settings['epochs'])
    for epoch in tqdm(epochs, desc='cam', disable=not progress):
        order = rng.permutation(len(y))
        total = 0.0
        for start in range(0, len(order), batch):
            idx = order[start:start + batch]
            optimizer.zero_grad()
            loss = ops.cross_entropy_rows(assessor.logits(x[idx]), y[idx] - 1)
            loss.backward()
            optimizer.step()
            total += loss.item() * len(idx)
        losses.append(total / len(y))

    report: Dict[str, Any] = {
        'samples': int(len(y)),
        'class_counts': {str(c): int((y == c).sum()) for c in classes},
        'final_loss': losses[-1] if losses else None,
        'train_accuracy': assessor.accuracy(x, y),
    }
    if dev:
        dx, dy = hop_dataset(dev, g, provider, settings['max_hops'])
        report['dev_accuracy'] = assessor.accuracy(dx, dy) if len(dy) else None
    logger.info("cam_trained", **{k: v for k, v in report.items() if k != 'class_counts'})
    return assessor, report
