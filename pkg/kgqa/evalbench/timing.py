# evalbench/timing.py
"""Wall-clock retrieval latency, measured on one worker."""
import time
from dataclasses import asdict, dataclass
from typing import Any, Dict, Mapping, Optional, Sequence

import numpy as np

from ..engine import INFERENCE_NOISE, EngineModules
from ..errors import DataError
from ..kg.dataset import TrainSample
from ..logs import get_logger
from ..retriever import retrieve

logger = get_logger(__name__)


@dataclass
class LatencyStats:
    mean_s: float
    median_s: float
    p95_s: float
    count: int

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_samples(cls, seconds: Sequence[float]) -> 'LatencyStats':
        values = np.asarray(seconds, dtype=np.float64)
        return cls(
            mean_s=float(values.mean()),
            median_s=float(np.median(values)),
            p95_s=float(np.percentile(values, 95)),
            count=int(values.size),
        )


def time_retrieval(
    modules: EngineModules,
    samples: Sequence[TrainSample],
    warmup: int = 2,
    repeats: int = 3,
    overrides: Optional[Mapping[str, Any]] = None,
) -> LatencyStats:
    """Per-query retrieval latency; ``overrides`` swap retriever settings such
    as ``pruning`` or ``entity_update`` for the measurement only.
    """
    if not samples:
        raise DataError("no questions to time")
    plans = []
    for sample in samples:
        params, budget = modules.plan(sample)
        if overrides:
            params = params.with_settings(**overrides)
        plans.append((sample, params, budget, sample.embed(modules.provider)))

    def run(sample, params, budget, q):
        retrieve(modules.graph, modules.provider, sample.question, sample.seeds, params, budget,
                 noise=INFERENCE_NOISE, q_embed=q)

    for _ in range(warmup):
        for plan in plans:
            run(*plan)

    seconds = []
    for _ in range(max(repeats, 1)):
        for plan in plans:
            started = time.perf_counter()
            run(*plan)
            seconds.append(time.perf_counter() - started)
    stats = LatencyStats.from_samples(seconds)
    logger.debug("retrieval_timed", overrides=dict(overrides or {}), **stats.to_dict())
    return stats


def compare_pruning(modules: EngineModules, samples: Sequence[TrainSample], warmup: int = 2,
                    repeats: int = 3) -> Dict[str, Any]:
    """Latency with the configured pruning policy against no pruning at all."""
    with_pruning = time_retrieval(modules, samples, warmup, repeats)
    without = time_retrieval(modules, samples, warmup, repeats, overrides={'pruning': 'none'})
    increase = (without.mean_s - with_pruning.mean_s) / with_pruning.mean_s if with_pruning.mean_s else 0.0
    logger.info("pruning_timing", with_pruning_s=with_pruning.mean_s, without_pruning_s=without.mean_s,
                relative_increase=round(increase, 4))
    return {
        'with_pruning': with_pruning.to_dict(),
        'without_pruning': without.to_dict(),
        'relative_increase': increase,
    }
