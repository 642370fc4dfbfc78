# evalbench/ablation.py
"""Ablation grid: every arm trained and scored once per seed, then summarized
as mean and standard deviation per arm.
"""
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence

import pandas as pd

from ..cam import ComplexityAssessor
from ..config import ABLATION_ARMS, RunConfig
from ..engine import build_engine
from ..errors import ConfigError
from ..kg.dataset import TrainSample
from ..kg.embeddings import EmbeddingProvider
from ..kg.store import KnowledgeGraph
from ..logs import get_logger
from ..storage import StorageManager
from ..training import fit
from .evaluate import evaluate
from .timing import time_retrieval

logger = get_logger(__name__)

METRICS = ('hits_at_1', 'f1', 'micro_f1', 'mean_retrieval_s', 'p95_retrieval_s')


@dataclass
class AblationResult:
    runs: pd.DataFrame
    summary: pd.DataFrame

    def summary_records(self) -> List[Dict[str, Any]]:
        return self.summary.to_dict(orient='records')


def arm_overrides(arm: Mapping[str, Any], seed: int) -> Dict[str, Any]:
    overrides = {key: dict(value) for key, value in arm.items() if key != 'arm'}
    overrides['seed'] = seed
    return overrides


def summarize(runs: pd.DataFrame) -> pd.DataFrame:
    """One row per arm, in grid order, with ``<metric>_mean`` and ``<metric>_std``."""
    grouped = runs.groupby('arm', sort=False)[list(METRICS)]
    summary = grouped.agg(['mean', 'std'])
    summary.columns = [f"{metric}_{stat}" for metric, stat in summary.columns]
    summary = summary.fillna(0.0)
    summary.insert(0, 'seeds', runs.groupby('arm', sort=False)['seed'].count())
    return summary.reset_index()


def run_ablation(
    base: RunConfig,
    graph: KnowledgeGraph,
    provider: EmbeddingProvider,
    train: Sequence[TrainSample],
    dev: Sequence[TrainSample],
    test: Sequence[TrainSample],
    storage: Optional[StorageManager] = None,
    arms: Sequence[Mapping[str, Any]] = ABLATION_ARMS,
    seeds: Optional[Sequence[int]] = None,
    cam: Optional[ComplexityAssessor] = None,
    progress: bool = False,
) -> AblationResult:
    seeds = list(seeds if seeds is not None else base.eval['ablation_seeds'])
    if not arms or not seeds:
        raise ConfigError("the ablation grid needs at least one arm and one seed")
    warmup, repeats = base.eval['timing_warmup'], base.eval['timing_repeats']

    rows: List[Dict[str, Any]] = []
    for arm in arms:
        for seed in seeds:
            config = base.with_overrides(arm_overrides(arm, seed))
            logger.info("ablation_arm_started", arm=arm['arm'], seed=seed)
            modules = build_engine(config, graph, provider, cam=cam)
            result = fit(modules, train, dev, progress=progress)
            report = evaluate(modules, test, casefold=config.eval['casefold'], workers=config.workers)
            latency = time_retrieval(modules, test, warmup=warmup, repeats=repeats)
            row = {
                'arm': arm['arm'],
                'seed': seed,
                'hits_at_1': report.hits_at_1,
                'f1': report.f1,
                'micro_f1': report.micro_f1,
                'mean_retrieval_s': latency.mean_s,
                'p95_retrieval_s': latency.p95_s,
                'best_epoch': result.best_epoch,
                'epochs_run': result.epochs_run,
            }
            rows.append(row)
            logger.info("ablation_arm_complete", **row)

    runs = pd.DataFrame(rows)
    result = AblationResult(runs=runs, summary=summarize(runs))
    if storage is not None:
        storage.export_to_csv('reports', 'ablation_runs.csv', result.runs)
        storage.export_to_csv('reports', 'ablation_summary.csv', result.summary)
        storage.write_json('reports', 'ablation_summary.json', result.summary_records())
    return result
