# training/fit.py
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import arrow
import numpy as np
from tqdm import tqdm

from ..engine import EngineModules
from ..errors import ConfigError, DataError
from ..evalbench.evaluate import evaluate
from ..kg.dataset import TrainSample
from ..logs import get_logger
from ..storage import StorageManager
from .joint import LossReport, joint_batch_step

logger = get_logger(__name__)


@dataclass
class FitResult:
    best_epoch: int
    best_dev_hits1: float
    epochs_run: int
    checkpoint: Optional[Path]
    curve: List[Dict[str, Any]]
    stopped_early: bool


def fit(
    modules: EngineModules,
    train: Sequence[TrainSample],
    dev: Sequence[TrainSample],
    storage: Optional[StorageManager] = None,
    rng: Optional[np.random.Generator] = None,
    checkpoint_name: str = 'model',
    progress: bool = False,
) -> FitResult:
    """Train with shuffled minibatches and early stopping on dev Hits@1.

    Stops once ``patience`` epochs pass without improvement; the best
    parameters are written to ``checkpoints/<checkpoint_name>`` and restored
    into ``modules`` before returning.
    """
    if not train:
        raise DataError("training set is empty")
    t = modules.config.training
    mode = t['mode']
    rng = rng if rng is not None else np.random.default_rng(modules.config.seed)
    eval_set = dev if dev else train

    curve: List[Dict[str, Any]] = []
    best_hits, best_epoch, best_state = -1.0, 0, None
    epochs_since_best = 0
    stopped_early = False
    epoch = 0
    for epoch in range(1, t['max_epochs'] + 1):
        started = arrow.utcnow()
        order = rng.permutation(len(train))
        reports: List[LossReport] = []
        batches = range(0, len(order), t['batch_size'])
        for start in tqdm(batches, desc=f'epoch {epoch}', disable=not progress, leave=False):
            batch = [train[i] for i in order[start:start + t['batch_size']]]
            reports.append(joint_batch_step(batch, modules, mode, rng))

        trained = sum(r.samples for r in reports)
        if trained == 0:
            raise ConfigError(f"epoch {epoch}: every training sample was skipped")
        summary = LossReport.mean([r for r in reports if r.samples], mode)

        dev_report = evaluate(modules, eval_set, casefold=modules.config.eval['casefold'],
                              workers=modules.config.workers)
        wall = (arrow.utcnow() - started).total_seconds()
        row = {
            'epoch': epoch,
            'train_losses': summary.to_dict(),
            'dev_hits1': dev_report.hits_at_1,
            'dev_f1': dev_report.f1,
            'wall_time_s': wall,
        }
        curve.append(row)
        if storage is not None:
            storage.append_jsonl('curves', 'training_curve.jsonl', row)
        logger.info("epoch_complete", epoch=epoch, dev_hits1=dev_report.hits_at_1, dev_f1=dev_report.f1,
                    total_loss=summary.total, trained=trained)

        if dev_report.hits_at_1 > best_hits:
            best_hits, best_epoch = dev_report.hits_at_1, epoch
            best_state = modules.state_dict()
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best > t['patience']:
                logger.info("early_stopping", epoch=epoch, best_epoch=best_epoch, best_dev_hits1=best_hits)
                stopped_early = True
                break

    modules.load_state_dict(best_state)
    checkpoint = None
    if storage is not None:
        stem = storage.checkpoint_stem(checkpoint_name)
        modules.save(stem, {'best_epoch': best_epoch, 'best_dev_hits1': best_hits})
        checkpoint = stem
    return FitResult(best_epoch, best_hits, epoch, checkpoint, curve, stopped_early)
