# evalbench/evaluate.py
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
from tqdm import tqdm

from ..engine import EngineModules, Prediction, predict
from ..errors import DataError, IngestError
from ..kg.dataset import TrainSample
from ..logs import get_logger
from .metrics import f1_score, hits_at_1, macro_f1, micro_f1, normalize

logger = get_logger(__name__)


@dataclass
class EvalReport:
    """Aggregate answer quality over one split.

    ``hits_at_1`` and ``f1`` are means of the per-question values stored in
    ``records``. Retrieval time is kept out of ``to_dict`` so reports from two
    identical runs compare equal; timing is written separately.
    """
    hits_at_1: float
    f1: float
    micro_f1: float
    random_baseline: float
    num_questions: int
    mean_retrieval_s: float = 0.0
    records: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self, include_records: bool = True) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            'hits_at_1': self.hits_at_1,
            'f1': self.f1,
            'micro_f1': self.micro_f1,
            'random_baseline': self.random_baseline,
            'num_questions': self.num_questions,
        }
        if include_records:
            out['records'] = self.records
        return out


def random_candidate_baseline(candidate_lists: Sequence[Sequence[str]], golds: Sequence[Sequence[str]],
                              casefold: bool = False) -> float:
    """Expected Hits@1 of picking uniformly among each question's candidates."""
    rates = []
    for cands, gold in zip(candidate_lists, golds):
        pool = {normalize(c, casefold) for c in cands}
        if not pool:
            rates.append(0.0)
            continue
        rates.append(len(pool & {normalize(a, casefold) for a in gold}) / len(pool))
    return float(np.mean(rates)) if rates else 0.0


def _build_report(samples: Sequence[TrainSample], rankings: Sequence[List[str]], predicted: Sequence[List[str]],
                  candidates: Sequence[List[str]], casefold: bool,
                  latencies: Optional[Sequence[float]] = None) -> EvalReport:
    golds = [list(s.gold_keys()) for s in samples]
    records = []
    for sample, ranked, chosen, gold in zip(samples, rankings, predicted, golds):
        top = ranked[:1]
        records.append({
            'id': sample.qid,
            'gold': gold,
            'top1': top[0] if top else None,
            'hit': float(bool(top) and normalize(top[0], casefold) in {normalize(a, casefold) for a in gold}),
            'f1': f1_score(chosen, gold, casefold),
            'predicted_set': list(chosen),
        })
    return EvalReport(
        hits_at_1=hits_at_1(rankings, golds, casefold),
        f1=macro_f1(predicted, golds, casefold),
        micro_f1=micro_f1(predicted, golds, casefold),
        random_baseline=random_candidate_baseline(candidates, golds, casefold),
        num_questions=len(samples),
        mean_retrieval_s=float(np.mean(latencies)) if latencies else 0.0,
        records=records,
    )


def evaluate(modules: EngineModules, samples: Sequence[TrainSample], casefold: bool = False,
             workers: int = 1, progress: bool = False) -> EvalReport:
    """Predict every sample and score the rankings.

    Questions are independent, so up to ``workers`` run at once; results keep
    the input order.
    """
    if not samples:
        raise DataError("cannot evaluate an empty split")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            predictions: List[Prediction] = list(tqdm(pool.map(lambda s: predict(modules, s), samples),
                                                      total=len(samples), desc='eval', disable=not progress))
    else:
        predictions = [predict(modules, s) for s in tqdm(samples, desc='eval', disable=not progress)]

    report = _build_report(
        samples,
        [p.ranking for p in predictions],
        [p.predicted for p in predictions],
        [p.candidates for p in predictions],
        casefold,
        latencies=[p.latency_s for p in predictions],
    )
    logger.info("evaluation_complete", questions=report.num_questions, hits_at_1=round(report.hits_at_1, 4),
                f1=round(report.f1, 4), random_baseline=round(report.random_baseline, 4))
    return report


def read_predictions(path: Union[str, Path]) -> Dict[str, Dict[str, Any]]:
    """Load a JSONL file of ``{"id": ..., "predictions": [...]}`` records."""
    out: Dict[str, Dict[str, Any]] = {}
    try:
        with open(path, encoding='utf-8') as f:
            for line_number, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as e:
                    raise IngestError(f"{path}: invalid JSON ({e.msg})", line_number=line_number)
                if not isinstance(record, dict) or 'id' not in record or not isinstance(record.get('predictions'), list):
                    raise IngestError(f"{path}: expected {{id, predictions: [...]}}",
                                      line_number=line_number)
                out[str(record['id'])] = record
    except OSError as e:
        raise DataError(f"cannot read predictions {path}: {e}")
    return out


def evaluate_predictions(records: Mapping[str, Dict[str, Any]], samples: Sequence[TrainSample],
                         casefold: bool = False) -> EvalReport:
    """Score externally produced rankings against a dataset split.

    A record's ``predicted_set`` is used for F1 when present; otherwise its
    rank-1 answer is. Questions without a record count as empty predictions.
    """
    if not samples:
        raise DataError("cannot evaluate an empty split")
    rankings, predicted = [], []
    for sample in samples:
        record = records.get(sample.qid, {})
        ranked = [str(a) for a in record.get('predictions', [])]
        rankings.append(ranked)
        predicted.append([str(a) for a in record.get('predicted_set', ranked[:1])])
    unknown = set(records) - {s.qid for s in samples}
    if unknown:
        logger.warning("unmatched_predictions", count=len(unknown))
    return _build_report(samples, rankings, predicted, rankings, casefold)
