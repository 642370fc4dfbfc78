# evalbench/metrics.py
from typing import Collection, Iterable, List, Sequence, Set, Tuple

from ..errors import DataError
from ..logs import get_logger

logger = get_logger(__name__)


def normalize(answer: str, casefold: bool = False) -> str:
    return answer.casefold() if casefold else answer


def _as_set(answers: Iterable[str], casefold: bool) -> Set[str]:
    return {normalize(a, casefold) for a in answers}


def hits_at_1(predictions: Sequence[Sequence[str]], golds: Sequence[Collection[str]],
              casefold: bool = False) -> float:
    """Fraction of questions whose rank-1 prediction is a gold answer."""
    if len(predictions) != len(golds):
        raise DataError(f"{len(predictions)} prediction lists for {len(golds)} questions")
    if not golds:
        return 0.0
    empty = 0
    correct = 0
    for ranked, gold in zip(predictions, golds):
        if not ranked:
            empty += 1
            continue
        correct += normalize(ranked[0], casefold) in _as_set(gold, casefold)
    if empty:
        logger.warning("empty_predictions", count=empty, questions=len(golds))
    return correct / len(golds)


def precision_recall(predicted: Iterable[str], gold: Iterable[str], casefold: bool = False) -> Tuple[int, int, int]:
    """(true positives, predicted count, gold count) over exact-match answer sets."""
    p = _as_set(predicted, casefold)
    g = _as_set(gold, casefold)
    return len(p & g), len(p), len(g)


def f1_score(predicted: Iterable[str], gold: Iterable[str], casefold: bool = False) -> float:
    tp, n_pred, n_gold = precision_recall(predicted, gold, casefold)
    if n_gold == 0:
        raise DataError("F1 needs a non-empty gold set")
    if tp == 0:
        return 0.0
    precision, recall = tp / n_pred, tp / n_gold
    return 2 * precision * recall / (precision + recall)


def macro_f1(predicted_sets: Sequence[Iterable[str]], golds: Sequence[Iterable[str]],
             casefold: bool = False) -> float:
    scores = [f1_score(p, g, casefold) for p, g in zip(predicted_sets, golds)]
    return sum(scores) / len(scores) if scores else 0.0


def micro_f1(predicted_sets: Sequence[Iterable[str]], golds: Sequence[Iterable[str]],
             casefold: bool = False) -> float:
    counts: List[Tuple[int, int, int]] = [precision_recall(p, g, casefold) for p, g in zip(predicted_sets, golds)]
    tp = sum(c[0] for c in counts)
    n_pred = sum(c[1] for c in counts)
    n_gold = sum(c[2] for c in counts)
    if tp == 0:
        return 0.0
    precision, recall = tp / n_pred, tp / n_gold
    return 2 * precision * recall / (precision + recall)
