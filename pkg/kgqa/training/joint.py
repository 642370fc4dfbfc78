# training/joint.py
"""One optimization step of the joint objective.

The reasoner term trains phi and psi on a detached copy of the retrieved
subgraph. The retriever term re-runs the bridge and reasoner on the live
subgraph so their activations stay differentiable toward theta, but only theta's
gradient is kept from it.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..engine import EngineModules
from ..errors import ConfigError, NonFiniteError
from ..kg.dataset import TrainSample
from ..logs import get_logger
from ..numerics import Tensor
from ..numerics import ops
from ..reasoner import reasoner_loss
from ..retriever.state import PROB_FLOOR, Subgraph
from .supervision import graph_supervision_loss, shortest_path_positives

logger = get_logger(__name__)

MODES = ('full', 'feedback_only', 'separate')
TERMS = ('reasoner', 'retriever')

# flags
SKIPPED_EMPTY = 'skipped_empty_subgraph'
FEEDBACK_ONLY = 'feedback_only'
UNREACHABLE = 'unreachable'
ABORTED = 'aborted_non_finite'


@dataclass
class LossReport:
    reasoner_loss: float = 0.0
    retriever_feedback_loss: float = 0.0
    retriever_likelihood: float = 0.0
    graph_supervision_loss: float = 0.0
    total: float = 0.0
    mode: str = 'full'
    flags: Tuple[str, ...] = ()
    samples: int = 1

    @property
    def skipped(self) -> bool:
        return SKIPPED_EMPTY in self.flags or ABORTED in self.flags

    def to_dict(self) -> Dict[str, float]:
        return {
            'reasoner_loss': self.reasoner_loss,
            'retriever_feedback_loss': self.retriever_feedback_loss,
            'retriever_likelihood': self.retriever_likelihood,
            'graph_supervision_loss': self.graph_supervision_loss,
            'total': self.total,
        }

    @classmethod
    def mean(cls, reports: Sequence['LossReport'], mode: str) -> 'LossReport':
        used = [r for r in reports if not r.skipped]
        flags = tuple(sorted({f for r in reports for f in r.flags}))
        if not used:
            return cls(mode=mode, flags=flags, samples=0)
        n = len(used)
        return cls(
            reasoner_loss=sum(r.reasoner_loss for r in used) / n,
            retriever_feedback_loss=sum(r.retriever_feedback_loss for r in used) / n,
            retriever_likelihood=sum(r.retriever_likelihood for r in used) / n,
            graph_supervision_loss=sum(r.graph_supervision_loss for r in used) / n,
            total=sum(r.total for r in used) / n,
            mode=mode,
            flags=flags,
            samples=n,
        )


def subgraph_log_likelihood(subgraph: Subgraph) -> Tensor:
    """log P_theta(G_s | q) as a soft-mask Bernoulli likelihood over the selected triples."""
    p = ops.clamp(subgraph.probs, PROB_FLOOR, 1.0 - PROB_FLOOR)
    m = subgraph.mask
    return ops.sum(ops.add(ops.mul(m, ops.log(p)), ops.mul(ops.one_minus(m), ops.log(ops.one_minus(p)))))


@dataclass
class SampleGradients:
    report: LossReport
    grads: Dict[str, Dict[str, np.ndarray]] = field(default_factory=dict)


def _sample_gradients(sample: TrainSample, modules: EngineModules, mode: str,
                      rng: np.random.Generator, terms: Tuple[str, ...] = TERMS) -> SampleGradients:
    t = modules.config.training
    g = modules.graph
    flags: List[str] = []

    effective = mode
    positives = None
    if sample.is_multiple_choice or not sample.answers:
        flags.append(UNREACHABLE)
    else:
        positives = shortest_path_positives(g, sample.seeds, sample.answers)
        if positives.unreachable:
            flags.append(UNREACHABLE)
            positives = None
    if effective == 'full' and positives is None:
        effective = 'feedback_only'
    if effective == 'feedback_only':
        flags.append(FEEDBACK_ONLY)

    modules.zero_grad()
    result = modules.run_retrieval(sample, rng=rng)
    if result.subgraph.is_empty:
        logger.debug("sample_skipped", qid=sample.qid, reason='empty_subgraph')
        return SampleGradients(LossReport(mode=effective, flags=tuple(flags + [SKIPPED_EMPTY])))

    gold = sample.gold_keys()

    # retriever term: live tensors, only theta keeps its gradient
    theta_loss: Optional[Tensor] = None
    feedback_nll = 0.0
    likelihood = 0.0
    if effective != 'separate' and 'retriever' in terms:
        feedback, _ = modules.reason(sample, result, training=True, mode=effective)
        nll = reasoner_loss(feedback, gold)
        prior = subgraph_log_likelihood(result.subgraph)
        feedback_nll, likelihood = nll.item(), prior.item()
        theta_loss = ops.scale(ops.sub(nll, prior), t['weight_feedback'])

    supervision = None
    if positives is not None and effective in ('full', 'separate') and 'retriever' in terms:
        supervision = graph_supervision_loss(result.state, positives, g)
    if supervision is not None and supervision.loss is not None:
        weighted = ops.scale(supervision.loss, t['weight_graph'])
        theta_loss = weighted if theta_loss is None else ops.add(theta_loss, weighted)

    grads: Dict[str, Dict[str, np.ndarray]] = {}
    if 'retriever' in terms:
        if theta_loss is not None and theta_loss.requires_grad:
            theta_loss.backward()
        grads['retriever'] = modules.retriever.weights.grads()
        modules.zero_grad()

    # reasoner term: mask and context detached, theta untouched
    feedback, _ = modules.reason(sample, result, training=True, detached=True, mode=effective)
    nll = reasoner_loss(feedback, gold)
    if 'reasoner' in terms:
        ops.scale(nll, t['weight_reasoner']).backward()
        grads['bridge'] = modules.bridge.weights.grads()
        grads['reasoner'] = modules.reasoner.weights.grads()
        modules.zero_grad()

    gs_value = supervision.value if supervision is not None else 0.0
    report = LossReport(
        reasoner_loss=nll.item(),
        retriever_feedback_loss=feedback_nll,
        retriever_likelihood=likelihood,
        graph_supervision_loss=gs_value,
        total=(t['weight_reasoner'] * nll.item()
               + t['weight_feedback'] * (feedback_nll - likelihood)
               + t['weight_graph'] * gs_value),
        mode=effective,
        flags=tuple(flags),
    )
    if not np.isfinite(report.total):
        raise NonFiniteError(f"sample {sample.qid}: non-finite loss")
    return SampleGradients(report, grads)


def joint_batch_step(samples: Sequence[TrainSample], modules: EngineModules, mode: str,
                     rng: np.random.Generator, terms: Tuple[str, ...] = TERMS) -> LossReport:
    """Accumulate per-sample gradients, then commit a single optimizer update.

    A non-finite value anywhere in the batch aborts the update and leaves
    every parameter as it was.
    """
    if mode not in MODES:
        raise ConfigError(f"training mode must be one of {list(MODES)}, got {mode!r}")
    if modules.optimizer is None:
        modules.build_optimizer()

    collected: List[SampleGradients] = []
    try:
        for sample in samples:
            collected.append(_sample_gradients(sample, modules, mode, rng, terms))
    except NonFiniteError as e:
        modules.zero_grad()
        logger.error("step_aborted", reason=e.message, samples=[s.qid for s in samples])
        return LossReport(mode=mode, flags=(ABORTED,), samples=0)

    used = [c for c in collected if c.grads]
    report = LossReport.mean([c.report for c in collected], mode)
    if not used:
        return report

    groups = {'retriever': modules.retriever.weights, 'bridge': modules.bridge.weights,
              'reasoner': modules.reasoner.weights}
    for name, group in groups.items():
        if name not in used[0].grads:
            group.set_grads({})
            continue
        summed = {key: sum(c.grads[name][key] for c in used) / len(used) for key, _ in group.items()}
        group.set_grads(summed)
    modules.optimizer.step()
    modules.zero_grad()
    return report


def joint_step(sample: TrainSample, modules: EngineModules, mode: str, rng: np.random.Generator,
               terms: Tuple[str, ...] = TERMS) -> LossReport:
    return joint_batch_step([sample], modules, mode, rng, terms)
