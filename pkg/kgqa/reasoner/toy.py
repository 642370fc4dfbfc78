# reasoner/toy.py
from dataclasses import dataclass
from typing import Any, Dict, Sequence

import numpy as np

from ..bridge.inputs import TokenEmbedder
from ..errors import DimensionError, DomainError
from ..kg.embeddings import EmbeddingProvider
from ..numerics import Tensor, constant, glorot
from ..numerics import ops
from .base import Candidate, ReasonerContract, ReasonerFeedback


@dataclass
class ToyHead:
    bilinear: Tensor        # [d x (d_llm + d)]
    proj: Tensor            # [hidden x (d_llm + d)]
    proj_bias: Tensor       # [hidden]
    cand: Tensor            # [hidden x d]
    out: Tensor             # [hidden]


def toy_forward(
    input_seq: Tensor,
    candidate_matrix: np.ndarray,
    question_embedding: np.ndarray,
    head: ToyHead,
) -> Tensor:
    """Logits c_k . B z + w . tanh(Q c_k + P z + b) with z = [mean(input_seq), q]."""
    if input_seq.values.ndim != 2 or input_seq.shape[0] == 0:
        raise DomainError("reasoner input sequence must be a non-empty matrix")
    if candidate_matrix.ndim != 2 or candidate_matrix.shape[0] == 0:
        raise DomainError("reasoner needs at least one candidate")
    z = ops.concat([ops.mean_rows(input_seq), constant(question_embedding)])
    if z.shape[0] != head.bilinear.shape[1]:
        raise DimensionError('toy_forward', z.shape, head.bilinear.shape)

    cands = constant(candidate_matrix)
    bilinear = ops.matvec(cands, ops.linear(z, head.bilinear))
    hidden = ops.tanh(ops.add_row(ops.linear(cands, head.cand), ops.linear(z, head.proj, head.proj_bias)))
    return ops.add(bilinear, ops.matvec(hidden, head.out))


class ToyReasoner(ReasonerContract):
    """Bilinear-plus-perceptron scorer over a candidate set; the desk-scale reasoner."""

    reasoner_id = 'toy'

    def __init__(
        self,
        provider: EmbeddingProvider,
        rng: np.random.Generator,
        d_llm: int = 64,
        head_hidden: int = 64,
        vocab_buckets: int = 4096,
    ):
        super().__init__(d_llm)
        self.provider = provider
        d = provider.dim
        self.head_hidden = head_hidden
        self.vocab_buckets = vocab_buckets
        w = self.weights
        self._embedder = TokenEmbedder(w.add('tokens', rng.standard_normal((vocab_buckets, d_llm)) * 0.1))
        self.head = ToyHead(
            bilinear=w.add('head.bilinear', glorot(rng, (d, d_llm + d))),
            proj=w.add('head.proj', glorot(rng, (head_hidden, d_llm + d))),
            proj_bias=w.add('head.proj_bias', np.zeros(head_hidden)),
            cand=w.add('head.cand', glorot(rng, (head_hidden, d))),
            out=w.add('head.out', glorot(rng, (head_hidden,))),
        )

    @classmethod
    def from_config(cls, settings: Dict[str, Any], provider: EmbeddingProvider,
                    rng: np.random.Generator) -> 'ToyReasoner':
        return cls(provider, rng, d_llm=settings['d_llm'], head_hidden=settings['head_hidden'],
                   vocab_buckets=settings['vocab_buckets'])

    @property
    def embedder(self) -> TokenEmbedder:
        return self._embedder

    def forward(self, input_seq: Tensor, candidates: Sequence[Candidate],
                question_embedding: np.ndarray) -> ReasonerFeedback:
        if not candidates:
            raise DomainError("reasoner needs at least one candidate")
        matrix = np.stack([c.embedding(self.provider) for c in candidates])
        logits = toy_forward(input_seq, matrix, question_embedding, self.head)
        return ReasonerFeedback(
            candidates=list(candidates),
            answer_logits=logits,
            log_probs=ops.log_softmax(logits),
        )
