import numpy as np
import pytest

from kgqa.errors import ConfigError, DomainError, SupervisionError
from kgqa.kg import EmbeddingProvider, TrainSample
from kgqa.numerics import constant, grad_check_tensors
from kgqa.reasoner import (
    Candidate,
    ReasonerFeedback,
    ToyReasoner,
    build_candidates,
    load_reasoner,
    reasoner_loss,
    toy_forward,
)
from kgqa.numerics import ops
from kgqa.retriever import Subgraph

D_LLM = 5


@pytest.fixture
def provider(qa_graph):
    return EmbeddingProvider(qa_graph, dim=4)


@pytest.fixture
def reasoner(provider):
    return ToyReasoner(provider, np.random.default_rng(2), d_llm=D_LLM, head_hidden=3, vocab_buckets=16)


def feedback_from(log_probs, keys):
    lp = constant(log_probs)
    return ReasonerFeedback([Candidate(k) for k in keys], lp, lp)


class TestForward:
    def test_single_candidate_is_certain(self, reasoner, rng):
        fb = reasoner.forward(constant(rng.standard_normal((3, D_LLM))), [Candidate('paris', 2)], np.zeros(4))
        assert np.allclose(fb.log_probs.values, [0.0])

    def test_identical_candidates_tie(self, reasoner, rng):
        # both keys embed to the mean of the same two token vectors
        cands = [Candidate('left right'), Candidate('right left')]
        fb = reasoner.forward(constant(rng.standard_normal((2, D_LLM))), cands, rng.standard_normal(4))
        assert np.allclose(fb.probabilities, [0.5, 0.5])

    def test_matches_dense_oracle(self, reasoner, rng):
        seq = rng.standard_normal((4, D_LLM))
        cands = rng.standard_normal((3, 4))
        q = rng.standard_normal(4)
        logits = toy_forward(constant(seq), cands, q, reasoner.head).values

        h = reasoner.head
        z = np.concatenate([seq.mean(axis=0), q])
        hidden = np.tanh(cands @ h.cand.values.T + h.proj.values @ z + h.proj_bias.values)
        expected = cands @ (h.bilinear.values @ z) + hidden @ h.out.values
        assert np.allclose(logits, expected)

    def test_empty_candidate_set(self, reasoner, rng):
        with pytest.raises(DomainError):
            reasoner.forward(constant(rng.standard_normal((2, D_LLM))), [], np.zeros(4))

    def test_graph_token_changes_scores(self, reasoner, rng):
        prompt = constant(rng.standard_normal((3, D_LLM)))
        token = constant(rng.standard_normal((1, D_LLM)) * 5)
        cands = [Candidate('paris', 2), Candidate('rock', 6)]
        plain = reasoner.forward(prompt, cands, np.zeros(4)).answer_logits.values
        with_token = reasoner.forward(ops.concat([token, prompt], axis=0), cands, np.zeros(4)).answer_logits.values
        assert not np.allclose(plain, with_token)

    def test_head_gradients(self, reasoner, rng):
        seq = constant(rng.standard_normal((2, D_LLM)))
        cands = [Candidate('paris', 2), Candidate('rock', 6), Candidate('jazz', 3)]
        q = rng.standard_normal(4)

        def loss():
            return reasoner_loss(reasoner.forward(seq, cands, q), ['rock'])

        h = reasoner.head
        assert grad_check_tensors(loss, [h.bilinear, h.proj, h.cand, h.out]) < 1e-5


class TestLoss:
    def test_uniform_four_way(self):
        fb = feedback_from(np.log(np.full(4, 0.25)), 'abcd')
        assert np.isclose(reasoner_loss(fb, ['c']).item(), np.log(4))
        assert np.isclose(fb.gold_logprob, -np.log(4))

    def test_gold_set_is_marginalized(self):
        fb = feedback_from(np.log([0.5, 0.3, 0.2]), 'abc')
        assert np.isclose(reasoner_loss(fb, ['b', 'c']).item(), -np.log(0.5))

    def test_gold_outside_candidates(self):
        with pytest.raises(SupervisionError):
            reasoner_loss(feedback_from(np.log([0.5, 0.5]), 'ab'), ['z'])


class TestFeedback:
    def test_ranking_breaks_ties_by_position(self):
        fb = feedback_from(np.log([0.25, 0.5, 0.25]), 'abc')
        assert fb.ranking() == ['b', 'a', 'c']

    def test_predicted_set_is_relative_to_the_best(self):
        fb = feedback_from(np.log([0.45, 0.35, 0.2]), 'abc')
        assert fb.predicted_set(0.5) == ['a', 'b']
        assert fb.predicted_set(1.0) == ['a']


class TestCandidates:
    def test_inference_drops_seeds(self, qa_graph, qa_samples):
        g = qa_graph
        sub = Subgraph([0, 1], constant([0.9, 0.8]), np.array([0.9, 0.8]))
        cands = build_candidates(qa_samples[0], sub, g, include_gold=False)
        assert [c.key for c in cands] == ['acme', 'paris']

    def test_training_adds_gold(self, qa_graph, qa_samples):
        sub = Subgraph([2], constant([0.9]), np.array([0.9]))
        cands = build_candidates(qa_samples[0], sub, qa_graph, include_gold=True)
        assert 'paris' in [c.key for c in cands]

    def test_free_text_gold_is_a_candidate(self, qa_graph):
        sample = TrainSample(qid='x', question='q', seeds=(0,), answer_texts=('atlantis',))
        cands = build_candidates(sample, Subgraph([], None, np.zeros(0)), qa_graph, include_gold=True)
        assert cands == [Candidate('atlantis', None)]

    def test_multiple_choice_uses_options(self, qa_graph):
        sample = TrainSample(qid='x', question='q', seeds=(0,), answer_texts=('paris',),
                             options=('rock', 'paris', 'atlantis'))
        cands = build_candidates(sample, Subgraph([], None, np.zeros(0)), qa_graph, include_gold=False)
        assert [c.key for c in cands] == ['rock', 'paris', 'atlantis']
        assert cands[2].entity is None


def test_describe(reasoner):
    info = reasoner.describe()
    assert info['reasoner'] == 'toy' and info['d_llm'] == D_LLM
    assert info['parameters'] == len(list(reasoner.weights))


def test_unknown_reasoner(provider):
    with pytest.raises(ConfigError):
        load_reasoner({'name': 'gpt'}, provider, np.random.default_rng(0))
