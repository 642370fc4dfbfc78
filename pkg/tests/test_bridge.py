import numpy as np
import pytest

from kgqa.bridge import (
    BridgeParams,
    TokenEmbedder,
    VerbalizedPrompt,
    assemble_reasoner_input,
    inclusion_weights,
    sag_pool,
    tokenize,
    verbalize,
)
from kgqa.errors import ConfigError, PoolingError
from kgqa.kg import KnowledgeGraph
from kgqa.numerics import constant, grad_check, parameter
from kgqa.numerics import ops
from kgqa.retriever import Subgraph

from .helpers import GOLDEN_DIR

DIM = 4
D_LLM = 5


@pytest.fixture
def path_graph():
    return KnowledgeGraph.from_triples([('a', 'r', 'b'), ('b', 's', 'c')])


@pytest.fixture
def bridge_params():
    return BridgeParams(DIM, D_LLM, hidden=3, rng=np.random.default_rng(11))


def subgraph(triples, mask, importance=None):
    importance = np.asarray(importance if importance is not None else mask, dtype=np.float64)
    return Subgraph(triples=list(triples), mask=constant(mask), importance=importance)


class TestVerbalize:
    def test_golden_two_paths(self, path_graph):
        prompt = verbalize(subgraph([0, 1], [0.4, 0.9]), path_graph, 'Where does a lead?', answer='c')
        assert prompt.text.encode('utf-8') == (GOLDEN_DIR / 'two_paths.txt').read_bytes()
        assert prompt.triple_count == 2

    def test_golden_empty_subgraph(self, path_graph):
        empty = Subgraph(triples=[], mask=None, importance=np.zeros(0))
        prompt = verbalize(empty, path_graph, 'Q?')
        assert prompt.text.encode('utf-8') == (GOLDEN_DIR / 'empty_subgraph.txt').read_bytes()
        assert prompt.triple_count == 0

    def test_without_paths_matches_empty_subgraph(self, path_graph):
        sub = subgraph([0, 1], [0.4, 0.9])
        prompt = verbalize(sub, path_graph, 'Q?', include_paths=False)
        assert prompt.text.encode('utf-8') == (GOLDEN_DIR / 'empty_subgraph.txt').read_bytes()
        assert prompt.triple_count == 0
        assert prompt.subgraph_id == sub.identifier()

    def test_single_path(self, path_graph):
        text = verbalize(subgraph([0], [0.7]), path_graph, 'Q?').text
        assert '<a → r → b>' in text
        assert 'Question: Q?' in text
        assert text.count('→') == 2

    def test_ties_fall_back_to_triple_id(self, path_graph):
        text = verbalize(subgraph([1, 0], [0.5, 0.5]), path_graph, 'Q?').text
        assert text.index('<a → r → b>') < text.index('<b → s → c>')

    def test_question_is_verbatim(self, path_graph):
        question = 'what  is {this}?'
        assert f'Question: {question} ' in verbalize(subgraph([0], [0.5]), path_graph, question).text

    def test_tokenize_drops_marker(self, path_graph):
        tokens = tokenize(verbalize(subgraph([0], [0.5]), path_graph, 'Q?'))
        assert tokens[0] == 'Based'
        assert '[Graph' not in tokens


class TestSagPool:
    def test_single_entity(self, bridge_params, rng):
        g = KnowledgeGraph.from_triples([('a', 'r', 'a')])
        h = rng.standard_normal((1, DIM))
        token = sag_pool(subgraph([0], [0.6]), g, constant(h), bridge_params)
        assert np.allclose(token.attention, [1.0])
        expected = bridge_params.project(constant(0.6 * h[0]))
        assert np.allclose(token.vector.values, expected.values)

    def test_zero_masks_give_projection_of_zero(self, path_graph, bridge_params, rng):
        token = sag_pool(subgraph([0, 1], [0.0, 0.0]), path_graph, constant(rng.standard_normal((3, DIM))),
                         bridge_params)
        assert np.allclose(token.vector.values, bridge_params.project(constant(np.zeros(DIM))).values)

    def test_matches_dense_forward(self, path_graph, bridge_params, rng):
        h = rng.standard_normal((3, DIM))
        token = sag_pool(subgraph([0, 1], [0.3, 0.8]), path_graph, constant(h), bridge_params)

        p = bridge_params
        scores = h @ p.attn_weight.values[0] + p.attn_bias.values[0]
        attention = np.exp(scores - scores.max())
        attention /= attention.sum()
        inclusion = np.array([0.3, 0.8, 0.8])
        pooled = (attention * inclusion) @ h
        expected = p.w2.values @ np.tanh(p.w1.values @ pooled + p.b1.values) + p.b2.values
        assert np.allclose(token.vector.values, expected)
        assert abs(token.attention.sum() - 1.0) < 1e-6
        assert token.entities == [0, 1, 2]

    def test_triple_order_does_not_matter(self, path_graph, bridge_params, rng):
        h = constant(rng.standard_normal((3, DIM)))
        a = sag_pool(subgraph([0, 1], [0.3, 0.8]), path_graph, h, bridge_params)
        b = sag_pool(subgraph([1, 0], [0.8, 0.3]), path_graph, h, bridge_params)
        assert np.allclose(a.vector.values, b.vector.values)

    def test_empty_subgraph(self, path_graph, bridge_params):
        with pytest.raises(PoolingError):
            sag_pool(Subgraph([], None, np.zeros(0)), path_graph, constant(np.zeros((0, DIM))), bridge_params)

    def test_context_shape_checked(self, path_graph, bridge_params):
        with pytest.raises(PoolingError):
            sag_pool(subgraph([0], [0.5]), path_graph, constant(np.zeros((3, DIM))), bridge_params)

    def test_inclusion_takes_the_strongest_edge(self, path_graph):
        weights = inclusion_weights(subgraph([0, 1], [0.2, 0.9]), path_graph, [0, 1, 2])
        assert np.allclose(weights.values, [0.2, 0.9, 0.9])

    def test_token_gradient_in_mask(self, path_graph, bridge_params, rng):
        h = constant(rng.standard_normal((3, DIM)))

        def squared_norm(mask):
            sub = Subgraph([0, 1], mask, np.array([0.5, 0.4]))
            v = sag_pool(sub, path_graph, h, bridge_params).vector
            return ops.sum(ops.mul(v, v))

        assert grad_check(squared_norm, constant([0.3, 0.7])) < 1e-5


class TestAssemble:
    @pytest.fixture
    def embedder(self, rng):
        return TokenEmbedder(parameter(rng.standard_normal((32, D_LLM))))

    @pytest.fixture
    def token(self, path_graph, bridge_params, rng):
        return sag_pool(subgraph([0], [0.5]), path_graph, constant(rng.standard_normal((2, DIM))), bridge_params)

    def test_graph_token_leads(self, embedder, token):
        prompt = VerbalizedPrompt(text='one two three four five', triple_count=0)
        seq = assemble_reasoner_input(token, prompt, embedder)
        assert seq.shape == (6, D_LLM)
        assert np.array_equal(seq.values[0], token.vector.values)

    def test_empty_prompt_is_token_only(self, embedder, token):
        seq = assemble_reasoner_input(token, VerbalizedPrompt(text='', triple_count=0), embedder)
        assert seq.shape == (1, D_LLM)

    def test_without_graph_token(self, embedder, token):
        prompt = VerbalizedPrompt(text='one two three', triple_count=0)
        seq = assemble_reasoner_input(token, prompt, embedder, use_graph_token=False)
        assert np.array_equal(seq.values, embedder.embed(prompt).values)

    def test_dimension_mismatch(self, token, rng):
        narrow = TokenEmbedder(parameter(rng.standard_normal((32, D_LLM + 1))))
        with pytest.raises(ConfigError):
            assemble_reasoner_input(token, VerbalizedPrompt(text='x', triple_count=0), narrow)
