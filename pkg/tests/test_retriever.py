import json

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgqa.errors import ConfigError, DomainError, RetrievalExhaustedError
from kgqa.kg import EmbeddingProvider, KnowledgeGraph
from kgqa.numerics import constant, grad_check_tensors
from kgqa.numerics import ops
from kgqa.retriever import (
    EdgeProbs,
    RetrievalState,
    RetrieverParams,
    attention_scores,
    grow_prune_step,
    load_policy,
    render_case_study,
    retrieve,
    sample_mask,
    select_subgraph,
    update_entity_embeddings,
    write_traces,
)
from kgqa.storage import StorageManager


def star_graph(leaves):
    return KnowledgeGraph.from_triples([('hub', 'r', f'leaf{i}') for i in range(leaves)])


def table_provider(g, dim, special=None):
    """File-mode provider where every name shares one vector except ``special``."""
    table = {name: np.zeros(dim) for name in g.entity_names + g.relation_names}
    for name, vec in (special or {}).items():
        table[name] = np.asarray(vec, dtype=np.float64)
    return EmbeddingProvider(g, dim=dim, table=table)


def make_params(dim, seed=0, **settings):
    return RetrieverParams(dim=dim, rng=np.random.default_rng(seed), **settings)


def initial(g, provider, *names):
    return RetrievalState.initial([g.entity_id(n) for n in names], g, provider)


def random_graph(rng, entities=8, edges=14, relations=3):
    triples = []
    for _ in range(edges):
        h, t = rng.integers(0, entities, size=2)
        triples.append((f'e{h}', f'r{rng.integers(0, relations)}', f'e{t}'))
    return KnowledgeGraph.from_triples(triples)


def q_zero(dim):
    return constant(np.zeros(dim))


class TestAttention:
    def test_single_neighbor_scores_one(self, chain_graph):
        provider = EmbeddingProvider(chain_graph, dim=4)
        att = attention_scores(initial(chain_graph, provider, 'a'), chain_graph, q_zero(4), make_params(4), provider)
        assert att.triple_ids.tolist() == [0]
        assert np.allclose(att.alpha.values, [1.0])

    def test_identical_features_split_evenly(self):
        g = star_graph(2)
        provider = table_provider(g, 3, {'leaf0': [1, 2, 3], 'leaf1': [1, 2, 3]})
        att = attention_scores(initial(g, provider, 'hub'), g, q_zero(3), make_params(3), provider)
        assert np.allclose(att.alpha.values, [0.5, 0.5])

    def test_unit_weight_star_matches_closed_form(self, rng):
        g = star_graph(4)
        dim = 3
        vectors = {name: rng.standard_normal(dim) for name in g.entity_names + g.relation_names}
        provider = EmbeddingProvider(g, dim=dim, table=vectors)
        params = make_params(dim)
        params.score_weight.values[...] = 1.0
        params.score_bias.values[...] = 0.0
        q = rng.standard_normal(dim)
        att = attention_scores(initial(g, provider, 'hub'), g, constant(q), params, provider)

        scores = np.array([
            vectors['hub'].sum() + vectors[f'leaf{i}'].sum() + vectors['r'].sum() + q.sum() for i in range(4)
        ])
        expected = np.exp(scores) / np.exp(scores).sum()
        assert np.allclose(att.alpha.values, expected, atol=1e-12)

    def test_empty_frontier(self, chain_graph):
        provider = EmbeddingProvider(chain_graph, dim=4)
        state = initial(chain_graph, provider, 'a').evolve(frontier=frozenset())
        with pytest.raises(RetrievalExhaustedError):
            attention_scores(state, chain_graph, q_zero(4), make_params(4), provider)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_per_source_softmax(self, seed):
        rng = np.random.default_rng(seed)
        g = random_graph(rng)
        provider = EmbeddingProvider(g, dim=4)
        seeds = sorted(set(rng.integers(0, g.num_entities, size=3).tolist()))
        state = RetrievalState.initial(seeds, g, provider)
        att = attention_scores(state, g, constant(rng.standard_normal(4)), make_params(4, seed), provider)
        if att.alpha is None:
            return
        for src in set(att.sources.tolist()):
            assert abs(att.alpha.values[att.sources == src].sum() - 1.0) < 1e-6


class TestGrowPrune:
    def test_chain_reaches_every_entity(self, chain_graph):
        provider = EmbeddingProvider(chain_graph, dim=4)
        params = make_params(4, num_layers=2)
        state = initial(chain_graph, provider, 'a')
        for _ in range(2):
            state = grow_prune_step(state, chain_graph, q_zero(4), params, provider)
        names = {chain_graph.entity_names[e] for e in state.frontier}
        assert names >= {'a', 'b', 'c'}
        assert state.layer_index == 2
        assert set(state.edge_probs.triple_ids.tolist()) == {0, 1}

    def test_star_pruning_keeps_the_strong_leaf(self):
        g = star_graph(20)
        provider = table_provider(g, 2, {'leaf7': [10.0, 0.0]})
        params = make_params(2, threshold=0.1, prune_trigger_budget=16)
        params.score_weight.values[...] = 0.0
        params.score_weight.values[0, 2] = 1.0      # first coordinate of the target entity
        state = grow_prune_step(initial(g, provider, 'hub'), g, q_zero(2), params, provider)

        layer = state.trace[-1]
        assert layer.low_attention_edges == 19
        assert layer.pruning_triggered
        assert layer.pruned_edges == 19
        assert {g.entity_names[e] for e in state.frontier} == {'hub', 'leaf7'}
        # pruned edges keep their probability
        assert len(state.edge_probs) == 20

    def test_uniform_star_below_budget_does_not_prune(self):
        g = star_graph(16)
        provider = table_provider(g, 2)
        state = grow_prune_step(initial(g, provider, 'hub'), g, q_zero(2), make_params(2), provider)
        assert not state.trace[-1].pruning_triggered
        assert len(state.frontier) == 17

    def test_uniform_star_above_budget_exhausts(self):
        g = star_graph(20)
        provider = table_provider(g, 2)
        start = initial(g, provider, 'hub')
        state = grow_prune_step(start, g, q_zero(2), make_params(2), provider)
        assert state.exhausted
        assert state.frontier == start.frontier

    def test_trigger_counts_each_triple_once(self):
        # triple 0 joins two frontier entities and is scored from both ends
        alpha = np.array([0.05, 0.05, 0.05, 0.9])
        sources = np.array([0, 1, 0, 1])
        triple_ids = np.array([0, 0, 1, 2])
        policy = load_policy(make_params(2, threshold=0.1, prune_trigger_budget=2))
        decision = policy.decide(alpha, sources, triple_ids)
        assert decision.low_attention == 2
        assert not decision.triggered
        tighter = load_policy(make_params(2, threshold=0.1, prune_trigger_budget=1))
        tighter = tighter.decide(alpha, sources, triple_ids)
        assert tighter.triggered
        assert tighter.keep.tolist() == [False, False, False, True]

    def test_top_k_keeps_best_per_source(self, rng):
        g = star_graph(20)
        provider = EmbeddingProvider(g, dim=4)
        params = make_params(4, pruning='topk', top_k=5)
        state = grow_prune_step(initial(g, provider, 'hub'), g, q_zero(4), params, provider)
        att = state.last_attention
        assert att.keep.sum() == 5
        assert att.alpha.values[att.keep].min() >= att.alpha.values[~att.keep].max()

    def test_unknown_policy(self):
        with pytest.raises(ConfigError):
            load_policy(make_params(2, pruning='random'))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.01, 0.98), st.floats(0.001, 0.5))
    def test_raising_threshold_shrinks_surviving_edges(self, seed, low, gap):
        high = min(low + gap, 0.99)
        rng = np.random.default_rng(seed)
        g = random_graph(rng, entities=10, edges=30)
        provider = EmbeddingProvider(g, dim=4)
        base = make_params(4, seed, prune_trigger_budget=0)
        start = RetrievalState.initial([0], g, provider)
        q = constant(rng.standard_normal(4))

        def survivors(sigma):
            state = grow_prune_step(start, g, q, base.with_settings(threshold=sigma), provider)
            att = state.last_attention
            if att.alpha is None:
                return set()
            return {(int(t), int(s)) for t, s, k in zip(att.triple_ids, att.sources, att.keep) if k}

        assert survivors(high) <= survivors(low)


class TestEntityUpdate:
    def test_identity_update_leaves_embeddings(self, chain_graph):
        provider = EmbeddingProvider(chain_graph, dim=4)
        params = make_params(4)
        params.w_self.values[...] = np.eye(4)
        params.w_neigh.values[...] = 0.0
        state = grow_prune_step(initial(chain_graph, provider, 'a'), chain_graph, q_zero(4), params, provider)
        updated = update_entity_embeddings(state, chain_graph, params)
        assert np.allclose(updated.context.values, state.context.values)

    def test_triangle_matches_dense_oracle(self, rng):
        g = KnowledgeGraph.from_triples([('a', 'r', 'b'), ('b', 'r', 'c'), ('c', 'r', 'a')])
        provider = EmbeddingProvider(g, dim=3)
        params = make_params(3, pruning='none')
        state = grow_prune_step(initial(g, provider, 'a'), g, q_zero(3), params, provider)
        att = state.last_attention

        index = state.local_index()
        adjacency = np.zeros((len(state.visited), len(state.visited)))
        for s, t, a, k in zip(att.sources, att.targets, att.alpha.values, att.keep):
            if k:
                adjacency[index[int(t)], index[int(s)]] += a
        h = state.context.values
        expected = h @ params.w_self.values.T + (adjacency @ h) @ params.w_neigh.values.T

        updated = update_entity_embeddings(state, g, params)
        assert np.allclose(updated.context.values, expected)
        # the seed has no incoming scored edge
        a = index[g.entity_id('a')]
        assert np.allclose(updated.context.values[a], params.w_self.values @ h[a])


class TestMask:
    def test_half_noise_half_probability(self):
        assert np.allclose(sample_mask(constant([0.5]), 1.0, noise=0.5).values, [0.5])

    def test_half_noise_reproduces_probabilities(self, rng):
        p = rng.uniform(0.01, 0.99, size=50)
        assert np.allclose(sample_mask(constant(p), 1.0, noise=0.5).values, p)

    def test_low_temperature_saturates(self):
        assert sample_mask(constant([0.8]), 1e-3, noise=0.5).values[0] > 0.999

    def test_boundary_probabilities_are_clamped(self):
        m = sample_mask(constant([0.0, 1.0]), 1.0, noise=0.5).values
        assert 0.0 < m[0] < 1e-5 and 1 - 1e-5 < m[1] < 1.0

    def test_non_positive_temperature(self):
        with pytest.raises(DomainError):
            sample_mask(constant([0.5]), 0.0, noise=0.5)

    def test_sampled_noise_is_seeded(self):
        p = constant(np.full(10, 0.3))
        a = sample_mask(p, 1.0, rng=np.random.default_rng(3)).values
        b = sample_mask(p, 1.0, rng=np.random.default_rng(3)).values
        assert np.array_equal(a, b)
        assert np.all((a > 0) & (a < 1))


class TestSelectSubgraph:
    def test_matches_sort_oracle(self, rng):
        p = rng.uniform(0.0, 1.0, size=50)
        probs = EdgeProbs(np.arange(50, dtype=np.int64), constant(p))
        sub = select_subgraph(probs, constant(p), 10)
        assert sub.triples == sorted(range(50), key=lambda i: (-p[i], i))[:10]
        assert np.array_equal(sub.importance, np.sort(p)[::-1][:10])

    def test_budget_larger_than_positive_edges(self):
        p = np.array([0.2, 0.0, 0.7])
        sub = select_subgraph(EdgeProbs(np.array([4, 5, 6]), constant(p)), constant(p), 10)
        assert sub.triples == [6, 4]

    def test_budget_one_and_ties(self):
        p = np.array([0.5, 0.5, 0.1])
        sub = select_subgraph(EdgeProbs(np.array([9, 3, 1]), constant(p)), constant(p), 1)
        assert sub.triples == [3]

    def test_budget_must_be_positive(self):
        with pytest.raises(DomainError):
            select_subgraph(EdgeProbs.empty(), None, 0)


class TestRetrieve:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 3))
    def test_visited_is_the_hop_ball(self, seed, layers):
        rng = np.random.default_rng(seed)
        g = random_graph(rng)
        provider = EmbeddingProvider(g, dim=4)
        params = make_params(4, seed, num_layers=layers, pruning='none')
        result = retrieve(g, provider, 'q', [0], params, budget=5, noise=0.5)

        nxg = nx.Graph()
        nxg.add_nodes_from(range(g.num_entities))
        nxg.add_edges_from(zip(g.heads.tolist(), g.tails.tolist()))
        ball = nx.single_source_shortest_path_length(nxg, 0, cutoff=layers)
        assert set(result.state.visited) == set(ball)
        assert len(result.subgraph) <= 5

    def test_mask_gradient_reaches_scorer(self, rng):
        g = random_graph(rng, entities=6, edges=10)
        provider = EmbeddingProvider(g, dim=4)
        params = make_params(4, num_layers=2, pruning='none')
        seed = int(g.heads[0])

        def loss():
            return ops.sum(retrieve(g, provider, 'q', [seed], params, budget=20, noise=0.5).mask)

        loss().backward()
        assert np.any(params.score_weight.grad != 0.0)
        params.weights.zero_grad()
        assert grad_check_tensors(loss, [params.score_weight, params.w_neigh]) < 1e-4

    def test_traces_and_case_study(self, tmp_path, qa_graph):
        provider = EmbeddingProvider(qa_graph, dim=4)
        params = make_params(4, num_layers=2)
        result = retrieve(qa_graph, provider, 'who?', [qa_graph.entity_id('alice')], params, budget=3, noise=0.5)
        record = result.trace_record(qa_graph, qid='q1')
        assert record['seeds'] == ['alice']
        assert len(record['layers']) == len(result.state.trace)
        assert len(record['subgraph']) == len(result.subgraph)

        path = write_traces(StorageManager(tmp_path), [record])
        assert path == tmp_path / 'traces' / 'traces.jsonl'
        assert json.loads(path.read_text().splitlines()[0])['id'] == 'q1'
        assert not list(path.parent.glob('*.tmp'))
        text = render_case_study(record)
        assert text.startswith('Question: who?\n')
        assert ' → ' in text

    def test_entity_scores_cover_incident_edges(self, qa_graph):
        provider = EmbeddingProvider(qa_graph, dim=4)
        params = make_params(4, num_layers=2)
        alice = qa_graph.entity_id('alice')
        result = retrieve(qa_graph, provider, 'who?', [alice], params, budget=3, noise=0.5)
        scores = result.trace_record(qa_graph)['entity_scores']
        for e in result.state.visited:
            incident = [result.state.edge_scores.get(int(t), 0.0) for t in qa_graph.incident(e)]
            assert scores[qa_graph.entity_names[e]] == max(incident + [0.0])
        # seeds report the edges they expanded along
        assert scores['alice'] > 0.0

    def test_retrieval_is_deterministic(self, qa_graph):
        provider = EmbeddingProvider(qa_graph, dim=4)
        params = make_params(4, num_layers=2)
        seeds = [qa_graph.entity_id('bob')]
        a = retrieve(qa_graph, provider, 'q', seeds, params, budget=4, rng=np.random.default_rng(5))
        b = retrieve(qa_graph, provider, 'q', seeds, params, budget=4, rng=np.random.default_rng(5))
        assert a.subgraph.triples == b.subgraph.triples
        assert np.array_equal(a.mask.values, b.mask.values)
