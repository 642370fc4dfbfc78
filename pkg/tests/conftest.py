import numpy as np
import pytest

from kgqa.engine import build_engine
from kgqa.evalbench.synthetic import SyntheticSpec, generate_synthetic
from kgqa.kg import KnowledgeGraph, TrainSample
from kgqa.logs import configure_logging

from .helpers import TINY_SETTINGS, hash_provider, tiny_config


@pytest.fixture(scope='session', autouse=True)
def quiet_logging():
    configure_logging('WARNING')


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def config():
    return tiny_config()


@pytest.fixture
def chain_graph():
    return KnowledgeGraph.from_triples([('a', 'r', 'b'), ('b', 'r', 'c')])


@pytest.fixture
def qa_graph():
    """Two-hop answers behind a seed, with a few distractor edges."""
    return KnowledgeGraph.from_triples([
        ('alice', 'works_at', 'acme'),
        ('acme', 'located_in', 'paris'),
        ('alice', 'likes', 'jazz'),
        ('jazz', 'originated_in', 'new_orleans'),
        ('bob', 'works_at', 'acme'),
        ('bob', 'likes', 'rock'),
        ('paris', 'capital_of', 'france'),
    ])


@pytest.fixture
def qa_samples(qa_graph):
    g = qa_graph
    return [
        TrainSample(qid='q1', question='where is the employer of alice located?', seeds=(g.entity_id('alice'),),
                    answers=(g.entity_id('paris'),), answer_texts=('paris',), hops=2),
        TrainSample(qid='q2', question='where is the employer of bob located?', seeds=(g.entity_id('bob'),),
                    answers=(g.entity_id('paris'),), answer_texts=('paris',), hops=2),
        TrainSample(qid='q3', question='what does alice like?', seeds=(g.entity_id('alice'),),
                    answers=(g.entity_id('jazz'),), answer_texts=('jazz',), hops=1),
        TrainSample(qid='q4', question='what does bob like?', seeds=(g.entity_id('bob'),),
                    answers=(g.entity_id('rock'),), answer_texts=('rock',), hops=1),
    ]


@pytest.fixture
def modules(config, qa_graph):
    return build_engine(config, qa_graph, hash_provider(qa_graph, config.retriever['embedding_dim']))


@pytest.fixture(scope='session')
def tiny_corpus():
    spec = SyntheticSpec.from_config(TINY_SETTINGS['synthetic'], seed=7)
    return generate_synthetic(spec)
