# engine.py
"""The assembled model: retriever (theta), bridge (psi) and reasoner (phi) over
one knowledge graph, with inference and checkpointing.
"""
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from .bridge import BridgeParams, assemble_reasoner_input, sag_pool, verbalize
from .bridge.pooling import GraphToken
from .bridge.prompt import VerbalizedPrompt
from .cam import ComplexityAssessor
from .config import RunConfig
from .errors import ConfigError, DataError
from .kg.dataset import TrainSample
from .kg.embeddings import EmbeddingProvider
from .kg.store import KnowledgeGraph
from .logs import get_logger
from .numerics import Adam, Parameters, load_checkpoint, save_checkpoint
from .reasoner import ReasonerContract, ReasonerFeedback, build_candidates, load_reasoner
from .retriever import RetrievalResult, RetrieverParams, retrieve
from .retriever.state import Subgraph

logger = get_logger(__name__)

INFERENCE_NOISE = 0.5


@dataclass
class EngineModules:
    graph: KnowledgeGraph
    provider: EmbeddingProvider
    retriever: RetrieverParams
    bridge: BridgeParams
    reasoner: ReasonerContract
    config: RunConfig
    cam: Optional[ComplexityAssessor] = None
    optimizer: Optional[Adam] = field(default=None, repr=False)

    @property
    def groups(self) -> List[Parameters]:
        return [self.retriever.weights, self.bridge.weights, self.reasoner.weights]

    def graph_token_enabled(self, mode: Optional[str] = None) -> bool:
        mode = mode or self.config.training['mode']
        return bool(self.config.bridge['graph_token']) and mode != 'separate'

    def zero_grad(self) -> None:
        for group in self.groups:
            group.zero_grad()

    def build_optimizer(self) -> Adam:
        t = self.config.training
        params = [p for group in self.groups for p in group]
        self.optimizer = Adam(params, lr=t['learning_rate'], beta1=t['beta1'], beta2=t['beta2'], eps=t['adam_eps'])
        return self.optimizer

    def plan(self, sample: TrainSample) -> Tuple[RetrieverParams, int]:
        """Retriever settings and triple budget for one question.

        With the complexity assessor on, the budget is 5 x predicted hops and the
        layer count is max(hops, min_layers).
        """
        return self.plan_for(sample.embed(self.provider))

    def plan_for(self, question_embedding: np.ndarray) -> Tuple[RetrieverParams, int]:
        r = self.config.retriever
        if r['use_cam'] and self.cam is not None:
            prediction = self.cam.predict(question_embedding)
            layers = max(prediction.predicted_hops, r['min_layers'])
            return self.retriever.with_settings(num_layers=layers), self.cam.triples_per_hop * prediction.predicted_hops
        return self.retriever, r['fixed_budget']

    def run_retrieval(self, sample: TrainSample, rng: Optional[np.random.Generator] = None,
                      noise: Optional[float] = None) -> RetrievalResult:
        params, budget = self.plan(sample)
        return retrieve(self.graph, self.provider, sample.question, sample.seeds, params, budget,
                        rng=rng, noise=noise, q_embed=sample.embed(self.provider))

    def graph_token(self, result: RetrievalResult, detached: bool = False,
                    mode: Optional[str] = None) -> Optional[GraphToken]:
        if not self.graph_token_enabled(mode) or result.subgraph.is_empty:
            return None
        subgraph = result.subgraph
        context = result.state.embeddings_for(subgraph.entities(self.graph), self.provider)
        if detached:
            subgraph = Subgraph(subgraph.triples, subgraph.mask.detach(), subgraph.importance, None)
            context = context.detach()
        return sag_pool(subgraph, self.graph, context, self.bridge)

    def reason(self, sample: TrainSample, result: RetrievalResult, training: bool,
               detached: bool = False, mode: Optional[str] = None) -> Tuple[ReasonerFeedback, VerbalizedPrompt]:
        """Bridge the retrieved subgraph into the reasoner and score the candidates."""
        prompt = verbalize(result.subgraph, self.graph, sample.question,
                           include_paths=self.config.bridge['textual_subgraph'])
        token = self.graph_token(result, detached=detached, mode=mode)
        seq = assemble_reasoner_input(token, prompt, self.reasoner.embedder,
                                      use_graph_token=token is not None)
        candidates = build_candidates(sample, result.subgraph, self.graph, include_gold=training,
                                      exclude_seeds=self.config.reasoner['exclude_seeds'])
        return self.reasoner.forward(seq, candidates, sample.embed(self.provider)), prompt

    # checkpoints ------------------------------------------------------------

    def state_dict(self) -> Dict[str, np.ndarray]:
        state: Dict[str, np.ndarray] = {}
        for group in self.groups:
            state.update(group.state_dict())
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        for group in self.groups:
            group.load_state_dict(state)

    def save(self, stem: Union[str, Path], meta: Optional[Dict[str, Any]] = None):
        info = {'kind': 'engine', 'config': self.config.to_dict()}
        info.update(meta or {})
        paths = save_checkpoint(stem, self.state_dict(), info)
        logger.info("checkpoint_written", path=str(paths[0]))
        return paths

    def load(self, stem: Union[str, Path]) -> Dict[str, Any]:
        tensors, meta = load_checkpoint(stem)
        if meta.get('kind') != 'engine':
            raise DataError(f"{stem} is not an engine checkpoint")
        self.load_state_dict(tensors)
        return meta


def build_provider(config: RunConfig, graph: KnowledgeGraph) -> EmbeddingProvider:
    """Precomputed vectors when 'paths.embeddings' is set, hash vectors otherwise."""
    dim = config.retriever['embedding_dim']
    path = config.paths.get('embeddings')
    if not path:
        return EmbeddingProvider(graph, dim=dim)
    if not Path(path).is_file():
        raise DataError(f"embedding file {path} does not exist")
    provider = EmbeddingProvider.from_file(path, graph)
    if provider.dim != dim:
        raise ConfigError(f"embeddings in {path} have dimension {provider.dim}, retriever.embedding_dim is {dim}")
    return provider


def build_engine(config: RunConfig, graph: KnowledgeGraph, provider: EmbeddingProvider,
                 cam: Optional[ComplexityAssessor] = None) -> EngineModules:
    """Initialize every parameter group from one generator seeded by ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    retriever = RetrieverParams.from_config(config.retriever, rng)
    bridge = BridgeParams.from_config(config.retriever, config.bridge, config.reasoner, rng)
    reasoner = load_reasoner(config.reasoner, provider, rng)
    modules = EngineModules(graph, provider, retriever, bridge, reasoner, config, cam=cam)
    modules.build_optimizer()
    logger.debug("engine_built", mode=config.training['mode'], pruning=config.retriever['pruning'],
                 use_cam=cam is not None, **reasoner.describe())
    return modules


@dataclass
class Prediction:
    qid: str
    ranking: List[str]
    predicted: List[str]
    candidates: List[str]
    subgraph: List[int]
    latency_s: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {'id': self.qid, 'predictions': self.ranking, 'predicted_set': self.predicted,
                'subgraph': self.subgraph}


def predict(modules: EngineModules, sample: TrainSample) -> Prediction:
    """Noise-free retrieval followed by reasoning over the inference candidates."""
    started = time.perf_counter()
    result = modules.run_retrieval(sample, noise=INFERENCE_NOISE)
    elapsed = time.perf_counter() - started
    if result.subgraph.is_empty and not sample.is_multiple_choice:
        logger.debug("empty_subgraph", qid=sample.qid)
        return Prediction(sample.qid, [], [], [], [], latency_s=elapsed)
    feedback, _ = modules.reason(sample, result, training=False)
    threshold = modules.config.reasoner['f1_relative_threshold']
    return Prediction(
        qid=sample.qid,
        ranking=feedback.ranking(),
        predicted=feedback.predicted_set(threshold),
        candidates=[c.key for c in feedback.candidates],
        subgraph=list(result.subgraph.triples),
        latency_s=elapsed,
    )
