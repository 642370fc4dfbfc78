# bridge/prompt.py
import hashlib
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ..kg.store import KnowledgeGraph
from ..retriever.state import Subgraph

GRAPH_TOKEN_MARKER = '[Graph Token]'
PROMPT_TEMPLATE = (
    GRAPH_TOKEN_MARKER
    + ' Based on the following reasoning paths, please answer the given question. \n'
    + ' Reasoning Paths: {paths} \n'
    + ' Question: {question} \n'
    + ' Answer: {answer}'
)
PATH_ARROW = ' → '


@dataclass(frozen=True)
class VerbalizedPrompt:
    text: str
    triple_count: int
    subgraph_id: str = ''

    def body(self) -> str:
        """The prompt without the graph-token marker; that position is filled by the soft token."""
        if self.text.startswith(GRAPH_TOKEN_MARKER):
            return self.text[len(GRAPH_TOKEN_MARKER):].lstrip(' ')
        return self.text


def format_path(g: KnowledgeGraph, tid: int) -> str:
    return '<' + PATH_ARROW.join(g.triple_names(tid)) + '>'


def verbalize(subgraph: Subgraph, g: KnowledgeGraph, question: str, answer: Optional[str] = None,
              include_paths: bool = True) -> VerbalizedPrompt:
    """Fill the prompt template; with ``include_paths`` off the Reasoning Paths section is left empty."""
    order: List[int] = []
    if include_paths:
        # stable sort keeps ascending triple id among equal importance
        order = sorted(range(len(subgraph.triples)),
                       key=lambda i: (-float(subgraph.importance[i]), subgraph.triples[i]))
    paths = '; '.join(format_path(g, subgraph.triples[i]) for i in order)
    text = PROMPT_TEMPLATE.format(paths=paths, question=question, answer=answer or '')
    return VerbalizedPrompt(text=text, triple_count=len(order),
                            subgraph_id=subgraph.identifier() if not subgraph.is_empty else '')


def tokenize(prompt: VerbalizedPrompt) -> List[str]:
    return prompt.body().split()


def token_bucket(token: str, vocab_buckets: int) -> int:
    digest = hashlib.blake2b(token.encode('utf-8'), digest_size=8).digest()
    return int.from_bytes(digest, 'little') % vocab_buckets


def token_ids(prompt: VerbalizedPrompt, vocab_buckets: int) -> np.ndarray:
    return np.asarray([token_bucket(tok, vocab_buckets) for tok in tokenize(prompt)], dtype=np.int64)
