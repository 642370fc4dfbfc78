# bridge/inputs.py
from typing import Optional

from ..errors import ConfigError, DomainError
from ..numerics import Tensor
from ..numerics import ops
from .pooling import GraphToken
from .prompt import VerbalizedPrompt, token_ids


class TokenEmbedder:
    """Hashed whitespace tokens looked up in a learnable [buckets x d_llm] table."""

    def __init__(self, table: Tensor):
        if table.values.ndim != 2:
            raise ConfigError(f"token table must be a matrix, got shape {table.shape}")
        self.table = table
        self.vocab_buckets, self.dim = table.shape

    def embed(self, prompt: VerbalizedPrompt) -> Optional[Tensor]:
        ids = token_ids(prompt, self.vocab_buckets)
        if not len(ids):
            return None
        return ops.take_rows(self.table, ids)


def assemble_reasoner_input(
    token: Optional[GraphToken],
    prompt: VerbalizedPrompt,
    embedder: TokenEmbedder,
    use_graph_token: bool = True,
) -> Tensor:
    """[h_GT || h_IS]: the graph token at position 0, then the prompt tokens.

    With ``use_graph_token`` off the plain prompt embedding is returned.
    """
    parts = []
    if use_graph_token:
        if token is None:
            raise ConfigError("graph token enabled but none was produced")
        if token.dim != embedder.dim:
            raise ConfigError(f"graph token has dimension {token.dim}, reasoner embeds into {embedder.dim}")
        parts.append(ops.reshape(token.vector, (1, token.dim)))
    embedded = embedder.embed(prompt)
    if embedded is not None:
        parts.append(embedded)
    if not parts:
        raise DomainError("reasoner input is empty")
    return parts[0] if len(parts) == 1 else ops.concat(parts, axis=0)
