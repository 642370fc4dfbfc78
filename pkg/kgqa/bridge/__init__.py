from .inputs import TokenEmbedder, assemble_reasoner_input
from .pooling import BridgeParams, GraphToken, inclusion_weights, sag_pool
from .prompt import PROMPT_TEMPLATE, VerbalizedPrompt, token_bucket, tokenize, verbalize

__all__ = [
    'BridgeParams',
    'GraphToken',
    'PROMPT_TEMPLATE',
    'TokenEmbedder',
    'VerbalizedPrompt',
    'assemble_reasoner_input',
    'inclusion_weights',
    'sag_pool',
    'token_bucket',
    'tokenize',
    'verbalize',
]
