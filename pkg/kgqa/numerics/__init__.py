from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import grad_check, grad_check_tensors
from .ops import linear as apply_linear, softmax as softmax_over_set
from .optim import Adam
from .params import Parameters, glorot
from .tensor import ComputationTape, Tensor, constant, parameter

__all__ = [
    'Adam',
    'ComputationTape',
    'Parameters',
    'Tensor',
    'apply_linear',
    'constant',
    'glorot',
    'grad_check',
    'grad_check_tensors',
    'load_checkpoint',
    'parameter',
    'save_checkpoint',
    'softmax_over_set',
]
