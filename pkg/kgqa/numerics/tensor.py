# numerics/tensor.py
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import DimensionError, NonFiniteError

BackwardFn = Callable[[np.ndarray], None]


class Tensor:
    """Dense rank-0/1/2 array of float64 values recorded for reverse-mode AD.

    Only tensors that (transitively) depend on a ``requires_grad`` leaf keep a
    backward closure; everything else is a constant.
    """

    __slots__ = ('values', 'requires_grad', 'grad', '_parents', '_backward', 'op', 'name')

    def __init__(
        self,
        values,
        requires_grad: bool = False,
        parents: Tuple['Tensor', ...] = (),
        backward: Optional[BackwardFn] = None,
        op: str = 'leaf',
        name: Optional[str] = None,
    ):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim > 2:
            raise DimensionError(op, arr.shape, (2,))
        if arr.size and not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"{op}: non-finite value produced")
        self.values = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents = parents
        self._backward = backward
        self.op = op
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def __len__(self) -> int:
        return self.values.shape[0]

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ''
        return f"Tensor(shape={self.shape}, op={self.op}{label})"

    def item(self) -> float:
        return float(self.values.reshape(-1)[0]) if self.values.size == 1 else float(self.values)

    def numpy(self) -> np.ndarray:
        return self.values.copy()

    def detach(self) -> 'Tensor':
        return Tensor(self.values, op='detach')

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, grad: np.ndarray) -> None:
        if grad.shape != self.values.shape:
            raise DimensionError(f"grad[{self.op}]", grad.shape, self.values.shape)
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64)
        else:
            self.grad = self.grad + grad

    def backward(self, seed: Optional[np.ndarray] = None) -> 'ComputationTape':
        tape = ComputationTape(self)
        tape.backward(seed)
        return tape

    # operator sugar, implemented in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, ops.as_tensor(other, like=self))

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, ops.as_tensor(other, like=self))

    def __rsub__(self, other):
        from . import ops
        return ops.sub(ops.as_tensor(other, like=self), self)

    def __mul__(self, other):
        from . import ops
        if isinstance(other, (int, float)):
            return ops.scale(self, float(other))
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)


class ComputationTape:
    """Topologically ordered record of every node feeding ``root``.

    The order comes from an iterative depth-first walk over parents in their
    recorded order, so two tapes over identical graphs visit nodes identically.
    """

    def __init__(self, root: Tensor):
        self.root = root
        self.nodes: List[Tensor] = []
        self.order: Dict[int, int] = {}
        self._build()

    def _build(self) -> None:
        seen = set()
        stack: List[Tuple[Tensor, bool]] = [(self.root, False)]
        while stack:
            node, expanded = stack.pop()
            key = id(node)
            if expanded:
                self.order[key] = len(self.nodes)
                self.nodes.append(node)
                continue
            if key in seen:
                continue
            seen.add(key)
            stack.append((node, True))
            for parent in reversed(node._parents):
                if id(parent) not in seen:
                    stack.append((parent, False))

    def __len__(self) -> int:
        return len(self.nodes)

    def backward(self, seed: Optional[np.ndarray] = None) -> None:
        root = self.root
        if seed is None:
            seed = np.ones_like(root.values)
        root.accumulate(np.asarray(seed, dtype=np.float64))
        # every consumer precedes its inputs when walking the reversed order
        for node in reversed(self.nodes):
            if node._backward is None or node.grad is None:
                continue
            node._backward(node.grad)
            if not node.is_leaf:
                node.grad = None


def as_array(x) -> np.ndarray:
    return x.values if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def constant(values, name: Optional[str] = None) -> Tensor:
    return Tensor(values, op='const', name=name)


def parameter(values, name: Optional[str] = None) -> Tensor:
    return Tensor(values, requires_grad=True, name=name)


def needs_grad(parents: Sequence[Tensor]) -> bool:
    return any(p.requires_grad for p in parents)
