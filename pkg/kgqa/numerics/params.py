# numerics/params.py
from typing import Dict, Iterator, List, Mapping, Tuple

import numpy as np

from ..errors import ConfigError, DimensionError
from .tensor import Tensor, parameter


def glorot(rng: np.random.Generator, shape: Tuple[int, ...], gain: float = 1.0) -> np.ndarray:
    fan_out, fan_in = (shape[0], shape[1]) if len(shape) == 2 else (1, shape[0])
    limit = gain * np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Parameters:
    """Ordered, named trainable tensors belonging to one parameter group.

    Groups are the unit of stop-gradient: the trainer freezes or updates a
    whole group at once.
    """

    def __init__(self, group: str):
        self.group = group
        self._tensors: Dict[str, Tensor] = {}

    def add(self, name: str, values: np.ndarray) -> Tensor:
        if name in self._tensors:
            raise ConfigError(f"parameter {self.group}.{name} registered twice")
        t = parameter(values, name=f"{self.group}.{name}")
        self._tensors[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self._tensors.values())

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self) -> List[Tuple[str, Tensor]]:
        return list(self._tensors.items())

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.zero_grad()

    def grads(self) -> Dict[str, np.ndarray]:
        return {
            name: (t.grad.copy() if t.grad is not None else np.zeros(t.shape))
            for name, t in self._tensors.items()
        }

    def set_grads(self, grads: Mapping[str, np.ndarray]) -> None:
        for name, t in self._tensors.items():
            t.grad = grads[name].copy() if name in grads else None

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {name: t.values.copy() for name, t in self._tensors.items()}

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {f"{self.group}.{name}": t.values.copy() for name, t in self._tensors.items()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        for name, t in self._tensors.items():
            key = f"{self.group}.{name}"
            if key not in state:
                raise ConfigError(f"checkpoint is missing parameter {key}")
            arr = np.asarray(state[key], dtype=np.float64)
            if arr.shape != t.shape:
                raise DimensionError(f"load {key}", arr.shape, t.shape)
            t.values[...] = arr
