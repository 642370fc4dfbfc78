# numerics/optim.py
from typing import Dict, Iterable, List

import numpy as np

from ..errors import ConfigError
from .tensor import Tensor


class Adam:
    """Adaptive-moment estimation over a fixed list of parameter tensors.

    Parameters without a gradient are skipped for that step, which is how a
    frozen group stays bit-identical.
    """

    def __init__(
        self,
        params: Iterable[Tensor],
        lr: float = 1e-5,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ConfigError(f"betas must lie in [0, 1), got ({beta1}, {beta2})")
        self.params: List[Tensor] = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m: Dict[int, np.ndarray] = {}
        self._v: Dict[int, np.ndarray] = {}
        self._t: Dict[int, int] = {}

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> int:
        """Apply one update; returns the number of tensors that moved."""
        moved = 0
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            m = self._m.get(i)
            if m is None:
                m = np.zeros_like(p.values)
                self._v[i] = np.zeros_like(p.values)
                self._t[i] = 0
            v = self._v[i]
            self._t[i] += 1
            t = self._t[i]
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * (g * g)
            self._m[i], self._v[i] = m, v
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            p.values -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            moved += 1
        return moved
