# numerics/gradcheck.py
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import DomainError, EvaluationError, NonFiniteError
from .tensor import Tensor

MIN_EPS = 1e-6
MAX_EPS = 1e-3


def _scalar(out: Tensor) -> float:
    if out.values.size != 1:
        raise DomainError(f"grad_check: function must be scalar-valued, got shape {out.shape}")
    value = float(out.values.reshape(-1)[0])
    if not np.isfinite(value):
        raise EvaluationError("grad_check: non-finite function value")
    return value


def _evaluate(fn: Callable[[], Tensor]) -> float:
    try:
        return _scalar(fn())
    except NonFiniteError as e:
        raise EvaluationError(f"grad_check: non-finite evaluation ({e.message})")


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """Max relative error between the tape gradient of ``f`` at ``x`` and a
    central difference, measured as |analytic - numeric| / max(1, |analytic|).
    """
    if not MIN_EPS <= eps <= MAX_EPS:
        raise DomainError(f"grad_check: eps {eps} outside [{MIN_EPS}, {MAX_EPS}]")
    point = Tensor(x.values, requires_grad=True, name='grad_check.x')
    try:
        out = f(point)
    except NonFiniteError as e:
        raise EvaluationError(f"grad_check: non-finite evaluation ({e.message})")
    _scalar(out)
    out.backward()
    analytic = point.grad if point.grad is not None else np.zeros(point.shape)

    base = x.values.astype(np.float64)
    numeric = np.zeros_like(base)
    flat = numeric.reshape(-1)
    for i in range(base.size):
        shifted = base.copy().reshape(-1)
        shifted[i] += eps
        up = _evaluate(lambda: f(Tensor(shifted.reshape(base.shape))))
        shifted[i] -= 2 * eps
        down = _evaluate(lambda: f(Tensor(shifted.reshape(base.shape))))
        flat[i] = (up - down) / (2 * eps)
    return _relative_error(analytic, numeric)


def grad_check_tensors(
    loss_fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    eps: float = 1e-5,
    max_coords: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Gradient check of a closure against tensors it reads (e.g. model parameters).

    Values are perturbed in place and restored. With ``max_coords`` a random
    subset of coordinates per tensor is checked, drawn from ``rng``.
    """
    if not MIN_EPS <= eps <= MAX_EPS:
        raise DomainError(f"grad_check: eps {eps} outside [{MIN_EPS}, {MAX_EPS}]")
    for t in tensors:
        t.zero_grad()
    out = loss_fn()
    _scalar(out)
    out.backward()
    analytics = [t.grad.copy() if t.grad is not None else np.zeros(t.shape) for t in tensors]
    for t in tensors:
        t.zero_grad()

    worst = 0.0
    for t, analytic in zip(tensors, analytics):
        flat = t.values.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            if rng is None:
                raise DomainError("grad_check: sampling coordinates needs an rng")
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        for i in coords:
            original = flat[i]
            flat[i] = original + eps
            up = _evaluate(loss_fn)
            flat[i] = original - eps
            down = _evaluate(loss_fn)
            flat[i] = original
            numeric = (up - down) / (2 * eps)
            a = analytic.reshape(-1)[i]
            worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
    for t in tensors:
        t.zero_grad()
    return worst


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    if analytic.size == 0:
        return 0.0
    denom = np.maximum(1.0, np.abs(analytic))
    return float(np.max(np.abs(analytic - numeric) / denom))
