from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from src.autodiff.graph import Gradient
from src.errors import UsageError

ScalarFn = Callable[[Mapping[str, np.ndarray]], float]


def finite_difference(scalar_fn: ScalarFn, params: Mapping[str, np.ndarray], epsilon: float = 1e-6) -> Gradient:
    """Central-difference estimate of the gradient of ``scalar_fn`` at ``params``."""
    if epsilon <= 0:
        raise UsageError(f"epsilon must be > 0, got {epsilon}")

    point = {name: np.array(value, dtype=np.float64) for name, value in params.items()}
    estimate: dict[str, np.ndarray] = {}
    for name, value in point.items():
        grad = np.zeros_like(value)
        flat = value.reshape(-1)
        for k in range(flat.size):
            original = flat[k]
            flat[k] = original + epsilon
            upper = float(scalar_fn(point))
            flat[k] = original - epsilon
            lower = float(scalar_fn(point))
            flat[k] = original
            grad.reshape(-1)[k] = (upper - lower) / (2.0 * epsilon)
        estimate[name] = grad
    return Gradient(values=estimate)


def max_relative_error(analytic: Gradient, numeric: Gradient) -> float:
    """max|a-b| / max(1, max|a|, max|b|) over every parameter."""
    if set(analytic.keys()) != set(numeric.keys()):
        raise UsageError("gradients cover different parameters")
    a = analytic.flat()
    b = numeric.flat()
    if a.size == 0:
        return 0.0
    scale = max(1.0, float(np.max(np.abs(a))), float(np.max(np.abs(b))))
    return float(np.max(np.abs(a - b))) / scale
