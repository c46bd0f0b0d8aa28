from __future__ import annotations

from typing import Mapping

import numpy as np

from src.autodiff.graph import Gradient


def linear_schedule(step: int, warmup_steps: int, total_steps: int) -> float:
    """Learning-rate factor: linear warmup to 1, then linear decay to 0."""
    if step < warmup_steps:
        return step / max(1, warmup_steps)
    return max(0.0, (total_steps - step) / max(1, total_steps - warmup_steps))


class Adam:
    """Adaptive-moment optimizer with decoupled weight decay over named arrays."""

    def __init__(
        self,
        params: Mapping[str, np.ndarray],
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {name: np.zeros_like(value) for name, value in params.items()}
        self.v = {name: np.zeros_like(value) for name, value in params.items()}

    def step(self, params: Mapping[str, np.ndarray], grads: Gradient, lr: float) -> dict[str, np.ndarray]:
        self.t += 1
        bias1 = 1.0 - self.beta1**self.t
        bias2 = 1.0 - self.beta2**self.t
        updated: dict[str, np.ndarray] = {}
        for name, value in params.items():
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / bias1
            v_hat = self.v[name] / bias2
            new = value - lr * (m_hat / (np.sqrt(v_hat) + self.eps))
            if self.weight_decay:
                new = new - lr * self.weight_decay * value
            updated[name] = new
        return updated
