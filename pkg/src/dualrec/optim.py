"""Adam optimizer over named parameter tensors."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, ShapeError


def adam_step(values, grad, m, v, t, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns (new_values, new_m, new_v).

    `t` is the 1-based step count after this update.
    """
    if values.shape != grad.shape:
        raise ShapeError(f"gradient shape {grad.shape} does not match parameter shape {values.shape}")
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    return values - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


class Adam:
    """Keeps first/second moment state per named parameter."""

    def __init__(self, params: dict, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {name: np.zeros_like(p.values) for name, p in params.items()}
        self._v = {name: np.zeros_like(p.values) for name, p in params.items()}

    def step(self, grads: dict) -> None:
        self.t += 1
        for name, p in self.params.items():
            p.values, self._m[name], self._v[name] = adam_step(
                p.values, grads[name], self._m[name], self._v[name], self.t,
                lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps,
            )
