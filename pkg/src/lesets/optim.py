"""AdamW with decoupled weight decay and a plateau learning-rate halver."""

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from lesets.tensor import Tensor

DEFAULT_LR = 1e-3
DEFAULT_WEIGHT_DECAY = 1e-4


@dataclass
class AdamWState:
    """Optimizer moments and hyperparameters.

    Update for step t:
        m = b1*m + (1-b1)*g;  v = b2*v + (1-b2)*g^2
        m_hat = m / (1-b1^t); v_hat = v / (1-b2^t)
        p = p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)
    """

    lr: float = DEFAULT_LR
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"Invalid learning rate: {self.lr}")
        if not 0.0 <= self.beta1 < 1.0:
            raise ValueError(f"Invalid beta1: {self.beta1}")
        if not 0.0 <= self.beta2 < 1.0:
            raise ValueError(f"Invalid beta2: {self.beta2}")
        if self.eps < 0:
            raise ValueError(f"Invalid epsilon: {self.eps}")
        if self.weight_decay < 0:
            raise ValueError(f"Invalid weight decay: {self.weight_decay}")
        if self.step_count < 0:
            raise ValueError("step_count cannot be negative")


def adamw_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray | None],
    state: AdamWState,
) -> tuple[Mapping[str, Tensor], AdamWState]:
    """Apply one AdamW update in place.

    Args:
        params: Named parameter tensors.
        grads: Gradient per parameter name; missing or None means zero.
        state: Optimizer state, updated in place.

    Returns:
        The same params mapping and state.

    Raises:
        FloatingPointError: If a gradient contains NaN or Inf.
        ValueError: On a gradient/parameter shape mismatch.
    """
    if not state.lr > 0:
        raise ValueError(f"Invalid learning rate: {state.lr}")
    checked = {}
    for name, param in params.items():
        grad = grads.get(name)
        grad = np.zeros_like(param.data) if grad is None else np.asarray(grad, dtype=np.float64)
        if grad.shape != param.shape:
            raise ValueError(f"gradient shape {grad.shape} does not match {name} {param.shape}")
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite gradient for {name}")
        checked[name] = grad

    state.step_count += 1
    t = state.step_count
    correction1 = 1.0 - state.beta1**t
    correction2 = 1.0 - state.beta2**t

    for name, param in params.items():
        grad = checked[name]
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad**2
        state.first_moment[name] = m
        state.second_moment[name] = v

        m_hat = m / correction1
        v_hat = v / correction2
        param.data = param.data - state.lr * (m_hat / (np.sqrt(v_hat) + state.eps) + state.weight_decay * param.data)

    return params, state


class AdamW:
    """Stateful AdamW over a fixed set of named parameters."""

    def __init__(
        self,
        params: Mapping[str, Tensor],
        lr: float = DEFAULT_LR,
        weight_decay: float = DEFAULT_WEIGHT_DECAY,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.params = dict(params)
        self.state = AdamWState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps, weight_decay=weight_decay)

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float) -> None:
        if not value > 0:
            raise ValueError(f"Invalid learning rate: {value}")
        self.state.lr = value

    def step(self) -> None:
        adamw_step(self.params, {n: p.grad for n, p in self.params.items()}, self.state)

    def zero_grad(self) -> None:
        for param in self.params.values():
            param.zero_grad()


def is_improvement(value: float, best: float, threshold: float = 1e-6) -> bool:
    """True when ``value`` beats ``best`` by at least ``threshold`` relative."""
    if math.isinf(best):
        return math.isfinite(value)
    return value < best - threshold * abs(best)


class PlateauHalving:
    """Halve the learning rate after ``patience`` epochs without improvement."""

    def __init__(self, optimizer: AdamW, patience: int = 10, factor: float = 0.5, threshold: float = 1e-6):
        if patience < 1:
            raise ValueError("patience must be positive")
        self.optimizer = optimizer
        self.patience = patience
        self.factor = factor
        self.threshold = threshold
        self.best = math.inf
        self.bad_epochs = 0

    def step(self, metric: float) -> bool:
        """Record one epoch's validation loss; returns True when the rate was halved."""
        if is_improvement(metric, self.best, self.threshold):
            self.best = metric
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            self.optimizer.lr = self.optimizer.lr * self.factor
            self.bad_epochs = 0
            return True
        return False
