# Copyright 2024
# Directory: ContourMARL/app/core/optim.py

"""
AdamW with decoupled weight decay and a cosine learning-rate schedule.
"""

import logging
import math
from typing import Dict, Mapping, Optional, Sequence

import numpy as np

from .diffcore import ParameterSet

logger = logging.getLogger(__name__)


def cosine_lr(epoch: int, epochs: int, lr_max: float, lr_min: float) -> float:
    """Cosine annealing from lr_max (epoch 0) to lr_min (last epoch)."""
    if epochs <= 1:
        return lr_max
    progress = min(max(epoch, 0), epochs - 1) / (epochs - 1)
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * progress))


class AdamW:
    """Adam moments with weight decay applied directly to the parameters."""

    def __init__(
        self,
        params: ParameterSet,
        lr: float = 1e-4,
        betas: Sequence[float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.01,
        frozen: Optional[Sequence[str]] = None,
    ):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.frozen = set(frozen or ())
        self.step_count = 0
        self.m: Dict[str, np.ndarray] = {name: np.zeros(t.shape) for name, t in params.items()}
        self.v: Dict[str, np.ndarray] = {name: np.zeros(t.shape) for name, t in params.items()}

    def step(self) -> None:
        self.step_count += 1
        bias1 = 1.0 - self.beta1 ** self.step_count
        bias2 = 1.0 - self.beta2 ** self.step_count
        for name, tensor in self.params.items():
            if name in self.frozen or tensor.grad is None:
                continue
            g = tensor.grad
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / bias1
            v_hat = self.v[name] / bias2
            tensor.data -= self.lr * self.weight_decay * tensor.data
            tensor.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state(self) -> Dict[str, np.ndarray]:
        out: Dict[str, np.ndarray] = {"step": np.array(float(self.step_count))}
        for name in self.m:
            out[f"m.{name}"] = self.m[name].copy()
            out[f"v.{name}"] = self.v[name].copy()
        return out

    def load_state(self, state: Mapping[str, np.ndarray]) -> None:
        self.step_count = int(state.get("step", np.array(0.0)))
        for name in self.m:
            if f"m.{name}" in state:
                self.m[name] = np.array(state[f"m.{name}"], dtype=np.float64)
                self.v[name] = np.array(state[f"v.{name}"], dtype=np.float64)
