# Copyright 2024
# Directory: ContourMARL/app/services/critic.py

"""
Twin per-agent Q networks over (state, action / delta) and their target copies.
"""

import logging
import math
from typing import Dict, Mapping

import numpy as np

from ..core import diffcore as dc
from ..core.checkpoint import strip_prefix, with_prefix
from ..core.diffcore import ParameterSet, Tensor
from ..core.errors import CheckpointError, ShapeMismatchError

logger = logging.getLogger(__name__)

ACTION_DIM = 2
CRITIC_PREFIXES = ("critic1.", "critic2.", "target1.", "target2.")


def _xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class CriticNetwork:
    """Three-layer tanh perceptron Q(s, a) -> scalar."""

    def __init__(self, state_dim: int, hidden: int, delta: float, seed: int = 0,
                 zero_final: bool = False):
        self.state_dim = state_dim
        self.hidden = hidden
        self.delta = delta
        rng = np.random.default_rng(seed)
        in_dim = state_dim + ACTION_DIM
        self.params = ParameterSet({
            "W1": _xavier_uniform(rng, in_dim, hidden),
            "b1": np.zeros(hidden),
            "W2": _xavier_uniform(rng, hidden, hidden),
            "b2": np.zeros(hidden),
            "W3": np.zeros((hidden, 1)) if zero_final else _xavier_uniform(rng, hidden, 1),
            "b3": np.zeros(1),
        })

    def forward(self, states, actions) -> Tensor:
        """
        Q values for matching rows of states and actions.

        Args:
            states: (..., state_dim)
            actions: (..., 2) in pixels; divided by delta before use

        Returns:
            Q values of shape (...)
        """
        states, actions = dc.as_tensor(states), dc.as_tensor(actions)
        if states.shape[-1] != self.state_dim or actions.shape[-1] != ACTION_DIM \
                or states.shape[:-1] != actions.shape[:-1]:
            raise ShapeMismatchError("critic_forward", states.shape, actions.shape)
        p = self.params
        x = dc.concat([states, actions / self.delta], axis=-1)
        x = dc.tanh(x @ p["W1"] + p["b1"])
        x = dc.tanh(x @ p["W2"] + p["b2"])
        q = x @ p["W3"] + p["b3"]
        return q.reshape(q.shape[:-1])


def critic_forward(critic: CriticNetwork, s, a) -> Tensor:
    """Q value of one or more (state, action) pairs."""
    return critic.forward(s, a)


def soft_update(online: ParameterSet, target: ParameterSet, tau: float) -> None:
    """target <- tau * online + (1 - tau) * target, in place; tau = 1 copies exactly."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must be within (0, 1], got {tau}")
    for name, t in target.items():
        source = online[name].data
        if tau == 1.0:
            t.data = source.copy()
        else:
            t.data = t.data + tau * (source - t.data)


class TwinCritics:
    """Online critics 1/2 and their targets, with checkpoint naming."""

    def __init__(self, state_dim: int, hidden: int, delta: float, seed: int = 0,
                 zero_final: bool = False):
        self.critic1 = CriticNetwork(state_dim, hidden, delta, seed=seed + 1, zero_final=zero_final)
        self.critic2 = CriticNetwork(state_dim, hidden, delta, seed=seed + 2, zero_final=zero_final)
        self.target1 = CriticNetwork(state_dim, hidden, delta, seed=seed + 1, zero_final=zero_final)
        self.target2 = CriticNetwork(state_dim, hidden, delta, seed=seed + 2, zero_final=zero_final)
        soft_update(self.critic1.params, self.target1.params, 1.0)
        soft_update(self.critic2.params, self.target2.params, 1.0)

    @property
    def online(self):
        return (self.critic1, self.critic2)

    @property
    def targets(self):
        return (self.target1, self.target2)

    def soft_update(self, tau: float) -> None:
        soft_update(self.critic1.params, self.target1.params, tau)
        soft_update(self.critic2.params, self.target2.params, tau)

    def state(self) -> Dict[str, np.ndarray]:
        out: Dict[str, np.ndarray] = {}
        for prefix, net in zip(CRITIC_PREFIXES, (self.critic1, self.critic2, self.target1, self.target2)):
            out.update(with_prefix(prefix, net.params.state()))
        return out

    def load_state(self, state: Mapping[str, np.ndarray]) -> None:
        for prefix, net in zip(CRITIC_PREFIXES, (self.critic1, self.critic2, self.target1, self.target2)):
            try:
                net.params.load_state(strip_prefix(prefix, state), strict=True)
            except (KeyError, ShapeMismatchError) as e:
                logger.error(f"Critic checkpoint block {prefix} does not match: {e}")
                raise CheckpointError(f"{prefix} parameters do not match: {e}") from e
