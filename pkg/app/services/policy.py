# Copyright 2024
# Directory: ContourMARL/app/services/policy.py

"""
Actor network: bidirectional state-space scans over the agent sequence,
windowed cross-attention fusion of the two hidden-state streams, gated
re-injection, and a tanh-squashed Gaussian action head.
"""

import logging
import math
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ..core import diffcore as dc
from ..core.config import SacConfig
from ..core.diffcore import ParameterSet, Tensor
from ..core.errors import CheckpointError, ShapeMismatchError
from ..models.entities import AgentState, EpisodeState
from . import environment

logger = logging.getLogger(__name__)

LOG_SIGMA_MIN = -5.0
LOG_SIGMA_MAX = 2.0
TANH_LIMIT = 1.0 - 1e-12
A_NORM_INIT = 0.9
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
LOG_2 = math.log(2.0)

BRANCH_KEYS = ("A", "B", "C_out", "D_skip")
FUSION_KEYS = ("W_Q", "W_K", "W_V", "gamma")

StateInput = Union[np.ndarray, Tensor, Sequence[AgentState]]


# ---------------------------------------------------------------- building blocks

def _swap_last(t: Tensor) -> Tensor:
    axes = list(range(t.ndim))
    axes[-2], axes[-1] = axes[-1], axes[-2]
    return dc.transpose(t, axes)


def ss2d_scan(
    x: Tensor,
    p: Mapping[str, Tensor],
    direction: str = "fwd",
    bias: Optional[Tensor] = None,
) -> Tuple[Tensor, Tensor]:
    """
    Linear state-space scan over the agent axis.

    h_t = A h_{t-1} + B x_t (+ bias_t), y_t = C_out h_t + D_skip x_t, h_{-1} = 0.
    The backward direction scans the reversed sequence and re-reverses its outputs.

    Args:
        x: Inputs (..., N, D_in)
        p: Branch parameters A (D_h x D_h), B (D_h x D_in), C_out (D_out x D_h), D_skip (D_out x D_in)
        direction: "fwd" or "bwd"
        bias: Optional per-step additive term (..., N, D_h), indexed in original order

    Returns:
        (y, h) in original index order
    """
    x = dc.as_tensor(x)
    if direction not in ("fwd", "bwd"):
        raise ValueError(f"direction must be 'fwd' or 'bwd', got {direction!r}")
    if x.ndim < 2 or p["B"].shape[1] != x.shape[-1]:
        raise ShapeMismatchError("ss2d_scan", x.shape, p["B"].shape)
    reverse = direction == "bwd"
    seq = dc.flip(x, axis=-2) if reverse else x
    u = seq @ p["B"].T
    if bias is not None:
        u = u + (dc.flip(bias, axis=-2) if reverse else bias)
    h = dc.linear_scan(u, p["A"])
    y = h @ p["C_out"].T + seq @ p["D_skip"].T
    if reverse:
        return dc.flip(y, axis=-2), dc.flip(h, axis=-2)
    return y, h


def _fold_windows(h: Tensor, window: int) -> Tensor:
    """Pad the agent axis to a multiple of window (repeat last row), then split -> (..., nW, w, D)."""
    n = h.shape[-2]
    pad = (-n) % window
    if pad:
        h = dc.take(h, list(range(n)) + [n - 1] * pad, axis=-2)
    lead = h.shape[:-2]
    return h.reshape(lead + ((n + pad) // window, window, h.shape[-1]))


def _cross_attention(q_src: Tensor, kv_src: Tensor, W_Q: Tensor, W_K: Tensor, W_V: Tensor) -> Tensor:
    d = q_src.shape[-1]
    scores = (q_src @ W_Q) @ _swap_last(kv_src @ W_K) / math.sqrt(d)
    return dc.softmax(scores, axis=-1) @ (kv_src @ W_V)


def bchfm_fuse(
    h_fwd: Tensor, h_bwd: Tensor, W_Q: Tensor, W_K: Tensor, W_V: Tensor, window: int
) -> Tensor:
    """
    Windowed bidirectional cross-attention between the two hidden streams.

    Args:
        h_fwd: Forward hidden states (..., N, D_h)
        h_bwd: Backward hidden states, same shape
        W_Q: Query projection (D_h x D_h), shared by both directions
        W_K: Key projection
        W_V: Value projection
        window: Non-overlapping window length

    Returns:
        Fused states (..., N, D_h); padded rows dropped
    """
    h_fwd, h_bwd = dc.as_tensor(h_fwd), dc.as_tensor(h_bwd)
    if h_fwd.shape != h_bwd.shape:
        raise ShapeMismatchError("bchfm_fuse", h_fwd.shape, h_bwd.shape)
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    n, d = h_fwd.shape[-2], h_fwd.shape[-1]
    wf = _fold_windows(h_fwd, window)
    wb = _fold_windows(h_bwd, window)
    fused = _cross_attention(wf, wb, W_Q, W_K, W_V) + _cross_attention(wb, wf, W_Q, W_K, W_V)
    lead = h_fwd.shape[:-2]
    fused = fused.reshape(lead + (fused.shape[-3] * window, d))
    if fused.shape[-2] != n:
        fused = fused[..., :n, :]
    return fused


def layer_forward(x: Tensor, p: Mapping[str, Tensor], window: int) -> Tensor:
    """
    Two-pass gated layer.

    Pass 1 scans both directions independently and fuses their hidden states;
    pass 2 re-runs both scans with gamma * h_fused added at every step.
    The output is the mean of the two pass-2 outputs.

    Args:
        x: Inputs (..., N, D_in)
        p: Keys fwd.*, bwd.* (branch params) and W_Q, W_K, W_V, gamma
        window: Fusion window

    Returns:
        (..., N, D_out)
    """
    fwd = {k: p[f"fwd.{k}"] for k in BRANCH_KEYS}
    bwd = {k: p[f"bwd.{k}"] for k in BRANCH_KEYS}
    _, h_f = ss2d_scan(x, fwd, "fwd")
    _, h_b = ss2d_scan(x, bwd, "bwd")
    fused = bchfm_fuse(h_f, h_b, p["W_Q"], p["W_K"], p["W_V"], window)
    injected = p["gamma"] * fused
    y_f, _ = ss2d_scan(x, fwd, "fwd", bias=injected)
    y_b, _ = ss2d_scan(x, bwd, "bwd", bias=injected)
    return (y_f + y_b) * 0.5


# ---------------------------------------------------------------- action distribution

def squashed_log_prob(u, mu, log_sigma, delta: float) -> Tensor:
    """
    Per-dimension log density of a = delta * tanh(u), u ~ Normal(mu, sigma^2).

    Uses log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u)).
    """
    u, mu, log_sigma = dc.as_tensor(u), dc.as_tensor(mu), dc.as_tensor(log_sigma)
    z = (u - mu) * dc.exp(-log_sigma)
    log_normal = dc.square(z) * -0.5 - log_sigma - HALF_LOG_2PI
    log_jacobian = (LOG_2 - u - dc.softplus(u * -2.0)) * 2.0 + math.log(delta)
    return log_normal - log_jacobian


def sample_action(
    mu: Tensor,
    sigma: Tensor,
    delta: float,
    seed: Optional[int] = None,
    noise: Optional[np.ndarray] = None,
) -> Tuple[Tensor, Tensor]:
    """
    Reparameterized draw from the squashed Gaussian.

    Args:
        mu: Means (..., 2)
        sigma: Standard deviations, positive, same shape
        delta: Action box half-width in pixels
        seed: Noise seed (ignored when noise is given)
        noise: Fixed standard-normal noise of mu's shape

    Returns:
        (a, logpi): actions strictly inside (-delta, delta) and the summed log density
    """
    mu, sigma = dc.as_tensor(mu), dc.as_tensor(sigma)
    if noise is None:
        noise = np.random.default_rng(seed).standard_normal(mu.shape)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != mu.shape:
        raise ShapeMismatchError("sample_action noise", noise.shape, mu.shape)
    u = mu + sigma * noise
    a = dc.clip(dc.tanh(u), -TANH_LIMIT, TANH_LIMIT) * delta
    logpi = squashed_log_prob(u, mu, dc.log(sigma), delta).sum(axis=-1)
    return a, logpi


def deterministic_action(mu, delta: float) -> np.ndarray:
    """Evaluation-mode action delta * tanh(mu)."""
    mu = mu.data if isinstance(mu, Tensor) else np.asarray(mu, dtype=np.float64)
    return delta * np.tanh(mu)


# ---------------------------------------------------------------- network

def _scaled_normal(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    return rng.standard_normal(shape) / math.sqrt(max(fan_in, 1))


class PolicyNetwork:
    """Stacked gated bidirectional scan layers followed by the Gaussian head."""

    def __init__(self, state_dim: int, config: SacConfig, seed: int = 0):
        self.state_dim = state_dim
        self.hidden_dim = config.hidden_dim
        self.layers = config.layers
        self.window = config.window
        self.head_hidden = config.head_hidden
        self.delta = config.delta
        self.use_fusion = config.use_fusion
        self.params = ParameterSet()
        self._init_params(np.random.default_rng(seed), config.gate_init)
        logger.info(
            f"Initialized actor: {self.layers} layers, D_h={self.hidden_dim}, window={self.window}, "
            f"{self.params.num_values()} values"
        )

    def _init_params(self, rng: np.random.Generator, gate_init: float) -> None:
        d_h = self.hidden_dim
        for layer in range(self.layers):
            d_in = self.state_dim if layer == 0 else d_h
            for branch in ("fwd", "bwd"):
                a = rng.standard_normal((d_h, d_h))
                a *= A_NORM_INIT / max(np.linalg.norm(a), 1e-12)
                prefix = f"layer{layer}.{branch}"
                self.params.add(f"{prefix}.A", a)
                self.params.add(f"{prefix}.B", _scaled_normal(rng, (d_h, d_in), d_in))
                self.params.add(f"{prefix}.C_out", _scaled_normal(rng, (d_h, d_h), d_h))
                self.params.add(f"{prefix}.D_skip", _scaled_normal(rng, (d_h, d_in), d_in))
            for key in ("W_Q", "W_K", "W_V"):
                self.params.add(f"layer{layer}.fusion.{key}", _scaled_normal(rng, (d_h, d_h), d_h))
            self.params.add(f"layer{layer}.fusion.gamma", np.array(gate_init if self.use_fusion else 0.0))
        self.params.add("head.W1", _scaled_normal(rng, (d_h, self.head_hidden), d_h))
        self.params.add("head.b1", np.zeros(self.head_hidden))
        self.params.add("head.W2", _scaled_normal(rng, (self.head_hidden, 4), self.head_hidden) * 0.1)
        # log sigma starts one unit below zero
        self.params.add("head.b2", np.array([0.0, 0.0, -1.0, -1.0]))

    @property
    def frozen(self) -> List[str]:
        """Parameters the optimizer must leave alone."""
        if self.use_fusion:
            return []
        return [f"layer{layer}.fusion.gamma" for layer in range(self.layers)]

    def layer_params(self, layer: int) -> Dict[str, Tensor]:
        out: Dict[str, Tensor] = {}
        for branch in ("fwd", "bwd"):
            for key in BRANCH_KEYS:
                out[f"{branch}.{key}"] = self.params[f"layer{layer}.{branch}.{key}"]
        for key in FUSION_KEYS:
            out[key] = self.params[f"layer{layer}.fusion.{key}"]
        return out

    def _as_input(self, states: StateInput) -> Tensor:
        if not isinstance(states, (Tensor, np.ndarray)):
            raise TypeError("pass a state matrix; AgentState lists go through policy_forward")
        x = dc.as_tensor(states)
        if x.ndim < 2 or x.shape[-2] < 1 or x.shape[-1] != self.state_dim:
            raise ShapeMismatchError("policy input", x.shape, (self.state_dim,))
        if not np.all(np.isfinite(x.data)):
            raise ValueError("policy input contains non-finite entries")
        return x

    def encode(self, states: StateInput) -> Tensor:
        x = self._as_input(states)
        for layer in range(self.layers):
            x = layer_forward(x, self.layer_params(layer), self.window)
            if layer < self.layers - 1:
                x = dc.tanh(x)
        return x

    def head(self, z: Tensor) -> Tuple[Tensor, Tensor]:
        """Action head on encoded states -> (mu, clamped log sigma)."""
        p = self.params
        hidden = dc.tanh(z @ p["head.W1"] + p["head.b1"])
        out = hidden @ p["head.W2"] + p["head.b2"]
        mu = out[..., 0:2]
        log_sigma = dc.clip(out[..., 2:4], LOG_SIGMA_MIN, LOG_SIGMA_MAX)
        return mu, log_sigma

    def distribution(self, states: StateInput) -> Tuple[Tensor, Tensor]:
        """(mu, clamped log sigma), each (..., N, 2)."""
        return self.head(self.encode(states))

    def forward(self, states: StateInput) -> Tuple[Tensor, Tensor]:
        mu, log_sigma = self.distribution(states)
        return mu, dc.exp(log_sigma)

    def sample(self, states: StateInput, noise: np.ndarray) -> Tuple[Tensor, Tensor]:
        """Reparameterized actions and log densities with log sigma taken before exponentiation."""
        mu, log_sigma = self.distribution(states)
        u = mu + dc.exp(log_sigma) * noise
        a = dc.clip(dc.tanh(u), -TANH_LIMIT, TANH_LIMIT) * self.delta
        logpi = squashed_log_prob(u, mu, log_sigma, self.delta).sum(axis=-1)
        return a, logpi

    # -------- persistence --------
    def architecture(self) -> Dict[str, float]:
        return {
            "state_dim": self.state_dim,
            "hidden_dim": self.hidden_dim,
            "layers": self.layers,
            "window": self.window,
            "head_hidden": self.head_hidden,
            "use_fusion": float(self.use_fusion),
        }

    def load_state(self, state: Mapping[str, np.ndarray]) -> None:
        try:
            self.params.load_state(state, strict=True)
        except (KeyError, ShapeMismatchError) as e:
            logger.error(f"Actor checkpoint does not match the network: {e}")
            raise CheckpointError(f"actor parameters do not match: {e}") from e


def policy_forward(states: StateInput, network: PolicyNetwork,
                   width: Optional[float] = None, height: Optional[float] = None) -> Tuple[Tensor, Tensor]:
    """
    (mu, sigma) per agent.

    Args:
        states: N x state_dim matrix, or AgentState objects plus the image extent
        network: Actor
        width: Image width (AgentState input only)
        height: Image height (AgentState input only)

    Returns:
        (mu, sigma), each N x 2
    """
    if not isinstance(states, (np.ndarray, Tensor)):
        states = list(states)
        if not states:
            raise ValueError("policy needs at least one agent state")
        if width is None or height is None:
            raise ValueError("AgentState input needs the image width and height")
        states = np.stack([s.as_vector(width, height) for s in states])
    return network.forward(states)


class ActorPolicy:
    """Adapts a PolicyNetwork to the environment's act(EpisodeState) interface."""

    def __init__(self, network: PolicyNetwork, config: SacConfig,
                 stochastic: bool = False, rng: Optional[np.random.Generator] = None):
        self.network = network
        self.config = config
        self.stochastic = stochastic
        self.rng = rng or np.random.default_rng(config.seed)

    def states(self, ep: EpisodeState) -> np.ndarray:
        c = self.config
        return environment.state_matrix(ep, c.k_neighbors, c.embed_dim, c.patch_radius)

    def act_from_states(self, states: np.ndarray) -> np.ndarray:
        with dc.no_grad():
            if self.stochastic:
                noise = self.rng.standard_normal((states.shape[0], 2))
                a, _ = self.network.sample(states, noise)
                return a.data
            mu, _ = self.network.distribution(states)
            return deterministic_action(mu, self.network.delta)

    def act(self, ep: EpisodeState) -> np.ndarray:
        return self.act_from_states(self.states(ep))
