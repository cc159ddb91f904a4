# Copyright 2024
# Directory: ContourMARL/app/services/gradcheck.py

"""
Finite-difference verification of every differentiable block: the tape ops,
both scan directions, windowed fusion, the gated layer, the action head,
the squashed-Gaussian log density, the critic and both SAC losses.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core import diffcore as dc
from ..core.config import SacConfig
from ..core.diffcore import Tensor
from ..core.errors import GradCheckFailure
from .critic import CriticNetwork, TwinCritics
from .policy import PolicyNetwork, bchfm_fuse, layer_forward, squashed_log_prob, ss2d_scan
from .replay import TransitionBatch
from .sac import PreparedBatch, critic_loss, policy_loss

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-5
DEFAULT_THRESHOLD = 1e-5
DEFAULT_TRIALS = 20
DEFAULT_MAX_ENTRIES = 16

Instance = Tuple[Callable[[], Tensor], List[Tensor]]
BlockBuilder = Callable[[np.random.Generator], Instance]


@dataclass
class BlockResult:
    name: str
    max_rel_error: float
    trials: int
    threshold: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_rel_error)) and self.max_rel_error < self.threshold


# ---------------------------------------------------------------- helpers

def _param(rng: np.random.Generator, *shape: int, scale: float = 1.0) -> Tensor:
    return dc.parameter(rng.standard_normal(shape) * scale)


def _contract(out: Tensor, rng: np.random.Generator) -> Callable[[Tensor], Tensor]:
    """Fixed random weighting that turns any output into a scalar loss."""
    weights = rng.standard_normal(out.shape) / np.sqrt(max(out.size, 1))
    return lambda t: dc.sum_(t * weights)


def _scalar(build: Callable[[], Tensor], rng: np.random.Generator) -> Callable[[], Tensor]:
    project = _contract(build(), rng)
    return lambda: project(build())


def _contractive(rng: np.random.Generator, d: int) -> Tensor:
    a = rng.standard_normal((d, d))
    return dc.parameter(a * 0.9 / np.linalg.norm(a, 2))


def _away_from(rng: np.random.Generator, shape, bound: float) -> np.ndarray:
    """Values at least 0.1 away from +-bound (clip kinks)."""
    mag = np.where(rng.random(shape) < 0.5, rng.uniform(0.1, bound - 0.1, shape),
                   rng.uniform(bound + 0.1, 2 * bound, shape))
    return mag * rng.choice([-1.0, 1.0], size=shape)


def _unary(op: Callable[[Tensor], Tensor], low: float = -2.0, high: float = 2.0) -> BlockBuilder:
    def build(rng: np.random.Generator) -> Instance:
        x = dc.parameter(rng.uniform(low, high, (3, 4)))
        return _scalar(lambda: op(x), rng), [x]
    return build


def _binary(op: Callable[[Tensor, Tensor], Tensor], b_shape=(3, 4)) -> BlockBuilder:
    def build(rng: np.random.Generator) -> Instance:
        a, b = _param(rng, 3, 4), _param(rng, *b_shape)
        return _scalar(lambda: op(a, b), rng), [a, b]
    return build


def _minimum(rng: np.random.Generator) -> Instance:
    a = _param(rng, 3, 4)
    gap = rng.uniform(0.1, 1.0, (3, 4)) * rng.choice([-1.0, 1.0], size=(3, 4))
    b = dc.parameter(a.data + gap)
    return _scalar(lambda: dc.minimum(a, b), rng), [a, b]


def _clip(rng: np.random.Generator) -> Instance:
    x = dc.parameter(_away_from(rng, (3, 4), 1.0))
    return _scalar(lambda: dc.clip(x, -1.0, 1.0), rng), [x]


def _concat(rng: np.random.Generator) -> Instance:
    a, b = _param(rng, 3, 2), _param(rng, 3, 5)
    return _scalar(lambda: dc.concat([a, b], axis=-1), rng), [a, b]


def _take(rng: np.random.Generator) -> Instance:
    x = _param(rng, 5, 3)
    idx = rng.integers(0, 5, size=7)
    return _scalar(lambda: dc.take(x, idx, axis=0), rng), [x]


def _linear_scan(rng: np.random.Generator) -> Instance:
    u, A = _param(rng, 2, 6, 4), _contractive(rng, 4)
    return _scalar(lambda: dc.linear_scan(u, A), rng), [u, A]


OP_BLOCKS: Dict[str, BlockBuilder] = {
    "op.add": _binary(dc.add, (4,)),
    "op.sub": _binary(dc.sub),
    "op.mul": _binary(dc.mul, (1, 4)),
    "op.scale": _unary(lambda x: dc.scale(x, -1.7)),
    "op.square": _unary(dc.square),
    "op.tanh": _unary(dc.tanh),
    "op.exp": _unary(dc.exp),
    "op.log": _unary(dc.log, 0.5, 2.0),
    "op.softplus": _unary(dc.softplus),
    "op.clip": _clip,
    "op.minimum": _minimum,
    "op.matmul": _binary(dc.matmul, (4, 2)),
    "op.transpose": _unary(lambda x: dc.transpose(x)),
    "op.reshape": _unary(lambda x: dc.reshape(x, (2, 6))),
    "op.sum": _unary(lambda x: dc.sum_(x, axis=0)),
    "op.mean": _unary(lambda x: dc.mean(x, axis=-1, keepdims=True)),
    "op.softmax": _unary(lambda x: dc.softmax(x, axis=-1)),
    "op.concat": _concat,
    "op.slice": _unary(lambda x: dc.slice_(x, (slice(None), slice(1, 3)))),
    "op.take": _take,
    "op.flip": _unary(lambda x: dc.flip(x, axis=0)),
    "op.linear_scan": _linear_scan,
}


# ---------------------------------------------------------------- network blocks

def _branch(rng: np.random.Generator, d_in: int, d_h: int) -> Dict[str, Tensor]:
    return {
        "A": _contractive(rng, d_h),
        "B": _param(rng, d_h, d_in, scale=d_in ** -0.5),
        "C_out": _param(rng, d_h, d_h, scale=d_h ** -0.5),
        "D_skip": _param(rng, d_h, d_in, scale=d_in ** -0.5),
    }


def _ss2d(direction: str) -> BlockBuilder:
    def build(rng: np.random.Generator) -> Instance:
        x = _param(rng, 9, 5)
        p = _branch(rng, 5, 6)
        bias = _param(rng, 9, 6, scale=0.5)
        return _scalar(lambda: ss2d_scan(x, p, direction, bias=bias)[0], rng), [x, bias, *p.values()]
    return build


def _bchfm(rng: np.random.Generator) -> Instance:
    # 10 rows with window 4 exercises the padded tail window
    h_f, h_b = _param(rng, 10, 6), _param(rng, 10, 6)
    W = [_param(rng, 6, 6, scale=6 ** -0.5) for _ in range(3)]
    return _scalar(lambda: bchfm_fuse(h_f, h_b, *W, window=4), rng), [h_f, h_b, *W]


def _layer(rng: np.random.Generator) -> Instance:
    x = _param(rng, 8, 5)
    p: Dict[str, Tensor] = {}
    for branch in ("fwd", "bwd"):
        for key, t in _branch(rng, 5, 6).items():
            p[f"{branch}.{key}"] = t
    for key in ("W_Q", "W_K", "W_V"):
        p[key] = _param(rng, 6, 6, scale=6 ** -0.5)
    p["gamma"] = dc.parameter(np.array(rng.uniform(0.05, 0.5)))
    return _scalar(lambda: layer_forward(x, p, window=4), rng), [x, *p.values()]


def tiny_config(seed: int = 0) -> SacConfig:
    """Small network sizes used by the checks (N = 8 agents, D_h = 8)."""
    return SacConfig(hidden_dim=8, layers=2, window=4, head_hidden=8, critic_hidden=8,
                     delta=5.0, seed=seed)


TINY_STATE_DIM = 6
TINY_AGENTS = 8


def _network_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2 ** 31 - 1))


def _head(rng: np.random.Generator) -> Instance:
    net = PolicyNetwork(TINY_STATE_DIM, tiny_config(), seed=_network_seed(rng))
    z = _param(rng, TINY_AGENTS, net.hidden_dim)
    params = [net.params[name] for name in net.params.names() if name.startswith("head.")]
    return _scalar(lambda: dc.concat(list(net.head(z)), axis=-1), rng), [z, *params]


def _policy(rng: np.random.Generator) -> Instance:
    net = PolicyNetwork(TINY_STATE_DIM, tiny_config(), seed=_network_seed(rng))
    states = rng.standard_normal((TINY_AGENTS, TINY_STATE_DIM))
    return _scalar(lambda: dc.concat(list(net.distribution(states)), axis=-1), rng), net.params.tensors()


def _logprob(rng: np.random.Generator) -> Instance:
    mu = _param(rng, TINY_AGENTS, 2)
    log_sigma = dc.parameter(rng.uniform(-1.5, 0.5, (TINY_AGENTS, 2)))
    noise = rng.standard_normal((TINY_AGENTS, 2))
    delta = float(rng.uniform(1.0, 25.0))

    def build() -> Tensor:
        u = mu + dc.exp(log_sigma) * noise
        return squashed_log_prob(u, mu, log_sigma, delta)

    return _scalar(build, rng), [mu, log_sigma]


def _critic(rng: np.random.Generator) -> Instance:
    net = CriticNetwork(TINY_STATE_DIM, 8, delta=5.0, seed=_network_seed(rng))
    states = _param(rng, TINY_AGENTS, TINY_STATE_DIM)
    actions = dc.parameter(rng.uniform(-5.0, 5.0, (TINY_AGENTS, 2)))
    return _scalar(lambda: net.forward(states, actions), rng), [states, actions, *net.params.tensors()]


def _prepared_batch(rng: np.random.Generator, frames: int = 3, batch: int = 10) -> PreparedBatch:
    states = rng.standard_normal((frames, TINY_AGENTS, TINY_STATE_DIM))
    return PreparedBatch(
        batch=TransitionBatch(
            frames=[],
            s_frame=rng.integers(0, frames, batch),
            next_frame=rng.integers(0, frames, batch),
            agent=rng.integers(0, TINY_AGENTS, batch),
            actions=rng.uniform(-5.0, 5.0, (batch, 2)),
            rewards=rng.standard_normal(batch),
            terminal=rng.random(batch) < 0.3,
        ),
        states=states,
    )


def _critic_loss(rng: np.random.Generator) -> Instance:
    critics = TwinCritics(TINY_STATE_DIM, 8, delta=5.0, seed=_network_seed(rng))
    prepared = _prepared_batch(rng)
    y = rng.standard_normal(len(prepared.batch))
    params = critics.critic1.params.tensors() + critics.critic2.params.tensors()
    return (lambda: dc.add(*critic_loss(prepared, critics, y))), params


def _policy_loss(rng: np.random.Generator) -> Instance:
    config = tiny_config()
    actor = PolicyNetwork(TINY_STATE_DIM, config, seed=_network_seed(rng))
    critics = TwinCritics(TINY_STATE_DIM, 8, delta=config.delta, seed=_network_seed(rng))
    prepared = _prepared_batch(rng)
    noise = rng.standard_normal(prepared.states.shape[:2] + (2,))
    alpha = float(rng.uniform(0.05, 0.2))
    return (lambda: policy_loss(prepared, actor, critics, alpha, noise)), actor.params.tensors()


NETWORK_BLOCKS: Dict[str, BlockBuilder] = {
    "ss2d.fwd": _ss2d("fwd"),
    "ss2d.bwd": _ss2d("bwd"),
    "bchfm": _bchfm,
    "layer": _layer,
    "head": _head,
    "policy": _policy,
    "logprob": _logprob,
    "critic": _critic,
    "critic_loss": _critic_loss,
    "policy_loss": _policy_loss,
}

BLOCKS: Dict[str, BlockBuilder] = {**OP_BLOCKS, **NETWORK_BLOCKS}


# ---------------------------------------------------------------- runner

def run_block(
    name: str,
    eps: float = DEFAULT_EPS,
    trials: int = DEFAULT_TRIALS,
    seed: int = 0,
    threshold: float = DEFAULT_THRESHOLD,
    max_entries: Optional[int] = None,
) -> BlockResult:
    """
    Check one block over `trials` random instances.

    Args:
        name: Key of BLOCKS
        eps: Central-difference step
        trials: Random instances
        seed: Base seed; instance i draws from SeedSequence([seed, i])
        threshold: Pass bound on the max relative error
        max_entries: Optional per-tensor cap on checked entries

    Returns:
        BlockResult with the worst error over all instances
    """
    if name not in BLOCKS:
        raise KeyError(f"unknown gradient-check block {name!r}; choose from {', '.join(BLOCKS)}")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    worst = 0.0
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        f, params = BLOCKS[name](rng)
        err = dc.grad_check(f, params, eps=eps, max_entries=max_entries, rng=rng)
        worst = max(worst, err) if np.isfinite(err) else float("inf")
    logger.debug(f"{name}: max relative error {worst:.3e} over {trials} instances")
    return BlockResult(name=name, max_rel_error=worst, trials=trials, threshold=threshold)


def run_suite(
    eps: float = DEFAULT_EPS,
    trials: int = DEFAULT_TRIALS,
    seed: int = 0,
    threshold: float = DEFAULT_THRESHOLD,
    blocks: Optional[Sequence[str]] = None,
    max_entries: Optional[int] = None,
) -> List[BlockResult]:
    names = list(blocks) if blocks else list(BLOCKS)
    results = []
    for name in names:
        result = run_block(name, eps=eps, trials=trials, seed=seed, threshold=threshold, max_entries=max_entries)
        level = logging.INFO if result.passed else logging.WARNING
        logger.log(level, f"gradcheck {name}: {result.max_rel_error:.3e} ({'ok' if result.passed else 'FAIL'})")
        results.append(result)
    return results


def check_suite(**kwargs) -> List[BlockResult]:
    """run_suite, raising GradCheckFailure when any block misses the threshold."""
    results = run_suite(**kwargs)
    failing = [r.name for r in results if not r.passed]
    if failing:
        logger.error(f"Gradient check failed for {len(failing)} block(s): {', '.join(failing)}")
        raise GradCheckFailure(failing)
    return results
