# Copyright 2024
# Directory: ContourMARL/app/services/sac.py

"""
Contour-specific Soft Actor-Critic: consistency-driven entropy coefficient,
clipped double-Q targets, critic and actor losses, the training loop with
checkpoints and CSV log, and checkpoint evaluation.
"""

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ..core import diffcore as dc
from ..core.checkpoint import load_tensors, save_tensors, strip_prefix, with_prefix
from ..core.config import SacConfig
from ..core.diffcore import Tensor
from ..core.errors import CheckpointError, NonFiniteLossError, NonFiniteParameterError
from ..core.optim import AdamW, cosine_lr
from ..models.entities import EpisodeState, EramState, MetricReport, ObjectMetrics
from . import environment, geometry, metrics
from .critic import CRITIC_PREFIXES, TwinCritics
from .policy import ActorPolicy, PolicyNetwork
from .replay import Frame, ReplayBuffer, TransitionBatch
from .synthdata import CorpusSample
from .trace import write_trace

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

LOG_COLUMNS = ["epoch", "miou", "mdice", "mboundf", "alpha_mean", "critic1_loss",
               "critic2_loss", "policy_loss", "mean_return", "lr", "episodes"]
ARCH_KEYS = ("hidden_dim", "layers", "window", "head_hidden", "critic_hidden",
             "use_fusion", "delta", "k_neighbors", "embed_dim", "patch_radius")
CHECKPOINT_DIR = "checkpoints"
LATEST_NAME = "latest.ckpt"
OPTIMIZER_NAME = "optimizer.ckpt"
LOG_NAME = "train_log.csv"
NAN_DUMP_NAME = "nan_dump.json"


# ---------------------------------------------------------------- entropy coefficient

def eram_alpha(alpha0: float, beta: float, c_index: float) -> float:
    """alpha = alpha0 / (1 + beta * C)."""
    if alpha0 <= 0 or beta < 0 or c_index < 0:
        raise ValueError(f"eram_alpha needs alpha0 > 0, beta >= 0, C >= 0; got {alpha0}, {beta}, {c_index}")
    return alpha0 / (1.0 + beta * c_index)


def eram_state(config: SacConfig, contour) -> EramState:
    """Entropy coefficient for the whole contour at the current step."""
    if not config.use_eram:
        return EramState(alpha=config.alpha0, beta=config.beta)
    c_index = geometry.consistency_index(contour, config.consistency_weights)
    return EramState(alpha=eram_alpha(config.alpha0, config.beta, c_index), beta=config.beta)


# ---------------------------------------------------------------- batch helpers

def frame_states(frames: Sequence[Frame], config: SacConfig) -> np.ndarray:
    """State matrices of every frame -> F x N x D."""
    return np.stack([
        environment.points_state_matrix(f.points, f.grid, config.k_neighbors, config.embed_dim, config.patch_radius)
        for f in frames
    ])


def _gather_rows(t: Tensor, frame_idx: np.ndarray, agent: np.ndarray) -> Tensor:
    """Rows (frame_idx[b], agent[b]) of an F x N x ... tensor -> B x ..."""
    f, n = t.shape[0], t.shape[1]
    flat = t.reshape((f * n,) + t.shape[2:])
    return dc.take(flat, frame_idx * n + agent, axis=0)


@dataclass
class PreparedBatch:
    """A sampled batch with its frames already turned into state matrices."""
    batch: TransitionBatch
    states: np.ndarray   # F x N x D

    @property
    def s_rows(self) -> np.ndarray:
        return self.states[self.batch.s_frame, self.batch.agent]

    @property
    def next_rows(self) -> np.ndarray:
        return self.states[self.batch.next_frame, self.batch.agent]


def prepare_batch(batch: TransitionBatch, config: SacConfig) -> PreparedBatch:
    return PreparedBatch(batch=batch, states=frame_states(batch.frames, config))


# ---------------------------------------------------------------- targets and losses

def compute_target(
    prepared: PreparedBatch,
    actor: PolicyNetwork,
    critics: TwinCritics,
    alpha: float,
    gamma_discount: float,
    noise: np.ndarray,
) -> np.ndarray:
    """
    y = r + gamma * (min_j Qtarget_j(s', a') - alpha * log pi(a'|s')), y = r on terminal steps.

    Args:
        prepared: Batch with frame states
        actor: Current policy
        critics: Twin critics (targets are used)
        alpha: Entropy coefficient
        gamma_discount: Discount factor
        noise: Standard-normal noise of shape F x N x 2

    Returns:
        Targets (B,)
    """
    batch = prepared.batch
    with dc.no_grad():
        a_all, logpi_all = actor.sample(prepared.states, noise)
        a_next = _gather_rows(a_all, batch.next_frame, batch.agent)
        logpi_next = _gather_rows(logpi_all, batch.next_frame, batch.agent)
        next_rows = prepared.next_rows
        q1 = critics.target1.forward(next_rows, a_next).data
        q2 = critics.target2.forward(next_rows, a_next).data
    soft_value = np.minimum(q1, q2) - alpha * logpi_next.data
    return batch.rewards + gamma_discount * np.where(batch.terminal, 0.0, soft_value)


def critic_loss(prepared: PreparedBatch, critics: TwinCritics, y: np.ndarray) -> Tuple[Tensor, Tensor]:
    """L_j = mean over the batch of (y - Q_j(s, a))^2."""
    rows, actions = prepared.s_rows, prepared.batch.actions
    losses = []
    for critic in critics.online:
        q = critic.forward(rows, actions)
        losses.append(dc.mean(dc.square(q - y)))
    return losses[0], losses[1]


def policy_loss(
    prepared: PreparedBatch,
    actor: PolicyNetwork,
    critics: TwinCritics,
    alpha: float,
    noise: np.ndarray,
) -> Tensor:
    """L_pi = mean(alpha * log pi(a|s) - min_j Q_j(s, a)) with reparameterized a."""
    batch = prepared.batch
    a_all, logpi_all = actor.sample(prepared.states, noise)
    a = _gather_rows(a_all, batch.s_frame, batch.agent)
    logpi = _gather_rows(logpi_all, batch.s_frame, batch.agent)
    rows = prepared.s_rows
    q = dc.minimum(critics.critic1.forward(rows, a), critics.critic2.forward(rows, a))
    return dc.mean(logpi * alpha - q)


# ---------------------------------------------------------------- checkpoints

def architecture_meta(config: SacConfig, state_dim: int) -> Dict[str, np.ndarray]:
    meta = {"state_dim": float(state_dim)}
    for key in ARCH_KEYS:
        meta[key] = float(getattr(config, key))
    return {f"meta.{k}": np.array(v) for k, v in meta.items()}


def save_checkpoint(path: PathLike, actor: PolicyNetwork, critics: TwinCritics, config: SacConfig) -> Path:
    tensors: Dict[str, np.ndarray] = {}
    tensors.update(with_prefix("actor.", actor.params.state()))
    tensors.update(critics.state())
    tensors.update(architecture_meta(config, actor.state_dim))
    return save_tensors(path, tensors)


def config_from_meta(tensors: Mapping[str, np.ndarray], config: SacConfig) -> Tuple[SacConfig, int]:
    """Overlay the checkpoint's architecture onto config -> (config, state_dim)."""
    meta = strip_prefix("meta.", tensors)
    if "state_dim" not in meta:
        raise CheckpointError("checkpoint carries no architecture metadata")
    updates = {}
    for key in ARCH_KEYS:
        if key not in meta:
            raise CheckpointError(f"checkpoint metadata lacks {key}")
        value = float(meta[key])
        kind = type(getattr(config, key))
        updates[key] = bool(value) if kind is bool else (int(value) if kind is int else value)
    return config.model_copy(update=updates), int(meta["state_dim"])


def load_networks(path: PathLike, config: SacConfig) -> Tuple[PolicyNetwork, TwinCritics, SacConfig]:
    """Rebuild actor and critics from a checkpoint (architecture taken from its metadata)."""
    tensors = load_tensors(path)
    config, state_dim = config_from_meta(tensors, config)
    actor = PolicyNetwork(state_dim, config, seed=config.seed)
    actor.load_state(strip_prefix("actor.", tensors))
    critics = TwinCritics(state_dim, config.critic_hidden, config.delta, seed=config.seed)
    critics.load_state(tensors)
    logger.info(f"Loaded checkpoint {path} (state_dim={state_dim}, layers={config.layers})")
    return actor, critics, config


def grid_state_dim(samples: Sequence[CorpusSample], config: SacConfig) -> int:
    channels = {s.grid.channels for s in samples}
    if len(channels) != 1:
        raise CheckpointError(f"corpus mixes feature channel counts {sorted(channels)}")
    return environment.state_dim(channels.pop(), config.k_neighbors, config.embed_dim)


# ---------------------------------------------------------------- rollouts

@dataclass
class StepRecord:
    points: np.ndarray
    next_points: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    done: bool
    alpha: float


@dataclass
class EpisodeResult:
    report: Optional[MetricReport] = None
    episode_return: float = 0.0
    alphas: List[float] = field(default_factory=list)
    steps: List[StepRecord] = field(default_factory=list)


def start_episode(sample: CorpusSample, config: SacConfig, box=None,
                  n_points: Optional[int] = None, horizon: Optional[int] = None) -> EpisodeState:
    return environment.new_episode(
        sample.mask, sample.grid, box or sample.entry.bbox,
        n_points=n_points or config.n_points,
        horizon=horizon or config.horizon,
        delta=config.delta,
        weights=config.reward_weights,
        k_neighbors=config.k_neighbors,
    )


def rollout(sample: CorpusSample, actor: PolicyNetwork, config: SacConfig,
            rng: np.random.Generator, result: EpisodeResult) -> Iterator[StepRecord]:
    """
    Stochastic episode; yields after every environment step so the caller can update in between.

    Args:
        sample: Corpus entry
        actor: Policy used for every step (read-only here)
        config: Run configuration
        rng: Action-noise stream of this episode
        result: Filled with the final report, return and alphas

    Yields:
        StepRecord per step
    """
    ep = start_episode(sample, config)
    policy = ActorPolicy(actor, config, stochastic=True, rng=rng)
    returns = np.zeros(ep.contour.n)
    while not ep.done:
        alpha = eram_state(config, ep.contour).alpha
        actions = environment.clamp_actions(policy.act(ep), config.delta)
        outcome = environment.step_detailed(ep, actions)
        returns += outcome.rewards
        record = StepRecord(points=ep.contour.points, next_points=outcome.state.contour.points,
                            actions=actions, rewards=outcome.rewards, done=outcome.done, alpha=alpha)
        result.alphas.append(alpha)
        result.report = outcome.report
        ep = outcome.state
        yield record
    result.episode_return = float(returns.mean())


# ---------------------------------------------------------------- trainer

@dataclass
class EpochStats:
    reports: List[MetricReport] = field(default_factory=list)
    alphas: List[float] = field(default_factory=list)
    returns: List[float] = field(default_factory=list)
    critic1: List[float] = field(default_factory=list)
    critic2: List[float] = field(default_factory=list)
    policy: List[float] = field(default_factory=list)


def _mean(values: Sequence[float]) -> float:
    return float(np.mean(values)) if values else float("nan")


class SacTrainer:
    """Collects episodes, fills the replay buffer and runs the SAC updates."""

    def __init__(self, config: SacConfig, samples: Sequence[CorpusSample], out_dir: PathLike):
        if not samples:
            raise ValueError("training needs a non-empty corpus")
        self.config = config
        self.samples = list(samples)
        self.out_dir = Path(out_dir)
        state_dim = grid_state_dim(self.samples, config)
        self.actor = PolicyNetwork(state_dim, config, seed=config.seed)
        self.critics = TwinCritics(state_dim, config.critic_hidden, config.delta, seed=config.seed)
        self.actor_opt = AdamW(self.actor.params, lr=config.lr, weight_decay=config.weight_decay,
                               frozen=self.actor.frozen)
        self.critic_opts = [AdamW(c.params, lr=config.lr, weight_decay=config.weight_decay)
                            for c in self.critics.online]
        self.buffer = ReplayBuffer(config.buffer_capacity)
        self.update_count = 0
        self.epoch = 0
        self._update_rng = np.random.default_rng(config.seed)

    # -------- paths --------
    @property
    def checkpoint_dir(self) -> Path:
        return self.out_dir / CHECKPOINT_DIR

    @property
    def log_path(self) -> Path:
        return self.out_dir / LOG_NAME

    # -------- updates --------
    def _set_lr(self, lr: float) -> None:
        for opt in [self.actor_opt, *self.critic_opts]:
            opt.lr = lr

    def _check_loss(self, name: str, loss: Tensor, alpha: float) -> float:
        value = loss.item()
        if not np.isfinite(value):
            self._dump_nan(name, value, alpha)
            logger.error(f"{name} became non-finite ({value}) at update {self.update_count}")
            raise NonFiniteLossError(name, self.update_count, value)
        return value

    def _dump_nan(self, name: str, value: float, alpha: float, params: Sequence[str] = ()) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        dump = {
            "loss": name, "value": repr(value), "update": self.update_count, "epoch": self.epoch,
            "alpha": alpha, "buffer_size": len(self.buffer), "non_finite_params": list(params),
        }
        (self.out_dir / NAN_DUMP_NAME).write_text(json.dumps(dump, indent=2), encoding="utf-8")

    def update(self, alpha: float, stats: EpochStats) -> None:
        """One gradient round: both critics, then the actor, then the targets."""
        c = self.config
        batch = self.buffer.sample(c.batch_size, self._update_rng)
        if batch is None:
            return
        prepared = prepare_batch(batch, c)
        noise_shape = prepared.states.shape[:2] + (2,)
        y = compute_target(prepared, self.actor, self.critics, alpha, c.gamma_discount,
                           self._update_rng.standard_normal(noise_shape))

        l1, l2 = critic_loss(prepared, self.critics, y)
        for name, loss, critic, opt, bucket in (
            ("critic1_loss", l1, self.critics.critic1, self.critic_opts[0], stats.critic1),
            ("critic2_loss", l2, self.critics.critic2, self.critic_opts[1], stats.critic2),
        ):
            bucket.append(self._check_loss(name, loss, alpha))
            dc.backward(loss, critic.params)
            opt.step()

        lp = policy_loss(prepared, self.actor, self.critics, alpha,
                         self._update_rng.standard_normal(noise_shape))
        stats.policy.append(self._check_loss("policy_loss", lp, alpha))
        dc.backward(lp, self.actor.params)
        self.actor_opt.step()
        self.critics.soft_update(c.tau)

        bad = self.actor.params.non_finite() + [
            f"{prefix}{name}" for prefix, net in zip(CRITIC_PREFIXES, (*self.critics.online, *self.critics.targets))
            for name in net.params.non_finite()
        ]
        if bad:
            self._dump_nan("parameters", float("nan"), alpha, bad)
            logger.error(f"Non-finite parameters after update {self.update_count}: {bad}")
            raise NonFiniteParameterError(bad, self.update_count)
        self.update_count += 1
        logger.debug(f"update {self.update_count}: L1={stats.critic1[-1]:.5f} L2={stats.critic2[-1]:.5f} "
                     f"Lpi={stats.policy[-1]:.5f} alpha={alpha:.4f}")

    def _store(self, record: StepRecord, grid, frame: Optional[int]) -> int:
        if frame is None:
            frame = self.buffer.add_frame(record.points, grid)
        next_frame = self.buffer.add_frame(record.next_points, grid)
        self.buffer.add_step(frame, record.actions, record.rewards, next_frame, record.done)
        return next_frame

    def _after_step(self, alpha: float, stats: EpochStats) -> None:
        if len(self.buffer) >= self.config.warmup_transitions:
            for _ in range(self.config.update_rounds):
                self.update(alpha, stats)

    # -------- epochs --------
    def _episode_order(self, epoch: int) -> Tuple[List[CorpusSample], List[np.random.Generator]]:
        seq = np.random.SeedSequence([self.config.seed, epoch])
        order_seed, update_seed, *episode_seeds = seq.spawn(len(self.samples) + 2)
        order = np.random.default_rng(order_seed).permutation(len(self.samples))
        limit = self.config.episodes_per_epoch or len(self.samples)
        picks = [self.samples[i] for i in order[:limit]]
        self._update_rng = np.random.default_rng(update_seed)
        return picks, [np.random.default_rng(s) for s in episode_seeds[:len(picks)]]

    def _collect(self, sample: CorpusSample, rng: np.random.Generator) -> EpisodeResult:
        result = EpisodeResult()
        result.steps = list(rollout(sample, self.actor, self.config, rng, result))
        return result

    def run_epoch(self, epoch: int) -> EpochStats:
        c = self.config
        self.epoch = epoch
        stats = EpochStats()
        picks, rngs = self._episode_order(epoch)

        if c.workers <= 1:
            for sample, rng in zip(picks, rngs):
                result = EpisodeResult()
                frame = None
                for record in rollout(sample, self.actor, c, rng, result):
                    frame = self._store(record, sample.grid, frame)
                    self._after_step(record.alpha, stats)
                self._finish_episode(result, stats)
        else:
            # parallel rollouts with a frozen actor, then a barrier, then updates in episode order
            for start in range(0, len(picks), c.workers):
                chunk = list(zip(picks[start:start + c.workers], rngs[start:start + c.workers]))
                with ThreadPoolExecutor(max_workers=c.workers) as pool:
                    results = list(pool.map(lambda job: self._collect(*job), chunk))
                for (sample, _), result in zip(chunk, results):
                    frame = None
                    for record in result.steps:
                        frame = self._store(record, sample.grid, frame)
                        self._after_step(record.alpha, stats)
                    self._finish_episode(result, stats)
        return stats

    @staticmethod
    def _finish_episode(result: EpisodeResult, stats: EpochStats) -> None:
        stats.reports.append(result.report)
        stats.alphas.extend(result.alphas)
        stats.returns.append(result.episode_return)

    # -------- persistence --------
    def save(self, epoch: int) -> Path:
        path = save_checkpoint(self.checkpoint_dir / f"epoch_{epoch:04d}.ckpt", self.actor, self.critics, self.config)
        save_checkpoint(self.checkpoint_dir / LATEST_NAME, self.actor, self.critics, self.config)
        opt_state: Dict[str, np.ndarray] = {"trainer.epoch": np.array(float(epoch)),
                                            "trainer.updates": np.array(float(self.update_count))}
        opt_state.update(with_prefix("opt.actor.", self.actor_opt.state()))
        for i, opt in enumerate(self.critic_opts, start=1):
            opt_state.update(with_prefix(f"opt.critic{i}.", opt.state()))
        save_tensors(self.checkpoint_dir / OPTIMIZER_NAME, opt_state)
        logger.info(f"Checkpoint written: {path}")
        return path

    def resume(self) -> int:
        """Restore networks and optimizer moments; returns the last completed epoch."""
        latest = self.checkpoint_dir / LATEST_NAME
        tensors = load_tensors(latest)
        restored, state_dim = config_from_meta(tensors, self.config)
        if state_dim != self.actor.state_dim or any(getattr(restored, k) != getattr(self.config, k) for k in ARCH_KEYS):
            raise CheckpointError(f"{latest} was trained with a different architecture")
        self.actor.load_state(strip_prefix("actor.", tensors))
        self.critics.load_state(tensors)
        opt_state = load_tensors(self.checkpoint_dir / OPTIMIZER_NAME)
        self.actor_opt.load_state(strip_prefix("opt.actor.", opt_state))
        for i, opt in enumerate(self.critic_opts, start=1):
            opt.load_state(strip_prefix(f"opt.critic{i}.", opt_state))
        self.update_count = int(opt_state.get("trainer.updates", np.array(0.0)))
        epoch = int(opt_state["trainer.epoch"])
        self._truncate_log(epoch)
        logger.info(f"Resumed from {latest} after epoch {epoch}")
        return epoch

    def _truncate_log(self, epoch: int) -> None:
        if not self.log_path.exists():
            self._write_log_header()
            return
        with open(self.log_path, newline="", encoding="utf-8") as handle:
            rows = list(csv.reader(handle))
        kept = [rows[0]] + [r for r in rows[1:] if r and int(r[0]) <= epoch] if rows else [LOG_COLUMNS]
        with open(self.log_path, "w", newline="", encoding="utf-8") as handle:
            csv.writer(handle, lineterminator="\n").writerows(kept)

    def _write_log_header(self) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        with open(self.log_path, "w", newline="", encoding="utf-8") as handle:
            csv.writer(handle, lineterminator="\n").writerow(LOG_COLUMNS)

    def _append_log(self, epoch: int, stats: EpochStats, lr: float) -> None:
        agg = metrics.aggregate([ObjectMetrics(iou=r.miou, dice=r.mdice, boundf=r.mboundf)
                                 for r in stats.reports]) if stats.reports else None
        row = [epoch,
               repr(agg.miou if agg else float("nan")),
               repr(agg.mdice if agg else float("nan")),
               repr(agg.mboundf if agg else float("nan")),
               repr(_mean(stats.alphas)), repr(_mean(stats.critic1)), repr(_mean(stats.critic2)),
               repr(_mean(stats.policy)), repr(_mean(stats.returns)), repr(float(lr)), len(stats.reports)]
        with open(self.log_path, "a", newline="", encoding="utf-8") as handle:
            csv.writer(handle, lineterminator="\n").writerow(row)

    def train(self, resume: bool = False) -> Path:
        """
        Run the configured epochs, checkpointing and logging after each one.

        Args:
            resume: Continue from checkpoints/latest.ckpt and optimizer.ckpt

        Returns:
            Path of the latest checkpoint
        """
        c = self.config
        if resume:
            start = self.resume()
        else:
            self._write_log_header()
            self.save(0)
            start = 0
        for epoch in range(start, c.epochs):
            lr = cosine_lr(epoch, c.epochs, c.lr, c.effective_lr_min)
            self._set_lr(lr)
            stats = self.run_epoch(epoch)
            self._append_log(epoch + 1, stats, lr)
            self.save(epoch + 1)
            logger.info(
                f"Epoch {epoch + 1}/{c.epochs}: {len(stats.reports)} episodes, "
                f"return={_mean(stats.returns):.4f}, alpha={_mean(stats.alphas):.4f}, "
                f"updates={self.update_count}, buffer={len(self.buffer)}"
            )
        return self.checkpoint_dir / LATEST_NAME


def train(config: SacConfig, samples: Sequence[CorpusSample], out_dir: PathLike, resume: bool = False) -> Path:
    return SacTrainer(config, samples, out_dir).train(resume=resume)


# ---------------------------------------------------------------- evaluation

@dataclass
class Perturbation:
    shift_frac: float = 0.0
    scale_frac: float = 0.0


def _entry_perturb_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index, 7]).generate_state(1)[0])


def evaluate_actor(
    actor: PolicyNetwork,
    config: SacConfig,
    samples: Sequence[CorpusSample],
    horizon: Optional[int] = None,
    n_points: Optional[int] = None,
    perturb: Optional[Perturbation] = None,
    trace_dir: Optional[PathLike] = None,
    policy=None,
) -> MetricReport:
    """
    Deterministic rollouts over a corpus; per-object scores are the final metrics of each entry.

    Args:
        actor: Policy network
        config: Run configuration (delta, neighbors, embedding)
        samples: Corpus entries to evaluate
        horizon: Evolution steps (default config.horizon)
        n_points: Contour points (default config.n_points)
        perturb: Optional bounding-box jitter applied before octagon construction
        trace_dir: When set, one SVG and CSV trace per entry
        policy: Optional replacement action source (e.g. ZeroPolicy for the baseline)

    Returns:
        Aggregate MetricReport
    """
    if not samples:
        raise ValueError("evaluation needs at least one corpus entry")
    policy = policy or ActorPolicy(actor, config, stochastic=False)
    per_object: List[ObjectMetrics] = []
    for index, sample in enumerate(samples):
        box = sample.entry.bbox
        if perturb is not None and (perturb.shift_frac or perturb.scale_frac):
            box = geometry.perturb_bbox(box, perturb.shift_frac, perturb.scale_frac,
                                        _entry_perturb_seed(config.seed, index))
        ep = start_episode(sample, config, box=box, n_points=n_points, horizon=horizon)
        initial = ep.contour
        _, report, frames = environment.run_episode(ep, policy, record=trace_dir is not None)
        per_object.extend(report.per_object)
        if trace_dir is not None:
            write_trace(Path(trace_dir), sample.entry.id, frames, initial, sample.mask)
    result = metrics.aggregate(per_object)
    logger.info(f"Evaluated {len(samples)} entries: mIoU={result.miou:.4f} mDice={result.mdice:.4f} "
                f"mBoundF={result.mboundf:.4f}")
    return result


def evaluate(
    checkpoint: PathLike,
    samples: Sequence[CorpusSample],
    config: SacConfig,
    horizon: Optional[int] = None,
    n_points: Optional[int] = None,
    perturb: Optional[Perturbation] = None,
    trace_dir: Optional[PathLike] = None,
) -> MetricReport:
    """Load a checkpoint and evaluate it with deterministic actions."""
    actor, _, config = load_networks(checkpoint, config)
    expected = grid_state_dim(samples, config)
    if expected != actor.state_dim:
        raise CheckpointError(f"checkpoint expects state_dim {actor.state_dim}, corpus gives {expected}")
    return evaluate_actor(actor, config, samples, horizon=horizon, n_points=n_points,
                          perturb=perturb, trace_dir=trace_dir)


def baseline_report(samples: Sequence[CorpusSample], config: SacConfig,
                    perturb: Optional[Perturbation] = None) -> MetricReport:
    """Metrics of the untouched octagon initialization."""
    return evaluate_actor(None, config, samples, horizon=1, perturb=perturb,
                          policy=environment.ZeroPolicy())
