# Copyright 2024
# Directory: ContourMARL/app/services/environment.py

"""
Multi-agent contour evolution environment.
Builds per-agent states, applies bounded displacements and scores each step.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Protocol, Tuple

import numpy as np
from scipy.spatial import cKDTree

from ..core.errors import ActionError
from ..models.entities import (
    AgentState,
    BinaryMask,
    BoundingBox,
    Contour,
    EpisodeState,
    FeatureGrid,
    MetricReport,
    RewardWeights,
    TraceFrame,
)
from . import geometry, metrics

logger = logging.getLogger(__name__)

LATTICE_SIZE = 5
EMBED_BASE = 10000.0
SETTLE_TOLERANCE = 1e-9


# ---------------------------------------------------------------- state features

def _sinusoid(values: np.ndarray, width: int) -> np.ndarray:
    """Interleaved sin/cos of `values` (shape S) on a geometric ladder -> S x width."""
    freqs = EMBED_BASE ** (-np.arange(0, width, 2, dtype=np.float64) / width)
    angles = values[..., None] * freqs
    out = np.empty(values.shape + (width,), dtype=np.float64)
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out


def sinusoidal_embed(coords, dim: int) -> np.ndarray:
    """
    Sinusoidal position code of a 2-D offset.

    Args:
        coords: (x, y) in pixels, or an array of shape (..., 2)
        dim: Output length, divisible by 4 (dim/2 entries per axis)

    Returns:
        Vector(s) of length dim: the x half followed by the y half
    """
    if dim <= 0 or dim % 4:
        raise ValueError(f"embedding dim must be a positive multiple of 4, got {dim}")
    coords = np.asarray(coords, dtype=np.float64)
    half = dim // 2
    return np.concatenate([_sinusoid(coords[..., 0], half), _sinusoid(coords[..., 1], half)], axis=-1)


def sample_bilinear(values: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear samples of a C x H x W grid at pixel coordinates, clamped to the border -> C x M."""
    _, height, width = values.shape
    gx = np.clip(np.asarray(xs, dtype=np.float64) - 0.5, 0.0, width - 1.0)
    gy = np.clip(np.asarray(ys, dtype=np.float64) - 0.5, 0.0, height - 1.0)
    x0 = np.floor(gx).astype(int)
    y0 = np.floor(gy).astype(int)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    fx = gx - x0
    fy = gy - y0
    top = values[:, y0, x0] * (1.0 - fx) + values[:, y0, x1] * fx
    bottom = values[:, y1, x0] * (1.0 - fx) + values[:, y1, x1] * fx
    return top * (1.0 - fy) + bottom * fy


def _lattice(r: float) -> Tuple[np.ndarray, np.ndarray]:
    ticks = np.linspace(-r, r, LATTICE_SIZE)
    oy, ox = np.meshgrid(ticks, ticks, indexing="ij")
    return ox.reshape(-1), oy.reshape(-1)


def local_feature_matrix(grid: FeatureGrid, points: np.ndarray, r: float) -> np.ndarray:
    """Local features for every point -> N x (25 * C), channel-major."""
    if r <= 0:
        raise ValueError(f"patch radius must be positive, got {r}")
    ox, oy = _lattice(r)
    xs = (points[:, 0:1] + ox).reshape(-1)
    ys = (points[:, 1:2] + oy).reshape(-1)
    samples = sample_bilinear(grid.values, xs, ys)  # C x (N * 25)
    n = points.shape[0]
    return samples.reshape(grid.channels, n, -1).transpose(1, 0, 2).reshape(n, -1)


def extract_local_features(grid: FeatureGrid, x: float, y: float, r: float) -> np.ndarray:
    """
    Sample all channels on a 5 x 5 lattice spanning [x-r, x+r] x [y-r, y+r].

    Args:
        grid: Feature channels
        x: Center x in pixels
        y: Center y in pixels
        r: Half-width of the lattice in pixels

    Returns:
        Vector of length 25 * C
    """
    return local_feature_matrix(grid, np.array([[x, y]], dtype=np.float64), r)[0]


def neighbor_indices(n: int, k: int) -> np.ndarray:
    """Cyclic neighbor table: k/2 predecessors then k/2 successors -> N x k."""
    if k <= 0 or k % 2:
        raise ValueError(f"k_neighbors must be a positive even number, got {k}")
    half = k // 2
    offsets = np.concatenate([np.arange(-half, 0), np.arange(1, half + 1)])
    return (np.arange(n)[:, None] + offsets[None, :]) % n


def state_dim(channels: int, k_neighbors: int, embed_dim: int) -> int:
    return 2 + LATTICE_SIZE * LATTICE_SIZE * channels + k_neighbors * embed_dim


def _agent_parts(points: np.ndarray, grid: FeatureGrid, k_neighbors: int, embed_dim: int, patch_radius: float):
    feats = local_feature_matrix(grid, points, patch_radius)
    offsets = points[neighbor_indices(len(points), k_neighbors)] - points[:, None, :]
    embed = sinusoidal_embed(offsets, embed_dim).reshape(len(points), -1)
    return points, feats, embed


def points_state_matrix(points: np.ndarray, grid: FeatureGrid, k_neighbors: int, embed_dim: int,
                        patch_radius: float) -> np.ndarray:
    """Flattened network input for every agent -> N x state_dim; row i equals build_states(...)[i].as_vector."""
    points, feats, embed = _agent_parts(points, grid, k_neighbors, embed_dim, patch_radius)
    coords = points / np.array([grid.width, grid.height], dtype=np.float64)
    return np.concatenate([coords, feats, embed], axis=1)


def state_matrix(ep: EpisodeState, k_neighbors: int, embed_dim: int, patch_radius: float) -> np.ndarray:
    return points_state_matrix(ep.contour.points, ep.feature_grid, k_neighbors, embed_dim, patch_radius)


def build_states(
    ep: EpisodeState, k_neighbors: int, embed_dim: int, patch_radius: float = 4.0
) -> List[AgentState]:
    """
    Per-agent states: coordinates, local features, neighbor offset embeddings.

    Args:
        ep: Current episode
        k_neighbors: Even neighborhood size
        embed_dim: Embedding length per neighbor
        patch_radius: Lattice half-width for local features

    Returns:
        N AgentState objects in contour order
    """
    points, feats, embed = _agent_parts(ep.contour.points, ep.feature_grid, k_neighbors, embed_dim, patch_radius)
    return [
        AgentState(coords=points[i], local_features=feats[i], neighbor_embed=embed[i])
        for i in range(len(points))
    ]


# ---------------------------------------------------------------- actions and rewards

def clamp_action(a, delta: float) -> np.ndarray:
    """Rescale a displacement onto the L2 ball of radius delta when it leaves it."""
    return clamp_actions(np.asarray(a, dtype=np.float64).reshape(1, 2), delta)[0]


def clamp_actions(actions: np.ndarray, delta: float) -> np.ndarray:
    actions = np.asarray(actions, dtype=np.float64)
    norms = np.linalg.norm(actions, axis=-1, keepdims=True)
    scale = np.where(norms > delta, delta / np.where(norms > 0, norms, 1.0), 1.0)
    return actions * scale


def box_mask(b: BoundingBox, width: int, height: int) -> BinaryMask:
    corners = [(b.x_min, b.y_min), (b.x_max, b.y_min), (b.x_max, b.y_max), (b.x_min, b.y_max)]
    return geometry.rasterize(Contour.from_points(corners), width, height)


def reward_init(init_box: BoundingBox, gt: BinaryMask, w: RewardWeights) -> float:
    """w0 times the Dice of the box region against ground truth."""
    return w.w0 * metrics.dice(box_mask(init_box, gt.width, gt.height), gt)


def coop_rewards(points: np.ndarray, k_neighbors: int, w3: float) -> np.ndarray:
    diffs = points[neighbor_indices(len(points), k_neighbors)] - points[:, None, :]
    return -w3 * np.sum(diffs * diffs, axis=(1, 2))


@dataclass
class StepOutcome:
    """Everything one evolution step produced."""
    state: EpisodeState
    rewards: np.ndarray
    done: bool
    report: MetricReport
    r_region: float
    r_boundary: float
    r_coop: np.ndarray
    r_init: float


def _score(contour: Contour, gt: BinaryMask) -> MetricReport:
    pred = geometry.rasterize(contour, gt.width, gt.height)
    return metrics.report([pred], [gt])


def new_episode(
    gt_mask: BinaryMask,
    feature_grid: FeatureGrid,
    init_box: BoundingBox,
    n_points: int = 128,
    horizon: int = 5,
    delta: float = 25.0,
    weights: Optional[RewardWeights] = None,
    k_neighbors: int = 4,
) -> EpisodeState:
    """
    Start an episode from an octagon cut out of the initial box.

    Args:
        gt_mask: Target mask
        feature_grid: Feature channels of the same extent
        init_box: Initial bounding box (possibly perturbed)
        n_points: Number of agents
        horizon: Evolution steps T
        delta: Max displacement per step in pixels
        weights: Reward weights
        k_neighbors: Cyclic neighborhood size

    Returns:
        Episode at t = 0 with metric snapshots of the initial contour
    """
    contour = geometry.uniform_resample(geometry.octagon_from_bbox(init_box), n_points)
    initial = _score(contour, gt_mask)
    return EpisodeState(
        contour=contour,
        gt_mask=gt_mask,
        feature_grid=feature_grid,
        init_box=init_box,
        t=0,
        prev_miou=initial.miou,
        prev_mboundf=initial.mboundf,
        delta=delta,
        horizon=horizon,
        weights=weights or RewardWeights(),
        k_neighbors=k_neighbors,
    )


def step_detailed(ep: EpisodeState, actions) -> StepOutcome:
    """
    Apply one displacement per agent and score the move.

    Args:
        ep: Current episode (t < T)
        actions: N x 2 displacements in pixels

    Returns:
        StepOutcome with the next state and the reward breakdown
    """
    actions = np.asarray(actions, dtype=np.float64)
    n = ep.contour.n
    if ep.done:
        raise ActionError(f"episode already finished at t = {ep.t}")
    if actions.shape != (n, 2):
        raise ActionError(f"expected {n} x 2 actions, got shape {actions.shape}")
    if not np.all(np.isfinite(actions)):
        raise ActionError("actions contain NaN or infinite entries")

    gt = ep.gt_mask
    moved = ep.contour.points + clamp_actions(actions, ep.delta)
    moved[:, 0] = np.clip(moved[:, 0], 0.0, float(gt.width))
    moved[:, 1] = np.clip(moved[:, 1], 0.0, float(gt.height))
    contour = Contour(points=moved)

    report = _score(contour, gt)
    w = ep.weights
    r_region = w.w1 * (report.miou - ep.prev_miou)
    r_boundary = w.w2 * (report.mboundf - ep.prev_mboundf)
    r_coop = coop_rewards(moved, ep.k_neighbors, w.w3)
    r_init = reward_init(ep.init_box, gt, w) if ep.t == 0 else 0.0
    rewards = r_init + r_region + r_boundary + r_coop

    next_state = ep.model_copy(update={
        "contour": contour,
        "t": ep.t + 1,
        "prev_miou": report.miou,
        "prev_mboundf": report.mboundf,
    })
    done = ep.t + 1 == ep.horizon
    logger.debug(
        f"step {ep.t}: miou={report.miou:.4f} mboundf={report.mboundf:.4f} "
        f"r_region={r_region:.4f} r_boundary={r_boundary:.4f}"
    )
    return StepOutcome(
        state=next_state,
        rewards=rewards,
        done=done,
        report=report,
        r_region=r_region,
        r_boundary=r_boundary,
        r_coop=r_coop,
        r_init=r_init,
    )


def step(ep: EpisodeState, actions) -> Tuple[EpisodeState, np.ndarray, bool]:
    """Advance one evolution step -> (next state, per-agent rewards, done)."""
    outcome = step_detailed(ep, actions)
    return outcome.state, outcome.rewards, outcome.done


# ---------------------------------------------------------------- action sources

class ActionSource(Protocol):
    def act(self, ep: EpisodeState) -> np.ndarray:
        ...


class ZeroPolicy:
    """Never moves; reproduces the octagon baseline."""

    def act(self, ep: EpisodeState) -> np.ndarray:
        return np.zeros((ep.contour.n, 2))


def boundary_edge_midpoints(gt: BinaryMask) -> np.ndarray:
    """
    Midpoints of the pixel edges separating a boundary pixel from the background.

    A polygon through these points runs between the last inside pixel center and
    the first outside one, so it rasterizes back to the mask far more closely than
    a polygon through the boundary pixel centers.

    Returns:
        M x 2 float64 (x, y); empty when the mask is empty
    """
    bits = gt.bits
    h, w = bits.shape
    padded = np.pad(bits, 1, constant_values=False)
    targets = []
    for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        outside = ~padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
        rows, cols = np.nonzero(bits & outside)
        targets.append(np.stack([cols + 0.5 + 0.5 * dx, rows + 0.5 + 0.5 * dy], axis=1))
    return np.concatenate(targets).astype(np.float64)


class GreedyBoundaryPolicy:
    """
    Moves every agent min(delta, distance) toward the nearest ground-truth boundary pixel,
    aiming at the midpoint of that pixel's edge with the background.
    """

    def __init__(self):
        self._cache_key: Optional[int] = None
        self._tree: Optional[cKDTree] = None
        self._targets: Optional[np.ndarray] = None

    def _index(self, gt: BinaryMask) -> Tuple[cKDTree, np.ndarray]:
        if self._cache_key != id(gt.bits):
            self._targets = boundary_edge_midpoints(gt)
            self._tree = cKDTree(self._targets) if len(self._targets) else None
            self._cache_key = id(gt.bits)
        return self._tree, self._targets

    def act(self, ep: EpisodeState) -> np.ndarray:
        tree, targets = self._index(ep.gt_mask)
        points = ep.contour.points
        if tree is None:
            return np.zeros_like(points)
        dist, nearest = tree.query(points)
        moves = targets[nearest] - points
        # agents already on a target (up to float round-off) stay put
        moves[dist < SETTLE_TOLERANCE] = 0.0
        return clamp_actions(moves, ep.delta)


def run_episode(
    ep: EpisodeState, policy: ActionSource, record: bool = True
) -> Tuple[Contour, MetricReport, List[TraceFrame]]:
    """
    Roll an episode out to its horizon.

    Args:
        ep: Episode at t = 0
        policy: Anything with act(EpisodeState) -> N x 2
        record: Keep one TraceFrame per step

    Returns:
        (final contour, final metrics, trace)
    """
    trace: List[TraceFrame] = []
    report = _score(ep.contour, ep.gt_mask)
    while not ep.done:
        outcome = step_detailed(ep, policy.act(ep))
        ep, report = outcome.state, outcome.report
        if record:
            trace.append(TraceFrame(
                step=ep.t,
                points=ep.contour.points.copy(),
                miou=report.miou,
                mdice=report.mdice,
                mboundf=report.mboundf,
                r_region=outcome.r_region,
                r_boundary=outcome.r_boundary,
                r_coop_mean=float(outcome.r_coop.mean()),
            ))
    return ep.contour, report, trace

