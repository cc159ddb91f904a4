# Copyright 2024
# Directory: ContourMARL/app/services/replay.py

"""
FIFO replay buffer of per-agent transitions.
Transitions point at shared step frames (contour points plus their feature grid),
so the sequence actor can be re-run over whole contours at update time.
"""

import logging
import threading
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional

import numpy as np

from ..models.entities import FeatureGrid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Frame:
    """Contour points at one step and the grid they were observed on."""
    points: np.ndarray
    grid: FeatureGrid


class Transition(NamedTuple):
    """(s, a, r, s', terminal) for one agent; s and s' are frame references."""
    frame: int
    agent: int
    action: np.ndarray
    reward: float
    next_frame: int
    terminal: bool


@dataclass
class TransitionBatch:
    """A uniform sample, with the distinct frames it touches."""
    frames: List[Frame]
    s_frame: np.ndarray       # (B,) index into frames
    next_frame: np.ndarray    # (B,) index into frames
    agent: np.ndarray         # (B,)
    actions: np.ndarray       # (B, 2)
    rewards: np.ndarray       # (B,)
    terminal: np.ndarray      # (B,) bool

    def __len__(self) -> int:
        return int(self.rewards.shape[0])


class ReplayBuffer:
    """Ring buffer with FIFO eviction; appends and samples are serialized by a lock."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"replay capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._lock = threading.Lock()
        self._frames: Dict[int, Frame] = {}
        self._refs: Dict[int, int] = {}
        self._next_frame_id = 0
        self._frame_ids = np.zeros(capacity, dtype=np.int64)
        self._next_ids = np.zeros(capacity, dtype=np.int64)
        self._agents = np.zeros(capacity, dtype=np.int64)
        self._actions = np.zeros((capacity, 2), dtype=np.float64)
        self._rewards = np.zeros(capacity, dtype=np.float64)
        self._terminal = np.zeros(capacity, dtype=bool)
        self._pos = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    @property
    def frame_count(self) -> int:
        return len(self._frames)

    def add_frame(self, points: np.ndarray, grid: FeatureGrid) -> int:
        with self._lock:
            frame_id = self._next_frame_id
            self._next_frame_id += 1
            self._frames[frame_id] = Frame(points=np.array(points, dtype=np.float64), grid=grid)
            self._refs[frame_id] = 0
            return frame_id

    def _release(self, frame_id: int) -> None:
        self._refs[frame_id] -= 1
        if self._refs[frame_id] == 0:
            del self._refs[frame_id]
            del self._frames[frame_id]

    def add_step(self, frame: int, actions: np.ndarray, rewards: np.ndarray,
                 next_frame: int, terminal: bool) -> None:
        """
        Store one transition per agent of a contour step.

        Args:
            frame: Frame id of the pre-step contour
            actions: N x 2 applied displacements
            rewards: N rewards
            next_frame: Frame id of the post-step contour
            terminal: Whether the step ended the episode
        """
        actions = np.asarray(actions, dtype=np.float64)
        rewards = np.asarray(rewards, dtype=np.float64)
        if not (np.all(np.isfinite(actions)) and np.all(np.isfinite(rewards))):
            raise ValueError("transitions must be finite")
        with self._lock:
            for agent in range(len(rewards)):
                slot = self._pos
                evicted = None
                if self._size == self.capacity:
                    evicted = (int(self._frame_ids[slot]), int(self._next_ids[slot]))
                else:
                    self._size += 1
                # count the incoming refs first so a step that wraps the ring keeps its own frames
                self._refs[frame] += 1
                self._refs[next_frame] += 1
                if evicted is not None:
                    for frame_id in evicted:
                        self._release(frame_id)
                self._frame_ids[slot] = frame
                self._next_ids[slot] = next_frame
                self._agents[slot] = agent
                self._actions[slot] = actions[agent]
                self._rewards[slot] = rewards[agent]
                self._terminal[slot] = terminal
                self._pos = (slot + 1) % self.capacity
            # frames that never got a transition (capacity smaller than one step)
            for frame_id in (frame, next_frame):
                if self._refs.get(frame_id) == 0:
                    del self._refs[frame_id]
                    del self._frames[frame_id]

    def get(self, slot: int) -> Transition:
        """Transition at a slot, oldest first."""
        if not 0 <= slot < self._size:
            raise IndexError(f"slot {slot} outside buffer of size {self._size}")
        start = (self._pos - self._size) % self.capacity
        i = (start + slot) % self.capacity
        return Transition(
            frame=int(self._frame_ids[i]),
            agent=int(self._agents[i]),
            action=self._actions[i].copy(),
            reward=float(self._rewards[i]),
            next_frame=int(self._next_ids[i]),
            terminal=bool(self._terminal[i]),
        )

    def frame(self, frame_id: int) -> Frame:
        return self._frames[frame_id]

    def sample(self, batch_size: int, rng: np.random.Generator) -> Optional[TransitionBatch]:
        """Uniform sample with replacement; None while the buffer is empty."""
        with self._lock:
            if self._size == 0:
                return None
            slots = rng.integers(0, self._size, size=batch_size)
            frame_ids = self._frame_ids[slots]
            next_ids = self._next_ids[slots]
            unique, inverse = np.unique(np.concatenate([frame_ids, next_ids]), return_inverse=True)
            return TransitionBatch(
                frames=[self._frames[int(f)] for f in unique],
                s_frame=inverse[:batch_size],
                next_frame=inverse[batch_size:],
                agent=self._agents[slots].copy(),
                actions=self._actions[slots].copy(),
                rewards=self._rewards[slots].copy(),
                terminal=self._terminal[slots].copy(),
            )
