# Copyright 2024
# Directory: ContourMARL/app/models/entities.py

"""
Domain entities: contours, masks, boxes, feature grids, agent states,
episode snapshots, trace frames, corpus entries and metric reports.
"""

from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


def _shoelace_signed(points: np.ndarray) -> float:
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


class _ArrayModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


# ---------------------------------------------------------------- geometry

class Contour(_ArrayModel):
    """Closed polygon of N agent positions (x, y) in continuous pixel coordinates."""
    points: np.ndarray = Field(..., description="N x 2 float64 array; point N connects to point 1")

    @field_validator("points", mode="before")
    @classmethod
    def _coerce_points(cls, value):
        points = np.array(value, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 2:
            raise ValueError(f"contour points must be N x 2, got shape {points.shape}")
        if points.shape[0] < 3:
            raise ValueError(f"contour needs at least 3 points, got {points.shape[0]}")
        if not np.all(np.isfinite(points)):
            raise ValueError("contour coordinates must be finite")
        return points

    @classmethod
    def from_points(cls, points, orient: bool = True) -> "Contour":
        """Build a contour, reversing clockwise input so the signed area is >= 0."""
        contour = cls(points=points)
        if orient and contour.signed_area < 0:
            return cls(points=contour.points[::-1].copy())
        return contour

    @property
    def n(self) -> int:
        return int(self.points.shape[0])

    @property
    def signed_area(self) -> float:
        return _shoelace_signed(self.points)

    def translated(self, dx: float, dy: float) -> "Contour":
        return Contour(points=self.points + np.array([dx, dy]))


class BinaryMask(_ArrayModel):
    """H x W boolean grid; pixel (c, r) covers [c, c+1) x [r, r+1)."""
    bits: np.ndarray = Field(..., description="H x W bool array")

    @field_validator("bits", mode="before")
    @classmethod
    def _coerce_bits(cls, value):
        bits = np.array(value, dtype=bool)
        if bits.ndim != 2 or bits.shape[0] < 1 or bits.shape[1] < 1:
            raise ValueError(f"mask must be a non-empty H x W grid, got shape {bits.shape}")
        return bits

    @classmethod
    def empty(cls, width: int, height: int) -> "BinaryMask":
        return cls(bits=np.zeros((height, width), dtype=bool))

    @property
    def width(self) -> int:
        return int(self.bits.shape[1])

    @property
    def height(self) -> int:
        return int(self.bits.shape[0])

    def count(self) -> int:
        return int(self.bits.sum())


class BoundingBox(BaseModel):
    """Axis-aligned box in pixel coordinates."""
    model_config = ConfigDict(frozen=True)

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @model_validator(mode="after")
    def _check_extents(self) -> "BoundingBox":
        values = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(np.isfinite(values)):
            raise ValueError(f"bounding box must be finite, got {values}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"bounding box needs positive extents, got {values}")
        return self

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def center(self) -> Tuple[float, float]:
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


class ConsistencyWeights(BaseModel):
    """Weights of distance and curvature variance in the consistency index."""
    lambda1: float = Field(default=0.1, ge=0.0)
    lambda2: float = Field(default=0.5, ge=0.0)


# ---------------------------------------------------------------- metrics

class ObjectMetrics(BaseModel):
    iou: float = Field(..., ge=0.0, le=1.0)
    dice: float = Field(..., ge=0.0, le=1.0)
    boundf: float = Field(..., ge=0.0, le=1.0)


class MetricReport(BaseModel):
    """Per-object scores plus their arithmetic means."""
    miou: float = Field(..., ge=0.0, le=1.0)
    mdice: float = Field(..., ge=0.0, le=1.0)
    mboundf: float = Field(..., ge=0.0, le=1.0)
    per_object: List[ObjectMetrics] = Field(default_factory=list)

    def csv_rows(self) -> List[List[str]]:
        """Rows (object_id, iou, dice, boundf); the last row is the aggregate."""
        rows = [[str(i), repr(float(m.iou)), repr(float(m.dice)), repr(float(m.boundf))] for i, m in enumerate(self.per_object)]
        rows.append(["mean", repr(float(self.miou)), repr(float(self.mdice)), repr(float(self.mboundf))])
        return rows


# ---------------------------------------------------------------- environment

class FeatureGrid(_ArrayModel):
    """C x H x W feature channels sampled at pixel centers."""
    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _coerce_values(cls, value):
        values = np.array(value, dtype=np.float64)
        if values.ndim != 3 or values.shape[0] < 1:
            raise ValueError(f"feature grid must be C x H x W with C >= 1, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("feature grid values must be finite")
        return values

    @property
    def channels(self) -> int:
        return int(self.values.shape[0])

    @property
    def height(self) -> int:
        return int(self.values.shape[1])

    @property
    def width(self) -> int:
        return int(self.values.shape[2])


class AgentState(_ArrayModel):
    """Coordinates, local features and neighbor embeddings of one contour agent."""
    coords: np.ndarray
    local_features: np.ndarray
    neighbor_embed: np.ndarray

    @field_validator("coords", "local_features", "neighbor_embed", mode="before")
    @classmethod
    def _coerce_vector(cls, value):
        vector = np.array(value, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(vector)):
            raise ValueError("agent state entries must be finite")
        return vector

    def as_vector(self, width: float, height: float) -> np.ndarray:
        """Flatten for the networks; coordinates are normalized by the image extent."""
        coords = self.coords / np.array([width, height], dtype=np.float64)
        return np.concatenate([coords, self.local_features, self.neighbor_embed])


class RewardWeights(BaseModel):
    w0: float = Field(default=0.5, ge=0.0, description="initialization reward")
    w1: float = Field(default=1.0, ge=0.0, description="region overlap reward")
    w2: float = Field(default=1.5, ge=0.0, description="boundary alignment reward")
    w3: float = Field(default=0.1, ge=0.0, description="cooperative regularization")


class EpisodeState(_ArrayModel):
    """Everything one contour-evolution episode needs between steps."""
    contour: Contour
    gt_mask: BinaryMask
    feature_grid: FeatureGrid
    init_box: BoundingBox
    t: int = Field(default=0, ge=0)
    prev_miou: float = Field(default=0.0, ge=0.0, le=1.0)
    prev_mboundf: float = Field(default=0.0, ge=0.0, le=1.0)
    delta: float = Field(default=25.0, gt=0.0)
    horizon: int = Field(default=5, ge=1)
    weights: RewardWeights = Field(default_factory=RewardWeights)
    k_neighbors: int = Field(default=4, ge=2)

    @model_validator(mode="after")
    def _check_step(self) -> "EpisodeState":
        if self.t > self.horizon:
            raise ValueError(f"step {self.t} exceeds horizon {self.horizon}")
        if self.gt_mask.bits.shape != self.feature_grid.values.shape[1:]:
            raise ValueError(
                f"mask {self.gt_mask.bits.shape} and grid {self.feature_grid.values.shape[1:]} differ"
            )
        return self

    @property
    def done(self) -> bool:
        return self.t >= self.horizon


class EramState(BaseModel):
    alpha: float = Field(..., gt=0.0)
    beta: float = Field(..., ge=0.0)


class TraceFrame(_ArrayModel):
    """Contour and reward streams after one evolution step."""
    step: int
    points: np.ndarray
    miou: float
    mdice: float
    mboundf: float
    r_region: float
    r_boundary: float
    r_coop_mean: float


# ---------------------------------------------------------------- synthetic data

ShapeKind = Literal["ellipse", "star", "blob"]


class ShapeSpec(BaseModel):
    """Recipe for one procedural shape and its rendered feature grid."""
    kind: ShapeKind = "ellipse"
    size: int = Field(default=64, ge=32)
    seed: int = 0
    noise_sigma: float = Field(default=0.05, ge=0.0)
    blur_radius: int = Field(default=1, ge=0)
    eccentricity: Optional[float] = Field(default=None, ge=0.0, lt=1.0)


class CorpusEntry(BaseModel):
    """One manifest row."""
    id: str
    kind: ShapeKind
    seed: int
    mask_path: str
    grid_path: str
    bbox: BoundingBox
    split: Literal["train", "eval"]
