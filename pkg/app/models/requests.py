# Copyright 2024
# Directory: ContourMARL/app/models/requests.py

"""
Validated argument bundles for the command-line entry points.
"""

from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, Field, field_validator

from ..data.defaults import SWEEP_ITERATIONS, SWEEP_POINTS


class GenRequest(BaseModel):
    """Arguments of `gen`."""
    count: int = Field(..., ge=1, description="Number of shapes")
    size: int = Field(64, ge=32, description="Image side in pixels")
    seed: int = Field(0, description="Master seed")
    out: Path = Field(..., description="Corpus directory")
    kinds: List[str] = Field(default_factory=lambda: ["ellipse", "star", "blob"])
    noise_sigma: float = Field(0.05, ge=0.0)
    blur_radius: int = Field(1, ge=0)
    workers: int = Field(1, ge=1)


class TrainRequest(BaseModel):
    """Arguments of `train`."""
    corpus: Path
    out: Path
    config: Optional[Path] = None
    mode: Literal["sac", "supervised"] = "sac"
    resume: bool = False
    overrides: List[str] = Field(default_factory=list, description="key=value pairs from --set")
    epochs: Optional[int] = Field(None, ge=0)
    lr: Optional[float] = Field(None, ge=0.0)
    workers: Optional[int] = Field(None, ge=1)
    seed: Optional[int] = None


class EvalRequest(BaseModel):
    """Arguments of `eval`."""
    checkpoint: Optional[Path] = None
    corpus: Path
    config: Optional[Path] = None
    overrides: List[str] = Field(default_factory=list)
    split: Literal["train", "eval", "all"] = "eval"
    horizon: Optional[int] = Field(None, ge=1)
    points: Optional[int] = Field(None, ge=3)
    shift_frac: float = Field(0.0, ge=0.0, lt=1.0)
    scale_frac: float = Field(0.0, ge=0.0, lt=1.0)
    trace: Optional[Path] = None
    sensitivity: bool = False
    baseline: bool = False
    per_object: bool = False
    seed: Optional[int] = None


class GradcheckRequest(BaseModel):
    """Arguments of `gradcheck`."""
    eps: float = Field(1e-5, gt=0.0)
    trials: int = Field(20, ge=1)
    threshold: float = Field(1e-5, gt=0.0)
    seed: int = 0
    blocks: List[str] = Field(default_factory=list)
    max_entries: int = Field(16, ge=0, description="0 checks every entry")


class SweepRequest(BaseModel):
    """Arguments of `sweep`."""
    checkpoint: Path
    corpus: Path
    config: Optional[Path] = None
    overrides: List[str] = Field(default_factory=list)
    split: Literal["train", "eval", "all"] = "eval"
    points: List[int] = Field(default_factory=lambda: list(SWEEP_POINTS))
    iterations: List[int] = Field(default_factory=lambda: list(SWEEP_ITERATIONS))
    seed: Optional[int] = None

    @field_validator("points")
    @classmethod
    def _points_positive(cls, v: List[int]) -> List[int]:
        if not v or min(v) < 3:
            raise ValueError("sweep point counts must be >= 3")
        return v

    @field_validator("iterations")
    @classmethod
    def _iterations_positive(cls, v: List[int]) -> List[int]:
        if not v or min(v) < 1:
            raise ValueError("sweep iteration counts must be >= 1")
        return v
