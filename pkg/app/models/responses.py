# Copyright 2024
# Directory: ContourMARL/app/models/responses.py

"""
Output rows of the command-line entry points (CSV on stdout, run info on disk).
"""

from typing import ClassVar, List, Optional

from pydantic import BaseModel, Field


def _fmt(x: float) -> str:
    return repr(float(x))


class EvalRow(BaseModel):
    """Aggregate metrics of one evaluation."""
    columns: ClassVar[List[str]] = ["miou", "mdice", "mboundf", "entries"]
    miou: float
    mdice: float
    mboundf: float
    entries: int

    def csv_row(self) -> List[str]:
        return [_fmt(self.miou), _fmt(self.mdice), _fmt(self.mboundf), str(self.entries)]


class SweepRow(EvalRow):
    """One cell of the point-count by iteration-count matrix."""
    columns: ClassVar[List[str]] = ["points", "iterations", *EvalRow.columns]
    points: int
    iterations: int

    def csv_row(self) -> List[str]:
        return [str(self.points), str(self.iterations), *super().csv_row()]


class SensitivityRow(EvalRow):
    """Metrics at one bounding-box perturbation level."""
    columns: ClassVar[List[str]] = ["shift_frac", "scale_frac", *EvalRow.columns, "mdice_drop"]
    shift_frac: float
    scale_frac: float
    mdice_drop: float = Field(..., description="Unperturbed mDice minus this level's mDice")

    def csv_row(self) -> List[str]:
        return [_fmt(self.shift_frac), _fmt(self.scale_frac), *super().csv_row(), _fmt(self.mdice_drop)]


class GradcheckRow(BaseModel):
    name: str
    max_rel_error: float
    trials: int
    passed: bool


class RunInfo(BaseModel):
    """Non-deterministic run facts, kept apart from the replayable outputs."""
    command: str
    started_at: str
    finished_at: Optional[str] = None
    argv: List[str] = Field(default_factory=list)
    exit_code: Optional[int] = None
    environment: str = "development"
