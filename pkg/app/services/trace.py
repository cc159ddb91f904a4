# Copyright 2024
# Directory: ContourMARL/app/services/trace.py

"""
Episode trace export: one SVG with a polyline per evolution step and a CSV
of the per-step metric and reward streams.
"""

import csv
import logging
from pathlib import Path
from typing import List, Sequence

import numpy as np

from ..models.entities import BinaryMask, Contour, TraceFrame

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["step", "miou", "mdice", "mboundf", "r_region", "r_boundary", "r_coop_mean"]


def _points_attr(points: np.ndarray, close: bool) -> str:
    if close:
        points = np.vstack([points, points[:1]])
    return " ".join(f"{x:.3f},{y:.3f}" for x, y in points)


def _mask_rects(mask: BinaryMask) -> List[str]:
    rows, cols = np.nonzero(mask.bits)
    return [f'<rect x="{c}" y="{r}" width="1" height="1"/>' for r, c in zip(rows, cols)]


def render_svg(frames: Sequence[TraceFrame], initial: Contour, gt: BinaryMask) -> str:
    """SVG document: ground truth pixels, the initial contour and one polyline per step."""
    width, height = gt.width, gt.height
    last = max(len(frames), 1)
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width * 8}" height="{height * 8}" '
        f'viewBox="0 0 {width} {height}">',
        '<g class="gt" fill="#dddddd" stroke="none">',
        *_mask_rects(gt),
        "</g>",
        f'<polygon class="init" fill="none" stroke="#888888" stroke-width="0.2" '
        f'points="{_points_attr(initial.points, close=False)}"/>',
    ]
    for frame in frames:
        shade = int(round(200 * (1.0 - frame.step / last)))
        lines.append(
            f'<polyline class="step" data-step="{frame.step}" fill="none" '
            f'stroke="rgb(220,{shade},{shade})" stroke-width="0.25" '
            f'points="{_points_attr(frame.points, close=True)}"/>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def write_trace(out_dir: Path, episode_id: str, frames: Sequence[TraceFrame],
                initial: Contour, gt: BinaryMask) -> Path:
    """
    Write <episode_id>.svg and <episode_id>.csv into out_dir.

    Args:
        out_dir: Target directory (created if missing)
        episode_id: File stem
        frames: One frame per evolution step
        initial: Contour before the first step
        gt: Ground-truth mask drawn underneath

    Returns:
        Path of the SVG file
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    svg_path = out_dir / f"{episode_id}.svg"
    svg_path.write_text(render_svg(frames, initial, gt), encoding="utf-8")

    with open(out_dir / f"{episode_id}.csv", "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for f in frames:
            writer.writerow([f.step] + [repr(float(getattr(f, name))) for name in TRACE_COLUMNS[1:]])
    logger.debug(f"Wrote trace for {episode_id} ({len(frames)} steps) to {out_dir}")
    return svg_path
