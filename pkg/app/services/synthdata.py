# Copyright 2024
# Directory: ContourMARL/app/services/synthdata.py

"""
Procedural shape corpus: ellipse, star and blob masks, rendered feature grids,
and the on-disk manifest (PGM masks, tensor-file grids, CSV index).
"""

import csv
import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from ..core.checkpoint import load_tensors, save_tensors
from ..core.errors import CheckpointError, CorpusError, ShapeTooSmallError
from ..models.entities import BinaryMask, BoundingBox, Contour, CorpusEntry, FeatureGrid, ShapeKind, ShapeSpec
from . import geometry

logger = logging.getLogger(__name__)

MIN_AREA = 64
MAX_ATTEMPTS = 16
EVAL_FRACTION = 0.2
INSIDE_INTENSITY = 0.8
OUTSIDE_INTENSITY = 0.2
BLOB_HARMONICS = range(2, 7)
BLOB_MAX_AMPLITUDE = 0.15
MANIFEST_NAME = "manifest.csv"
MANIFEST_COLUMNS = ["id", "kind", "seed", "mask_path", "grid_path",
                    "x_min", "y_min", "x_max", "y_max", "split"]
DEFAULT_KINDS: Tuple[ShapeKind, ...] = ("ellipse", "star", "blob")

PathLike = Union[str, Path]


# ---------------------------------------------------------------- shapes

def _pixel_centers(size: int) -> Tuple[np.ndarray, np.ndarray]:
    ticks = np.arange(size, dtype=np.float64) + 0.5
    ys, xs = np.meshgrid(ticks, ticks, indexing="ij")
    return xs, ys


def _ellipse(spec: ShapeSpec, rng: np.random.Generator) -> np.ndarray:
    size = spec.size
    a = rng.uniform(0.15, 0.35) * size
    ecc = spec.eccentricity if spec.eccentricity is not None else rng.uniform(0.0, 0.8)
    b = a * math.sqrt(1.0 - ecc * ecc)
    theta = rng.uniform(0.0, math.pi)
    margin = a + 0.05 * size
    cx = rng.uniform(margin, size - margin)
    cy = rng.uniform(margin, size - margin)
    xs, ys = _pixel_centers(size)
    dx, dy = xs - cx, ys - cy
    u = (dx * math.cos(theta) + dy * math.sin(theta)) / a
    v = (-dx * math.sin(theta) + dy * math.cos(theta)) / b
    return u * u + v * v <= 1.0


def _star(spec: ShapeSpec, rng: np.random.Generator) -> np.ndarray:
    size = spec.size
    k = int(rng.integers(5, 10))
    ratio = rng.uniform(0.4, 0.7)
    outer = rng.uniform(0.25, 0.4) * size
    phase = rng.uniform(0.0, 2.0 * math.pi)
    margin = outer + 0.05 * size
    cx = rng.uniform(margin, size - margin)
    cy = rng.uniform(margin, size - margin)
    angles = phase + np.arange(2 * k) * (math.pi / k)
    radii = np.where(np.arange(2 * k) % 2 == 0, outer, outer * ratio)
    points = np.stack([cx + radii * np.cos(angles), cy + radii * np.sin(angles)], axis=1)
    return geometry.rasterize(Contour.from_points(points), size, size).bits


def _blob(spec: ShapeSpec, rng: np.random.Generator) -> np.ndarray:
    size = spec.size
    r0 = rng.uniform(0.15, 0.22) * size
    amps = rng.uniform(-BLOB_MAX_AMPLITUDE, BLOB_MAX_AMPLITUDE, size=len(BLOB_HARMONICS))
    phases = rng.uniform(0.0, 2.0 * math.pi, size=len(BLOB_HARMONICS))
    cx, cy = size / 2.0 + rng.uniform(-0.05, 0.05, size=2) * size
    theta = np.linspace(0.0, 2.0 * math.pi, 256, endpoint=False)
    radial = np.ones_like(theta)
    for m, a_m, phi in zip(BLOB_HARMONICS, amps, phases):
        radial += a_m * np.cos(m * theta + phi)
    r = r0 * radial
    points = np.stack([cx + r * np.cos(theta), cy + r * np.sin(theta)], axis=1)
    return geometry.rasterize(Contour.from_points(points), size, size).bits


_DRAWERS = {"ellipse": _ellipse, "star": _star, "blob": _blob}


def _single_component(bits: np.ndarray) -> np.ndarray:
    """Largest 8-connected component with its holes filled."""
    labels, count = ndimage.label(bits, structure=np.ones((3, 3), dtype=bool))
    if count > 1:
        sizes = ndimage.sum(bits, labels, index=np.arange(1, count + 1))
        bits = labels == (int(np.argmax(sizes)) + 1)
    return ndimage.binary_fill_holes(bits)


def tight_bbox(mask: BinaryMask) -> BoundingBox:
    rows, cols = np.nonzero(mask.bits)
    if rows.size == 0:
        raise ShapeTooSmallError(0, MIN_AREA)
    return BoundingBox(x_min=float(cols.min()), y_min=float(rows.min()),
                       x_max=float(cols.max() + 1), y_max=float(rows.max() + 1))


def _draw_attempt(spec: ShapeSpec, attempt: int) -> BinaryMask:
    rng = np.random.default_rng([spec.seed, attempt])
    bits = _single_component(_DRAWERS[spec.kind](spec, rng))
    area = int(bits.sum())
    if area < MIN_AREA:
        logger.warning(f"{spec.kind} seed={spec.seed} attempt={attempt}: area {area} px, regenerating")
        raise ShapeTooSmallError(area, MIN_AREA)
    return BinaryMask(bits=bits)


def generate_shape(spec: ShapeSpec) -> Tuple[BinaryMask, BoundingBox]:
    """
    Draw one shape; attempts that come out smaller than 64 px move on to the next sub-seed.

    Args:
        spec: Shape recipe

    Returns:
        (mask, tight bounding box)
    """
    retrying = Retrying(
        stop=stop_after_attempt(MAX_ATTEMPTS),
        retry=retry_if_exception_type(ShapeTooSmallError),
        reraise=True,
    )
    for attempt in retrying:
        with attempt:
            mask = _draw_attempt(spec, attempt.retry_state.attempt_number - 1)
    return mask, tight_bbox(mask)


def make_feature_grid(gt_mask: BinaryMask, spec: ShapeSpec) -> FeatureGrid:
    """
    Render the mask, add noise and blur, then derive gradient channels.

    Args:
        gt_mask: Shape mask
        spec: Noise level, blur radius and seed

    Returns:
        4 x H x W grid [intensity, d/dx, d/dy, gradient magnitude]
    """
    image = np.where(gt_mask.bits, INSIDE_INTENSITY, OUTSIDE_INTENSITY).astype(np.float64)
    if spec.noise_sigma > 0:
        rng = np.random.default_rng([spec.seed, 1])
        image = image + rng.normal(0.0, spec.noise_sigma, size=image.shape)
    if spec.blur_radius > 0:
        image = ndimage.uniform_filter(image, size=2 * spec.blur_radius + 1, mode="nearest")
    d_dy, d_dx = np.gradient(image)
    magnitude = np.sqrt(d_dx * d_dx + d_dy * d_dy)
    return FeatureGrid(values=np.stack([image, d_dx, d_dy, magnitude]))


# ---------------------------------------------------------------- files

def write_pgm(path: PathLike, mask: BinaryMask) -> None:
    header = f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + (mask.bits.astype(np.uint8) * 255).tobytes())


def read_pgm(path: PathLike) -> BinaryMask:
    payload = Path(path).read_bytes()
    tokens: List[bytes] = []
    offset = 0
    while len(tokens) < 4:
        while offset < len(payload) and payload[offset:offset + 1].isspace():
            offset += 1
        if payload[offset:offset + 1] == b"#":
            offset = payload.index(b"\n", offset) + 1
            continue
        end = offset
        while end < len(payload) and not payload[end:end + 1].isspace():
            end += 1
        if end == offset:
            raise CorpusError(f"{path}: truncated PGM header")
        tokens.append(payload[offset:end])
        offset = end
    offset += 1
    if tokens[0] != b"P5":
        raise CorpusError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    width, height = int(tokens[1]), int(tokens[2])
    pixels = np.frombuffer(payload, dtype=np.uint8, count=width * height, offset=offset)
    return BinaryMask(bits=pixels.reshape(height, width) > 127)


def _split_ids(ids: Sequence[str], seed: int) -> set:
    """Eval ids: the lowest-hashing fifth of the corpus."""
    n_eval = int(round(EVAL_FRACTION * len(ids)))
    ranked = sorted(ids, key=lambda i: hashlib.sha256(f"{seed}:{i}".encode("utf-8")).hexdigest())
    return set(ranked[:n_eval])


def _entry_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


@dataclass
class CorpusSample:
    entry: CorpusEntry
    mask: BinaryMask
    grid: FeatureGrid


def _build_one(spec: ShapeSpec, entry_id: str, out_dir: Path) -> Tuple[str, ShapeSpec, BoundingBox]:
    mask, bbox = generate_shape(spec)
    grid = make_feature_grid(mask, spec)
    write_pgm(out_dir / "masks" / f"{entry_id}.pgm", mask)
    save_tensors(out_dir / "grids" / f"{entry_id}.tns", {"grid": grid.values})
    return entry_id, spec, bbox


def build_corpus(
    count: int,
    out_dir: PathLike,
    size: int = 64,
    seed: int = 0,
    kinds: Sequence[ShapeKind] = DEFAULT_KINDS,
    noise_sigma: float = 0.05,
    blur_radius: int = 1,
    workers: int = 1,
) -> Path:
    """
    Generate a corpus and write its manifest.

    Args:
        count: Number of shapes (>= 1)
        out_dir: Target directory
        size: Grid extent in pixels
        seed: Master seed
        kinds: Shape kinds, assigned round-robin
        noise_sigma: Render noise level
        blur_radius: Box-blur radius
        workers: Parallel generator threads

    Returns:
        Path of manifest.csv
    """
    if count < 1:
        raise ValueError(f"corpus count must be >= 1, got {count}")
    if not kinds:
        raise ValueError("at least one shape kind is required")
    out_dir = Path(out_dir)
    try:
        (out_dir / "masks").mkdir(parents=True, exist_ok=True)
        (out_dir / "grids").mkdir(parents=True, exist_ok=True)
    except OSError as e:
        logger.error(f"Cannot create corpus directory {out_dir}: {e}")
        raise CorpusError(f"cannot create corpus directory {out_dir}: {e}") from e

    jobs = []
    for i in range(count):
        kind = kinds[i % len(kinds)]
        spec = ShapeSpec(kind=kind, size=size, seed=_entry_seed(seed, i),
                         noise_sigma=noise_sigma, blur_radius=blur_radius)
        jobs.append((spec, f"{kind}_{i:05d}"))

    try:
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            results = list(pool.map(lambda job: _build_one(job[0], job[1], out_dir), jobs))
    except OSError as e:
        logger.error(f"Failed writing corpus files under {out_dir}: {e}")
        raise CorpusError(f"failed writing corpus files under {out_dir}: {e}") from e

    eval_ids = _split_ids([entry_id for entry_id, _, _ in results], seed)
    manifest = out_dir / MANIFEST_NAME
    with open(manifest, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS)
        for entry_id, spec, bbox in results:
            writer.writerow([
                entry_id, spec.kind, spec.seed,
                f"masks/{entry_id}.pgm", f"grids/{entry_id}.tns",
                repr(bbox.x_min), repr(bbox.y_min), repr(bbox.x_max), repr(bbox.y_max),
                "eval" if entry_id in eval_ids else "train",
            ])
    logger.info(f"Wrote corpus of {count} shapes ({len(eval_ids)} eval) to {manifest}")
    return manifest


def load_corpus(manifest: PathLike) -> List[CorpusEntry]:
    """Parse a manifest; paths stay relative to the manifest's directory."""
    manifest = Path(manifest)
    if manifest.is_dir():
        manifest = manifest / MANIFEST_NAME
    try:
        with open(manifest, newline="", encoding="utf-8") as handle:
            rows = list(csv.DictReader(handle))
    except OSError as e:
        raise CorpusError(f"cannot read manifest {manifest}: {e}") from e
    entries = []
    for row in rows:
        try:
            entries.append(CorpusEntry(
                id=row["id"], kind=row["kind"], seed=int(row["seed"]),
                mask_path=row["mask_path"], grid_path=row["grid_path"],
                bbox=BoundingBox(x_min=float(row["x_min"]), y_min=float(row["y_min"]),
                                 x_max=float(row["x_max"]), y_max=float(row["y_max"])),
                split=row["split"],
            ))
        except (KeyError, ValueError) as e:
            raise CorpusError(f"{manifest}: malformed row {row.get('id', '?')}: {e}") from e
    if not entries:
        raise CorpusError(f"{manifest}: no entries")
    return entries


def load_sample(entry: CorpusEntry, root: PathLike) -> CorpusSample:
    """Read one entry's mask and grid from disk."""
    root = Path(root)
    try:
        mask = read_pgm(root / entry.mask_path)
        grid = FeatureGrid(values=load_tensors(root / entry.grid_path)["grid"])
    except (OSError, KeyError, CheckpointError) as e:
        raise CorpusError(f"cannot load corpus entry {entry.id}: {e}") from e
    return CorpusSample(entry=entry, mask=mask, grid=grid)


def load_split(manifest: PathLike, split: Optional[str] = None) -> List[CorpusSample]:
    manifest = Path(manifest)
    root = manifest if manifest.is_dir() else manifest.parent
    entries = load_corpus(manifest)
    return [load_sample(e, root) for e in entries if split is None or e.split == split]
