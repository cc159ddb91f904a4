# Copyright 2024
# Directory: ContourMARL/app/core/checkpoint.py

"""
Flat binary tensor files: checkpoints, optimizer state and feature grids.

Layout (little-endian):
    magic "CMRLTNSR" | uint32 version | uint32 count
    per tensor: uint32 name_len | name (utf-8) | uint32 rank | uint64 extents[rank] | float64 values
"""

import logging
import os
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Dict, Mapping, Union

import numpy as np

from .errors import CheckpointError

logger = logging.getLogger(__name__)

MAGIC = b"CMRLTNSR"
FORMAT_VERSION = 1

PathLike = Union[str, Path]


def encode_tensors(tensors: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(tensors))]
    for name, value in tensors.items():
        array = np.ascontiguousarray(np.asarray(value, dtype="<f8"))
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<I", array.ndim))
        parts.append(struct.pack(f"<{array.ndim}Q", *array.shape))
        parts.append(array.tobytes(order="C"))
    return b"".join(parts)


def decode_tensors(payload: bytes, source: str = "<bytes>") -> "OrderedDict[str, np.ndarray]":
    if payload[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{source}: not a tensor file (bad magic)")
    offset = len(MAGIC)
    try:
        version, count = struct.unpack_from("<II", payload, offset)
        offset += 8
        if version != FORMAT_VERSION:
            raise CheckpointError(f"{source}: format version {version}, expected {FORMAT_VERSION}")
        tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", payload, offset)
            offset += 4
            name = payload[offset: offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<I", payload, offset)
            offset += 4
            shape = struct.unpack_from(f"<{rank}Q", payload, offset)
            offset += 8 * rank
            n = int(np.prod(shape)) if rank else 1
            values = np.frombuffer(payload, dtype="<f8", count=n, offset=offset)
            offset += 8 * n
            tensors[name] = values.astype(np.float64).reshape(shape)
    except (struct.error, ValueError, UnicodeDecodeError) as e:
        raise CheckpointError(f"{source}: truncated or corrupt tensor file ({e})") from e
    if offset != len(payload):
        raise CheckpointError(f"{source}: {len(payload) - offset} trailing bytes")
    return tensors


def save_tensors(path: PathLike, tensors: Mapping[str, np.ndarray]) -> Path:
    """Write tensors atomically (temp file + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_tensors(tensors))
    os.replace(tmp, path)
    logger.debug(f"Wrote {len(tensors)} tensors to {path}")
    return path


def load_tensors(path: PathLike) -> "OrderedDict[str, np.ndarray]":
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read {path}: {e}") from e
    return decode_tensors(payload, source=str(path))


def with_prefix(prefix: str, tensors: Mapping[str, np.ndarray]) -> Dict[str, np.ndarray]:
    return {f"{prefix}{name}": value for name, value in tensors.items()}


def strip_prefix(prefix: str, tensors: Mapping[str, np.ndarray]) -> Dict[str, np.ndarray]:
    return {name[len(prefix):]: value for name, value in tensors.items() if name.startswith(prefix)}
