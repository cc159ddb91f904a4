#!/usr/bin/env python3
# Copyright 2024
# Directory: ContourMARL/tools/inspect_checkpoint.py

"""
Quick script to list the tensors of a checkpoint or optimizer file.
"""

import sys
from pathlib import Path

import numpy as np
from rich.console import Console
from rich.table import Table

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from app.core.checkpoint import FORMAT_VERSION, load_tensors, strip_prefix  # noqa: E402
from app.core.errors import CheckpointError  # noqa: E402


def inspect_checkpoint(path: Path, console: Console) -> int:
    """Print names, shapes and value counts; returns a process exit code."""
    try:
        tensors = load_tensors(path)
    except CheckpointError as e:
        console.print(f"[red]❌ {e}[/red]")
        return 5

    table = Table(title=f"{path} (format v{FORMAT_VERSION})")
    table.add_column("tensor")
    table.add_column("shape", justify="right")
    table.add_column("values", justify="right")
    table.add_column("finite")
    total = 0
    for name, value in tensors.items():
        total += value.size
        finite = "yes" if np.all(np.isfinite(value)) else "[red]NO[/red]"
        table.add_row(name, "x".join(map(str, value.shape)) or "scalar", str(value.size), finite)
    console.print(table)

    meta = strip_prefix("meta.", tensors)
    if meta:
        console.print("📐 Architecture: " + ", ".join(f"{k}={float(v):g}" for k, v in meta.items()))
    console.print(f"📊 {len(tensors)} tensors, {total} values")
    return 0


def main() -> int:
    if len(sys.argv) < 2:
        print("usage: inspect_checkpoint.py FILE [FILE ...]")
        return 2
    console = Console()
    codes = [inspect_checkpoint(Path(arg), console) for arg in sys.argv[1:]]
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
