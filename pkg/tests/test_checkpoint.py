# Copyright 2024
# Directory: ContourMARL/tests/test_checkpoint.py

import io
import struct

import numpy as np
import pytest
from rich.console import Console

from app.core import checkpoint as ckpt
from app.core.errors import CheckpointError


def test_save_and_load_keeps_order_and_values(tmp_path, rng):
    tensors = {"b": rng.normal(size=(3, 2)), "a": np.array(7.5)}
    path = ckpt.save_tensors(tmp_path / "nested" / "x.ckpt", tensors)
    loaded = ckpt.load_tensors(path)
    assert list(loaded) == ["b", "a"]
    assert np.array_equal(loaded["b"], tensors["b"])
    assert loaded["a"].shape == () and float(loaded["a"]) == 7.5
    assert not (tmp_path / "nested" / "x.ckpt.tmp").exists()


def test_bad_magic():
    with pytest.raises(CheckpointError, match="magic"):
        ckpt.decode_tensors(b"NOTATENSORFILE")


def test_wrong_version():
    payload = ckpt.MAGIC + struct.pack("<II", ckpt.FORMAT_VERSION + 1, 0)
    with pytest.raises(CheckpointError, match="version"):
        ckpt.decode_tensors(payload)


def test_truncated_and_trailing_bytes():
    payload = ckpt.encode_tensors({"w": np.ones((2, 2))})
    with pytest.raises(CheckpointError):
        ckpt.decode_tensors(payload[:-3])
    with pytest.raises(CheckpointError, match="trailing"):
        ckpt.decode_tensors(payload + b"\x00")


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        ckpt.load_tensors(tmp_path / "absent.ckpt")


def test_prefix_helpers():
    tensors = {"w": np.ones(1), "b": np.zeros(1)}
    prefixed = ckpt.with_prefix("actor.", tensors)
    assert sorted(prefixed) == ["actor.b", "actor.w"]
    mixed = {**prefixed, "critic1.w": np.ones(2)}
    assert sorted(ckpt.strip_prefix("actor.", mixed)) == ["b", "w"]


def test_inspect_tool(tmp_path):
    from tools.inspect_checkpoint import inspect_checkpoint

    path = ckpt.save_tensors(tmp_path / "x.ckpt", {"actor.w": np.ones((2, 3)), "meta.layers": np.array(2.0)})
    out = io.StringIO()
    assert inspect_checkpoint(path, Console(file=out, width=200)) == 0
    assert "actor.w" in out.getvalue() and "layers=2" in out.getvalue()

    (tmp_path / "bad.ckpt").write_bytes(b"garbage")
    assert inspect_checkpoint(tmp_path / "bad.ckpt", Console(file=io.StringIO())) == 5
