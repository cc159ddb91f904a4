# Copyright 2024
# Directory: ContourMARL/tests/test_cli.py

import csv
import io
import json

import pytest

from app.core import diffcore as dc
from app.core.config import dump_config, resolve_sac_config
from app.main import EXIT_CHECKPOINT, EXIT_GRADCHECK, EXIT_OK, EXIT_USAGE, RESOLVED_CONFIG_NAME, RUN_INFO_NAME, main


def stdout_rows(text):
    return list(csv.reader(io.StringIO(text)))


@pytest.fixture
def run_config(tmp_path, make_config):
    path = tmp_path / "tiny.cfg"
    path.write_text(dump_config(make_config(epochs=0)), encoding="utf-8")
    return path


@pytest.fixture
def trained(tmp_path, corpus_dir, run_config, capsys):
    out = tmp_path / "run"
    code = main(["train", "--corpus", str(corpus_dir), "--out", str(out), "--config", str(run_config)])
    capsys.readouterr()
    assert code == EXIT_OK
    return out


def test_gen_rejects_zero_count(tmp_path):
    assert main(["gen", "--count", "0", "--out", str(tmp_path / "c")]) == EXIT_USAGE


def test_gen_is_reproducible(tmp_path, capsys):
    for name in ("a", "b"):
        assert main(["gen", "--count", "3", "--size", "32", "--seed", "4", "--out", str(tmp_path / name)]) == EXIT_OK
    capsys.readouterr()
    assert (tmp_path / "a" / "manifest.csv").read_bytes() == (tmp_path / "b" / "manifest.csv").read_bytes()
    info = json.loads((tmp_path / "a" / RUN_INFO_NAME).read_text(encoding="utf-8"))
    assert info["command"] == "gen" and info["exit_code"] == 0


def test_train_writes_replayable_config(trained, run_config):
    assert (trained / "checkpoints" / "latest.ckpt").exists()
    replayed = resolve_sac_config(trained / RESOLVED_CONFIG_NAME)
    assert replayed == resolve_sac_config(run_config)
    info = json.loads((trained / RUN_INFO_NAME).read_text(encoding="utf-8"))
    assert info["exit_code"] == 0 and info["finished_at"]


def test_eval_output_is_stable(trained, corpus_dir, run_config, capsys):
    argv = ["eval", "--checkpoint", str(trained / "checkpoints" / "latest.ckpt"),
            "--corpus", str(corpus_dir), "--config", str(run_config)]
    assert main(argv) == EXIT_OK
    first = capsys.readouterr().out
    assert main(argv) == EXIT_OK
    second = capsys.readouterr().out
    assert first == second
    rows = stdout_rows(first)
    assert rows[0] == ["miou", "mdice", "mboundf", "entries"]
    assert rows[1][3] == "2"


def test_eval_sensitivity_table(trained, corpus_dir, run_config, capsys):
    argv = ["eval", "--checkpoint", str(trained / "checkpoints" / "latest.ckpt"),
            "--corpus", str(corpus_dir), "--config", str(run_config), "--sensitivity"]
    assert main(argv) == EXIT_OK
    rows = stdout_rows(capsys.readouterr().out)
    assert len(rows) == 8
    header = rows[0]
    assert float(rows[1][header.index("mdice_drop")]) == 0.0


def test_eval_missing_checkpoint(tmp_path, corpus_dir, run_config):
    argv = ["eval", "--checkpoint", str(tmp_path / "absent.ckpt"), "--corpus", str(corpus_dir),
            "--config", str(run_config)]
    assert main(argv) == EXIT_CHECKPOINT


def test_eval_baseline_needs_no_checkpoint(corpus_dir, run_config, capsys):
    assert main(["eval", "--baseline", "--corpus", str(corpus_dir), "--config", str(run_config),
                 "--per-object"]) == EXIT_OK
    rows = stdout_rows(capsys.readouterr().out)
    assert rows[0] == ["object", "iou", "dice", "boundf"]
    assert rows[-1][0] == "mean"


def test_unknown_config_key_is_usage_error(corpus_dir, tmp_path):
    argv = ["train", "--corpus", str(corpus_dir), "--out", str(tmp_path / "run"), "--set", "bogus=1"]
    assert main(argv) == EXIT_USAGE


def test_sweep_grid_can_be_overridden(trained, corpus_dir, run_config, capsys):
    argv = ["sweep", "--checkpoint", str(trained / "checkpoints" / "latest.ckpt"), "--corpus", str(corpus_dir),
            "--config", str(run_config), "--points", "8", "12", "--iterations", "1", "2"]
    assert main(argv) == EXIT_OK
    rows = stdout_rows(capsys.readouterr().out)
    assert len(rows) == 5
    assert [(r[0], r[1]) for r in rows[1:]] == [("8", "1"), ("8", "2"), ("12", "1"), ("12", "2")]


def test_gradcheck_exit_codes(monkeypatch, capsys):
    assert main(["gradcheck", "--trials", "1", "--blocks", "op.tanh", "op.softplus"]) == EXIT_OK
    rows = stdout_rows(capsys.readouterr().out)
    assert [r[3] for r in rows[1:]] == ["true", "true"]

    monkeypatch.setattr(dc, "_dtanh", lambda y: 1.0 - 0.5 * y * y)
    assert main(["gradcheck", "--trials", "1", "--blocks", "op.tanh"]) == EXIT_GRADCHECK
