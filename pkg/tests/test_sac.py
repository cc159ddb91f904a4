# Copyright 2024
# Directory: ContourMARL/tests/test_sac.py

import csv
import json

import numpy as np
import pytest

from app.core import diffcore as dc
from app.core.checkpoint import load_tensors
from app.core.errors import CheckpointError, NonFiniteLossError
from app.models.entities import Contour, FeatureGrid
from app.services import environment as env
from app.services import sac, synthdata
from app.services.critic import TwinCritics
from app.services.policy import PolicyNetwork
from app.services.replay import Frame, TransitionBatch


@pytest.fixture(scope="module")
def samples(corpus_dir):
    return synthdata.load_split(corpus_dir, "train")


def read_log(path):
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.reader(handle))


# ---------------------------------------------------------------- entropy coefficient

def test_eram_alpha_values():
    assert sac.eram_alpha(0.2, 0.5, 0.0) == 0.2
    assert sac.eram_alpha(0.2, 0.5, 2.0) == 0.1
    values = [sac.eram_alpha(0.2, 0.5, c) for c in (0.0, 0.3, 1.0, 4.0, 50.0)]
    assert all(a > b for a, b in zip(values, values[1:]))
    with pytest.raises(ValueError):
        sac.eram_alpha(0.2, 0.5, -1.0)
    with pytest.raises(ValueError):
        sac.eram_alpha(0.0, 0.5, 1.0)


def test_eram_state_follows_contour_regularity(make_config):
    config = make_config()
    irregular = Contour.from_points([(0, 0), (9, 0), (9, 1), (8, 1), (8, 6), (0, 6)])
    assert sac.eram_state(config, irregular).alpha < config.alpha0
    fixed = make_config(use_eram=False)
    assert sac.eram_state(fixed, irregular).alpha == fixed.alpha0


# ---------------------------------------------------------------- targets and losses

def one_step_batch(disk, disk_grid, disk_box, config, terminal):
    ep = env.new_episode(disk, disk_grid, disk_box, n_points=config.n_points, delta=config.delta,
                         k_neighbors=config.k_neighbors)
    nxt, rewards, _ = env.step(ep, np.ones((config.n_points, 2)))
    batch = TransitionBatch(
        frames=[Frame(points=ep.contour.points, grid=disk_grid), Frame(points=nxt.contour.points, grid=disk_grid)],
        s_frame=np.array([0, 0, 0]),
        next_frame=np.array([1, 1, 1]),
        agent=np.array([0, 5, 11]),
        actions=np.ones((3, 2)),
        rewards=rewards[[0, 5, 11]],
        terminal=np.array([terminal] * 3),
    )
    return sac.prepare_batch(batch, config)


def networks(config, state_dim):
    return PolicyNetwork(state_dim, config, seed=1), TwinCritics(state_dim, config.critic_hidden, config.delta, seed=1)


def test_terminal_target_is_reward(disk, disk_grid, disk_box, make_config):
    config = make_config()
    prepared = one_step_batch(disk, disk_grid, disk_box, config, terminal=True)
    actor, critics = networks(config, prepared.states.shape[-1])
    noise = np.random.default_rng(0).standard_normal(prepared.states.shape[:2] + (2,))
    y = sac.compute_target(prepared, actor, critics, 0.2, 0.99, noise)
    assert np.array_equal(y, prepared.batch.rewards)


def test_non_terminal_target_uses_soft_min(disk, disk_grid, disk_box, make_config):
    config = make_config()
    prepared = one_step_batch(disk, disk_grid, disk_box, config, terminal=False)
    actor, critics = networks(config, prepared.states.shape[-1])
    noise = np.random.default_rng(0).standard_normal(prepared.states.shape[:2] + (2,))
    y = sac.compute_target(prepared, actor, critics, 0.2, 0.9, noise)

    a_all, logpi_all = actor.sample(prepared.states, noise)
    a_next = a_all.numpy()[1, [0, 5, 11]]
    logpi = logpi_all.numpy()[1, [0, 5, 11]]
    rows = prepared.next_rows
    q = np.minimum(critics.target1.forward(rows, a_next).numpy(), critics.target2.forward(rows, a_next).numpy())
    assert np.allclose(y, prepared.batch.rewards + 0.9 * (q - 0.2 * logpi), atol=1e-12)


def test_critic_loss_is_mean_squared_error(disk, disk_grid, disk_box, make_config):
    config = make_config()
    prepared = one_step_batch(disk, disk_grid, disk_box, config, terminal=True)
    _, critics = networks(config, prepared.states.shape[-1])
    y = np.array([0.5, -0.25, 1.0])
    l1, l2 = sac.critic_loss(prepared, critics, y)
    q1 = critics.critic1.forward(prepared.s_rows, prepared.batch.actions).numpy()
    assert l1.item() == pytest.approx(np.mean((y - q1) ** 2))
    assert l2.item() != l1.item()


def test_policy_loss_reaches_only_the_actor(disk, disk_grid, disk_box, make_config):
    config = make_config()
    prepared = one_step_batch(disk, disk_grid, disk_box, config, terminal=False)
    actor, critics = networks(config, prepared.states.shape[-1])
    noise = np.zeros(prepared.states.shape[:2] + (2,))
    loss = sac.policy_loss(prepared, actor, critics, 0.1, noise)
    grads = dc.backward(loss, actor.params)
    assert np.isfinite(loss.item())
    assert any(np.any(g != 0) for g in grads.values())


# ---------------------------------------------------------------- training loop

def test_zero_epochs_writes_initial_checkpoint(tmp_path, samples, make_config):
    config = make_config(epochs=0)
    latest = sac.train(config, samples, tmp_path / "run")
    assert latest.exists()
    assert (tmp_path / "run" / "checkpoints" / "epoch_0000.ckpt").exists()
    assert (tmp_path / "run" / "checkpoints" / "optimizer.ckpt").exists()
    assert read_log(tmp_path / "run" / "train_log.csv") == [sac.LOG_COLUMNS]
    tensors = load_tensors(latest)
    assert float(tensors["meta.state_dim"]) == env.state_dim(4, config.k_neighbors, config.embed_dim)
    assert any(name.startswith("target2.") for name in tensors)


def test_zero_learning_rate_leaves_weights_untouched(tmp_path, samples, make_config):
    config = make_config(epochs=1, lr=0.0)
    trainer = sac.SacTrainer(config, samples, tmp_path / "run")
    trainer.train()
    assert trainer.update_count > 0
    ckpts = tmp_path / "run" / "checkpoints"
    assert (ckpts / "epoch_0000.ckpt").read_bytes() == (ckpts / "epoch_0001.ckpt").read_bytes()


def test_one_epoch_log_row(tmp_path, samples, make_config):
    config = make_config(epochs=1)
    trainer = sac.SacTrainer(config, samples, tmp_path / "run")
    trainer.train()
    rows = read_log(tmp_path / "run" / "train_log.csv")
    assert len(rows) == 2
    row = dict(zip(rows[0], rows[1]))
    assert row["epoch"] == "1" and row["episodes"] == "2"
    assert 0.0 <= float(row["miou"]) <= 1.0
    assert 0.0 < float(row["alpha_mean"]) <= config.alpha0
    assert np.isfinite(float(row["critic1_loss"]))


def test_parallel_workers_are_deterministic(tmp_path, samples, make_config):
    config = make_config(epochs=1, workers=2)
    for name in ("a", "b"):
        sac.SacTrainer(config, samples, tmp_path / name).train()
    first = (tmp_path / "a" / "checkpoints" / "latest.ckpt").read_bytes()
    assert first == (tmp_path / "b" / "checkpoints" / "latest.ckpt").read_bytes()


def test_resume_truncates_log_and_continues(tmp_path, samples, make_config):
    out = tmp_path / "run"
    sac.SacTrainer(make_config(epochs=1), samples, out).train()
    with open(out / "train_log.csv", "a", encoding="utf-8") as handle:
        handle.write("7,0.1,0.1,0.1,0.1,0.1,0.1,0.1,0.1,0.1,2\n")

    trainer = sac.SacTrainer(make_config(epochs=2), samples, out)
    trainer.train(resume=True)
    rows = read_log(out / "train_log.csv")
    assert [r[0] for r in rows[1:]] == ["1", "2"]
    assert (out / "checkpoints" / "epoch_0002.ckpt").exists()


def test_resume_rejects_other_architecture(tmp_path, samples, make_config):
    out = tmp_path / "run"
    sac.SacTrainer(make_config(epochs=0), samples, out).train()
    with pytest.raises(CheckpointError):
        sac.SacTrainer(make_config(epochs=1, hidden_dim=6), samples, out).train(resume=True)


def test_non_finite_loss_writes_dump(tmp_path, samples, make_config, monkeypatch):
    def broken_loss(prepared, critics, y):
        nan = dc.Tensor(np.array(np.nan))
        return nan, nan

    monkeypatch.setattr(sac, "critic_loss", broken_loss)
    trainer = sac.SacTrainer(make_config(epochs=1), samples, tmp_path / "run")
    with pytest.raises(NonFiniteLossError):
        trainer.train()
    dump = json.loads((tmp_path / "run" / "nan_dump.json").read_text(encoding="utf-8"))
    assert dump["loss"] == "critic1_loss"
    assert dump["epoch"] == 0


# ---------------------------------------------------------------- evaluation

def test_evaluate_is_deterministic(tmp_path, samples, corpus_dir, make_config):
    config = make_config(epochs=0)
    latest = sac.train(config, samples, tmp_path / "run")
    eval_samples = synthdata.load_split(corpus_dir, "eval")
    first = sac.evaluate(latest, eval_samples, config)
    second = sac.evaluate(latest, eval_samples, config)
    assert first == second
    assert len(first.per_object) == len(eval_samples)


def test_evaluate_writes_traces(tmp_path, samples, make_config):
    config = make_config(epochs=0)
    latest = sac.train(config, samples, tmp_path / "run")
    sac.evaluate(latest, samples[:2], config, horizon=3, trace_dir=tmp_path / "traces")
    for sample in samples[:2]:
        assert (tmp_path / "traces" / f"{sample.entry.id}.svg").exists()
        assert len(read_log(tmp_path / "traces" / f"{sample.entry.id}.csv")) == 4


def test_evaluate_rejects_state_dim_mismatch(tmp_path, samples, make_config):
    config = make_config(epochs=0)
    latest = sac.train(config, samples, tmp_path / "run")
    narrow = [synthdata.CorpusSample(entry=s.entry, mask=s.mask, grid=FeatureGrid(values=s.grid.values[:3]))
              for s in samples]
    with pytest.raises(CheckpointError):
        sac.evaluate(latest, narrow, config)


def test_baseline_and_zero_perturbation(samples, make_config):
    config = make_config()
    plain = sac.baseline_report(samples, config)
    unperturbed = sac.baseline_report(samples, config, sac.Perturbation(0.0, 0.0))
    assert plain == unperturbed
    shaken = sac.baseline_report(samples, config, sac.Perturbation(0.2, 0.2))
    assert shaken.mdice != plain.mdice


def test_seeded_rollout_is_bit_identical(samples, make_config):
    config = make_config()
    actor = PolicyNetwork(sac.grid_state_dim(samples, config), config, seed=1)

    def records():
        result = sac.EpisodeResult()
        steps = list(sac.rollout(samples[0], actor, config, np.random.default_rng(11), result))
        return steps, result

    (first, res1), (second, res2) = records(), records()
    assert len(first) == config.horizon
    for a, b in zip(first, second):
        assert np.array_equal(a.next_points, b.next_points)
        assert np.array_equal(a.actions, b.actions)
        assert np.array_equal(a.rewards, b.rewards)
    assert res1.episode_return == res2.episode_return
    assert res1.report == res2.report
