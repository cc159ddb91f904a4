# Copyright 2024
# Directory: ContourMARL/tests/test_critic.py

import numpy as np
import pytest

from app.core.errors import CheckpointError, ShapeMismatchError
from app.services.critic import CriticNetwork, TwinCritics, critic_forward, soft_update


def test_forward_shapes(rng):
    critic = CriticNetwork(5, 8, delta=3.0, seed=0)
    q = critic_forward(critic, rng.normal(size=(4, 5)), rng.normal(size=(4, 2)))
    assert q.shape == (4,)
    batched = critic.forward(rng.normal(size=(2, 3, 5)), rng.normal(size=(2, 3, 2)))
    assert batched.shape == (2, 3)
    with pytest.raises(ShapeMismatchError):
        critic.forward(np.zeros((4, 5)), np.zeros((3, 2)))


def test_zero_final_layer_outputs_zero(rng):
    critic = CriticNetwork(5, 8, delta=3.0, zero_final=True)
    assert np.all(critic.forward(rng.normal(size=(6, 5)), rng.normal(size=(6, 2))).numpy() == 0.0)


def test_targets_start_equal_to_online():
    twins = TwinCritics(4, 6, delta=2.0, seed=3)
    for online, target in zip(twins.online, twins.targets):
        for name, tensor in online.params.items():
            assert np.array_equal(tensor.data, target.params[name].data)
    assert not np.array_equal(twins.critic1.params["W1"].data, twins.critic2.params["W1"].data)


def test_soft_update_copy_and_contraction(rng):
    online = CriticNetwork(4, 6, delta=2.0, seed=1).params
    target = CriticNetwork(4, 6, delta=2.0, seed=2).params
    gap = np.abs(online["W2"].data - target["W2"].data)
    soft_update(online, target, 0.5)
    assert np.allclose(np.abs(online["W2"].data - target["W2"].data), 0.5 * gap)
    soft_update(online, target, 1.0)
    assert np.array_equal(online["W2"].data, target["W2"].data)
    with pytest.raises(ValueError):
        soft_update(online, target, 0.0)


def test_twin_state_round_trip():
    source = TwinCritics(4, 6, delta=2.0, seed=0)
    state = source.state()
    assert {k.split(".")[0] for k in state} == {"critic1", "critic2", "target1", "target2"}
    restored = TwinCritics(4, 6, delta=2.0, seed=50)
    restored.load_state(state)
    assert np.array_equal(restored.target2.params["W3"].data, source.target2.params["W3"].data)


def test_load_state_mismatch():
    source = TwinCritics(4, 6, delta=2.0).state()
    with pytest.raises(CheckpointError):
        TwinCritics(4, 7, delta=2.0).load_state(source)
    del source["target1.b3"]
    with pytest.raises(CheckpointError):
        TwinCritics(4, 6, delta=2.0).load_state(source)
