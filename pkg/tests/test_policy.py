# Copyright 2024
# Directory: ContourMARL/tests/test_policy.py

import math
import time

import numpy as np
import pytest

from app.core import diffcore as dc
from app.core.errors import CheckpointError, ShapeMismatchError
from app.services import environment as env
from app.services import policy


def branch_params(rng, d_in, d_h, d_out=None):
    d_out = d_out or d_h
    a = rng.normal(size=(d_h, d_h))
    return {
        "A": dc.Tensor(a * 0.8 / np.linalg.norm(a)),
        "B": dc.Tensor(rng.normal(size=(d_h, d_in))),
        "C_out": dc.Tensor(rng.normal(size=(d_out, d_h))),
        "D_skip": dc.Tensor(rng.normal(size=(d_out, d_in))),
    }


def direct_scan(x, p):
    A, B, C, D = (p[k].data for k in ("A", "B", "C_out", "D_skip"))
    h = np.zeros(A.shape[0])
    ys, hs = [], []
    for t in range(x.shape[0]):
        h = A @ h + B @ x[t]
        hs.append(h)
        ys.append(C @ h + D @ x[t])
    return np.array(ys), np.array(hs)


def softmax_rows(m):
    e = np.exp(m - m.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def test_forward_scan_matches_recurrence(rng):
    x = rng.normal(size=(9, 3))
    p = branch_params(rng, 3, 4)
    y, h = policy.ss2d_scan(x, p, "fwd")
    y_ref, h_ref = direct_scan(x, p)
    assert np.allclose(y.numpy(), y_ref, atol=1e-12)
    assert np.allclose(h.numpy(), h_ref, atol=1e-12)


def test_backward_scan_is_flipped_forward_scan(rng):
    x = rng.normal(size=(6, 2))
    p = branch_params(rng, 2, 3)
    y_bwd, h_bwd = policy.ss2d_scan(x, p, "bwd")
    y_ref, h_ref = direct_scan(x[::-1], p)
    assert np.allclose(y_bwd.numpy(), y_ref[::-1], atol=1e-12)
    assert np.allclose(h_bwd.numpy(), h_ref[::-1], atol=1e-12)
    with pytest.raises(ValueError):
        policy.ss2d_scan(x, p, "sideways")


def test_full_window_fusion_is_dense_cross_attention(rng):
    n, d = 7, 3
    hf, hb = rng.normal(size=(n, d)), rng.normal(size=(n, d))
    wq, wk, wv = (rng.normal(size=(d, d)) for _ in range(3))
    fused = policy.bchfm_fuse(hf, hb, dc.Tensor(wq), dc.Tensor(wk), dc.Tensor(wv), window=n).numpy()

    def attend(q_src, kv_src):
        scores = (q_src @ wq) @ (kv_src @ wk).T / math.sqrt(d)
        return softmax_rows(scores) @ (kv_src @ wv)

    assert np.allclose(fused, attend(hf, hb) + attend(hb, hf), atol=1e-10)


def test_fusion_pads_partial_windows(rng):
    h = rng.normal(size=(2, 10, 4))
    w = dc.Tensor(np.eye(4))
    fused = policy.bchfm_fuse(h, h, w, w, w, window=4)
    assert fused.shape == (2, 10, 4)
    with pytest.raises(ShapeMismatchError):
        policy.bchfm_fuse(h, h[:, :9], w, w, w, window=4)


def test_padding_repeats_the_last_row(rng):
    d = 3
    hf, hb = rng.normal(size=(5, d)), rng.normal(size=(5, d))
    wq, wk, wv = (rng.normal(size=(d, d)) for _ in range(3))
    fused = policy.bchfm_fuse(hf, hb, dc.Tensor(wq), dc.Tensor(wk), dc.Tensor(wv), window=4).numpy()
    # the second window holds row 4 four times, so attention there is uniform over copies
    assert fused.shape == (5, d)
    assert np.allclose(fused[4], hb[4] @ wv + hf[4] @ wv, atol=1e-12)


def fusion_seconds(rng, n, d=16, window=8, repeats=7, calls=20):
    h_fwd, h_bwd = rng.normal(size=(n, d)), rng.normal(size=(n, d))
    wq, wk, wv = (dc.Tensor(rng.normal(size=(d, d))) for _ in range(3))
    policy.bchfm_fuse(h_fwd, h_bwd, wq, wk, wv, window)
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for _ in range(calls):
            policy.bchfm_fuse(h_fwd, h_bwd, wq, wk, wv, window)
        best = min(best, time.perf_counter() - start)
    return best


def test_fusion_cost_grows_at_most_linearly(rng):
    t32, t64, t128 = (fusion_seconds(rng, n) for n in (32, 64, 128))
    assert t64 / t32 <= 2 * 1.5
    assert t128 / t32 <= 4 * 1.5


def test_zero_gate_layer_averages_independent_scans(rng):
    x = rng.normal(size=(8, 3))
    layer = {}
    for branch in ("fwd", "bwd"):
        for key, value in branch_params(rng, 3, 4).items():
            layer[f"{branch}.{key}"] = value
    for key in ("W_Q", "W_K", "W_V"):
        layer[key] = dc.Tensor(rng.normal(size=(4, 4)))
    layer["gamma"] = dc.Tensor(np.array(0.0))
    out = policy.layer_forward(dc.Tensor(x), layer, window=4).numpy()
    y_f, _ = direct_scan(x, {k: layer[f"fwd.{k}"] for k in policy.BRANCH_KEYS})
    y_b, _ = direct_scan(x[::-1], {k: layer[f"bwd.{k}"] for k in policy.BRANCH_KEYS})
    assert np.allclose(out, 0.5 * (y_f + y_b[::-1]), atol=1e-12)


def test_squashed_log_prob_formula(rng):
    mu, log_sigma, u = rng.normal(size=5), rng.normal(size=5) * 0.3, rng.normal(size=5)
    delta = 4.0
    got = policy.squashed_log_prob(u, mu, log_sigma, delta).numpy()
    sigma = np.exp(log_sigma)
    normal = -0.5 * ((u - mu) / sigma) ** 2 - log_sigma - 0.5 * math.log(2 * math.pi)
    expected = normal - np.log(delta * (1.0 - np.tanh(u) ** 2))
    assert np.allclose(got, expected, atol=1e-10)


def test_sample_action_stays_inside_box(rng):
    mu = dc.Tensor(rng.normal(size=(50, 2)) * 20)
    sigma = dc.Tensor(np.full((50, 2), 3.0))
    a, logpi = policy.sample_action(mu, sigma, delta=2.5, seed=4)
    assert np.all(np.abs(a.numpy()) < 2.5)
    assert logpi.shape == (50,)
    assert np.all(np.isfinite(logpi.numpy()))
    again, _ = policy.sample_action(mu, sigma, delta=2.5, seed=4)
    assert np.array_equal(a.numpy(), again.numpy())


def test_network_shapes_and_bounds(disk, disk_grid, disk_box, make_config):
    config = make_config()
    ep = env.new_episode(disk, disk_grid, disk_box, n_points=12, delta=config.delta, k_neighbors=2)
    states = env.state_matrix(ep, config.k_neighbors, config.embed_dim, config.patch_radius)
    net = policy.PolicyNetwork(states.shape[1], config, seed=1)
    mu, log_sigma = net.distribution(states)
    assert mu.shape == (12, 2) and log_sigma.shape == (12, 2)
    assert np.all(log_sigma.numpy() >= policy.LOG_SIGMA_MIN)
    assert np.all(log_sigma.numpy() <= policy.LOG_SIGMA_MAX)

    mu_states, sigma = policy.policy_forward(env.build_states(ep, 2, 4, 2.0), net, disk.width, disk.height)
    assert np.allclose(mu_states.numpy(), mu.numpy())
    assert np.allclose(sigma.numpy(), np.exp(log_sigma.numpy()))

    actions = policy.ActorPolicy(net, config).act(ep)
    assert np.all(np.abs(actions) <= config.delta)


def test_batched_encoding_matches_single(rng, make_config):
    config = make_config()
    net = policy.PolicyNetwork(6, config, seed=2)
    batch = rng.normal(size=(3, 5, 6))
    mu_batch, _ = net.distribution(batch)
    for b in range(3):
        mu_one, _ = net.distribution(batch[b])
        assert np.allclose(mu_batch.numpy()[b], mu_one.numpy(), atol=1e-12)


def test_input_validation(make_config):
    net = policy.PolicyNetwork(6, make_config(), seed=0)
    with pytest.raises(TypeError):
        net.distribution([[0.0] * 6])
    with pytest.raises(ShapeMismatchError):
        net.distribution(np.zeros((4, 5)))
    with pytest.raises(ValueError):
        net.distribution(np.full((4, 6), np.nan))
    with pytest.raises(ValueError):
        policy.policy_forward([], net)


def test_fusion_switch_freezes_gates(make_config):
    on = policy.PolicyNetwork(6, make_config(layers=2), seed=0)
    off = policy.PolicyNetwork(6, make_config(layers=2, use_fusion=False), seed=0)
    assert on.frozen == []
    assert off.frozen == ["layer0.fusion.gamma", "layer1.fusion.gamma"]
    assert float(off.params["layer0.fusion.gamma"].data) == 0.0


def test_load_state_mismatch_raises_checkpoint_error(make_config):
    small = policy.PolicyNetwork(6, make_config(), seed=0)
    wide = policy.PolicyNetwork(6, make_config(hidden_dim=8), seed=0)
    with pytest.raises(CheckpointError):
        small.load_state(wide.params.state())
    with pytest.raises(CheckpointError):
        small.load_state({})
    twin = policy.PolicyNetwork(6, make_config(), seed=9)
    twin.load_state(small.params.state())
    assert np.array_equal(twin.params["head.W1"].data, small.params["head.W1"].data)
