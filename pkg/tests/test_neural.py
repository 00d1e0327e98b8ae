"""Features, MLP forward/backward, training, and the learned policy."""

import numpy as np
import pytest
from conftest import StubEvaluator

from mmwsched import neural
from mmwsched.config import SimConfig


def small_net(seed=0, dims=(4, 3, 3, 3, 2)):
    return neural.init_params(dims, np.random.default_rng(seed))


# --------------------------------------------------------------------------
# Features

def test_feature_length_default_setup():
    assert neural.feature_length(20, 16) == 1140


def test_feature_length_and_bounds_small_case():
    assert neural.feature_length(2, 4) == 18
    assert neural.feature_bounds(2, 4) == (4, 8, 16, 18)


def test_feature_blocks_layout_and_normalization():
    rng = np.random.default_rng(0)
    n_users, n_tx = 3, 4
    u_avg = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    beams = np.exp(1j * rng.uniform(-np.pi, np.pi, (3, 4)))
    weights = rng.uniform(0.1, 5.0, 3)
    feats = neural.build_features(u_avg, beams, weights)
    b1, b2, b3, b4 = neural.feature_bounds(n_users, n_tx)
    assert feats.shape == (b4,)
    amp = feats[:b1]
    expected_amp = 1 + np.log10(np.abs(u_avg).ravel() / np.abs(u_avg).max()) / 6
    assert np.allclose(amp, expected_amp)
    assert amp.max() == pytest.approx(1.0)   # block maximum lands at 1
    phase = feats[b1:b2]
    expected_phase = np.angle(u_avg).ravel()
    assert np.allclose(phase, expected_phase / np.abs(expected_phase).max())
    wblock = feats[b3:b4]
    assert np.allclose(wblock, 1 + np.log10(weights / weights.max()) / 6)
    assert np.max(np.abs(feats)) <= 1.0 + 1e-12


def test_magnitude_block_monotone_and_floor():
    block = np.array([0.0, 1e-9, 1e-3, 0.5, 1.0])
    out = neural._normalize_magnitude_block(block)
    assert out[0] == 0.0                       # exact zero preserved
    assert out[1] == pytest.approx(0.0)        # below the 60 dB floor
    assert np.all(np.diff(out) >= 0)
    assert out[-1] == pytest.approx(1.0)


def test_zero_effective_channels_give_zero_amplitude_block():
    feats = neural.build_features(np.zeros((3, 3), dtype=complex),
                                  np.ones((3, 4), dtype=complex),
                                  np.ones(3))
    b1, _, _, _ = neural.feature_bounds(3, 4)
    assert np.all(feats[:b1] == 0.0)


# --------------------------------------------------------------------------
# Forward pass

def test_forward_all_zero_params_outputs_half():
    params = small_net()
    for w in params.weights:
        w[:] = 0.0
    out = neural.mlp_forward(params, np.zeros(4))
    assert np.allclose(out, 0.5)


def test_forward_monotone_in_output_bias():
    params = small_net(1)
    x = np.random.default_rng(2).standard_normal(4)
    base = neural.mlp_forward(params, x)
    params.biases[-1][0] += 0.5
    bumped = neural.mlp_forward(params, x)
    assert bumped[0] > base[0]
    assert bumped[1] == pytest.approx(base[1])


def test_forward_matches_scalar_loop_oracle():
    params = small_net(3)
    x = np.random.default_rng(4).standard_normal(4)
    a = list(x)
    for w, b in zip(params.weights, params.biases):
        nxt = []
        for j in range(w.shape[1]):
            z = b[j] + sum(a[i] * w[i, j] for i in range(w.shape[0]))
            nxt.append(1.0 / (1.0 + np.exp(-z)))
        a = nxt
    assert np.allclose(neural.mlp_forward(params, x), a, rtol=1e-12)


def test_forward_outputs_strictly_inside_unit_interval():
    params = small_net(5)
    rng = np.random.default_rng(6)
    outs = neural.mlp_forward(params, rng.standard_normal((50, 4)))
    assert np.all(outs > 0.0) and np.all(outs < 1.0)


def test_forward_rejects_wrong_width():
    with pytest.raises(ValueError):
        neural.mlp_forward(small_net(), np.zeros(5))


# --------------------------------------------------------------------------
# Gradients and training

def test_backprop_matches_central_finite_differences():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((3, 4))
    y = (rng.uniform(size=(3, 2)) < 0.4).astype(float)
    eps = 1e-6
    for point in range(3):
        params = small_net(seed=10 + point)
        _, grads_w, grads_b = neural.backprop(params, x, y)
        for layer in range(4):
            w = params.weights[layer]
            for idx in [(0, 0), (w.shape[0] - 1, w.shape[1] - 1)]:
                w[idx] += eps
                up = neural.bce_loss(neural.mlp_forward(params, x), y)
                w[idx] -= 2 * eps
                down = neural.bce_loss(neural.mlp_forward(params, x), y)
                w[idx] += eps
                fd = (up - down) / (2 * eps)
                assert grads_w[layer][idx] == pytest.approx(fd, rel=1e-5, abs=1e-10)


def test_training_memorizes_single_sample():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((1, 4))
    y = np.array([[1.0, 0.0]])
    dataset = neural.Dataset(x, y, train_fraction=1.0)
    params, losses = neural.train(dataset, small_net(9), batch_size=1,
                                  epochs=300, step_size=2.0)
    assert losses[-1] < 0.01
    assert losses[-1] <= losses[0]


def test_training_rejects_empty_dataset():
    dataset = neural.Dataset(np.zeros((0, 4)), np.zeros((0, 2)))
    with pytest.raises(ValueError):
        neural.train(dataset, small_net())


def test_dataset_split_fractions():
    dataset = neural.Dataset(np.zeros((12000, 5)), np.zeros((12000, 2)),
                             train_fraction=0.8)
    (x_tr, _), (x_ev, _) = dataset.split()
    assert x_tr.shape[0] == 9600
    assert x_ev.shape[0] == 2400


# --------------------------------------------------------------------------
# Dataset generation

TINY = dict(n_users=4, n_tx_h=4, n_tx_v=2, n_rf_chains=2, max_served=2,
            n_prb=2, codebook_az_count=8, codebook_el_count=2)


def test_generate_dataset_single_sample():
    cfg = SimConfig(**TINY)
    dataset = neural.generate_dataset(cfg, n_episodes=1, n_slots=1, seed=0)
    assert len(dataset) == 1
    assert dataset.features.shape == (1, neural.feature_length(4, 8))
    assert dataset.labels.shape == (1, 4)


def test_generate_dataset_counts_and_label_feasibility():
    cfg = SimConfig(**TINY)
    dataset = neural.generate_dataset(cfg, n_episodes=3, n_slots=5, seed=1)
    assert len(dataset) == 15
    assert np.all(dataset.labels.sum(axis=1) <= 2)
    assert np.all((dataset.labels == 0) | (dataset.labels == 1))


def test_generate_dataset_episodes_differ():
    cfg = SimConfig(**TINY)
    dataset = neural.generate_dataset(cfg, n_episodes=2, n_slots=3, seed=2)
    assert not np.array_equal(dataset.features[0], dataset.features[3])


# --------------------------------------------------------------------------
# Learned policy

def forced_output_params(n_users, logits):
    """Network whose outputs are sigmoid(logits) regardless of input."""
    dims = (neural.feature_length(n_users, 8), 3, 3, 3, n_users)
    params = neural.init_params(dims, np.random.default_rng(0))
    for w in params.weights:
        w[:] = 0.0
    for b in params.biases[:-1]:
        b[:] = 0.0
    params.biases[-1][:] = logits
    return params


def test_learned_empty_when_all_outputs_below_half():
    n = 4
    params = forced_output_params(n, [-3.0] * n)
    stub = StubEvaluator(n, lambda s: float(len(s)))
    feats = np.zeros(neural.feature_length(n, 8))
    decision = neural.schedule_learned(params, feats, np.ones(n), stub, 2)
    assert decision.selected == ()
    assert np.all(decision.per_user_rates == 0.0)


def test_learned_passthrough_when_within_cap():
    n = 4
    params = forced_output_params(n, [3.0, -3.0, 3.0, -3.0])
    stub = StubEvaluator(n, lambda s: float(len(s)))
    feats = np.zeros(neural.feature_length(n, 8))
    decision = neural.schedule_learned(params, feats, np.ones(n), stub, 2)
    assert decision.selected == (0, 2)


def test_learned_caps_by_weight_matches_sort_oracle():
    n = 16
    logits = [3.0] * 12 + [-3.0] * 4
    params = forced_output_params(n, logits)
    rng = np.random.default_rng(11)
    weights = rng.uniform(0, 1, n)
    stub = StubEvaluator(n, lambda s: float(len(s)))
    feats = np.zeros(neural.feature_length(n, 8))
    decision = neural.schedule_learned(params, feats, weights, stub, 8)
    oracle = tuple(sorted(sorted(range(12), key=lambda i: (-weights[i], i))[:8]))
    assert decision.selected == oracle
    assert len(decision.selected) == 8


def test_exact_half_output_counts_as_selected():
    n = 2
    params = forced_output_params(n, [0.0, -1.0])   # sigmoid(0) == 0.5 exactly
    stub = StubEvaluator(n, lambda s: float(len(s)))
    feats = np.zeros(neural.feature_length(n, 8))
    assert neural.schedule_learned(params, feats, np.ones(n), stub, 2).selected == (0,)


# --------------------------------------------------------------------------
# Persistence

def test_checkpoint_roundtrip(tmp_path):
    params = small_net(12)
    path = tmp_path / "model.npz"
    neural.save_checkpoint(path, params)
    loaded = neural.load_checkpoint(path)
    assert loaded.layer_dims == params.layer_dims
    for a, b in zip(loaded.weights, params.weights):
        assert np.array_equal(a, b)
    x = np.random.default_rng(13).standard_normal(4)
    assert np.array_equal(neural.mlp_forward(loaded, x),
                          neural.mlp_forward(params, x))


def test_dataset_roundtrip(tmp_path):
    rng = np.random.default_rng(14)
    dataset = neural.Dataset(rng.standard_normal((7, 6)),
                             (rng.uniform(size=(7, 3)) < 0.5).astype(np.int8))
    path = tmp_path / "data.npz"
    neural.save_dataset(path, dataset)
    loaded = neural.load_dataset(path)
    assert np.array_equal(loaded.features, dataset.features)
    assert np.array_equal(loaded.labels, dataset.labels)
    assert loaded.train_fraction == dataset.train_fraction


def test_accuracy_helpers():
    labels = np.array([[0, 0, 1], [0, 0, 0]])
    assert neural.all_zeros_accuracy(labels) == pytest.approx(5 / 6)
    params = forced_output_params(3, [-5.0, -5.0, 5.0])
    feats = np.zeros((2, neural.feature_length(3, 8)))
    assert neural.per_user_accuracy(params, feats, labels) == pytest.approx(5 / 6)
