"""Supervised neural scheduling: features, MLP, training, and the policy.

A plain three-hidden-layer sigmoid network maps a per-slot feature vector
to one selection probability per user. Labels are produced by greedy
incremental scheduling; training is mini-batch gradient descent on the
mean binary cross-entropy. The rounded outputs, capped by the weight-based
selection filter, form the served set.

Feature layout (length 2*I^2 + I*(n_tx + 1)):
  [ |mean_k u_kij|  (I^2) | angle(mean_k u_kij)  (I^2) |
    element phases of each user's beam  (I*n_tx) | weights (I) ]
Each block is normalized on its own. The phase blocks divide by their max
absolute value; the amplitude and weight blocks span tens of dB of dynamic
range, so they are log-compressed relative to their block maximum (60 dB
floor, exact zeros preserved) before mapping into [0, 1] -- plain max
scaling leaves those blocks with almost no usable variance.
"""

import time
from dataclasses import dataclass

import numpy as np

from .schedulers import (CandidateEvaluator, ComponentTimings, ScheduleDecision,
                         selection_filter)

CHECKPOINT_VERSION = 1
DATASET_VERSION = 1
HIDDEN_LAYERS = (1200, 500, 200)


def feature_length(n_users: int, n_tx: int) -> int:
    return 2 * n_users ** 2 + n_users * (n_tx + 1)


def feature_bounds(n_users: int, n_tx: int) -> tuple:
    """End offsets of the four feature blocks."""
    a = n_users ** 2
    return (a, 2 * a, 2 * a + n_users * n_tx, 2 * a + n_users * (n_tx + 1))


LOG_FLOOR = 1e-6   # 60 dB below the block maximum


def _normalize_block(block: np.ndarray) -> np.ndarray:
    peak = np.max(np.abs(block))
    if peak == 0.0:
        return np.zeros_like(block)
    return block / peak


def _normalize_magnitude_block(block: np.ndarray) -> np.ndarray:
    """Log-compressed scaling for non-negative, heavy-tailed magnitudes.

    Maps block/max through 1 + log10(.)/6, so the block maximum lands at 1,
    anything 60 dB down (or exactly zero) lands at 0.
    """
    peak = np.max(block)
    if peak == 0.0:
        return np.zeros_like(block)
    scaled = np.clip(block / peak, LOG_FLOOR, 1.0)
    out = 1.0 + np.log10(scaled) / 6.0
    return np.where(block == 0.0, 0.0, out)


def build_features(u_avg: np.ndarray, beam_vectors: np.ndarray,
                   weights: np.ndarray) -> np.ndarray:
    """Feature vector from the PRB-averaged effective channels, the
    assigned codewords, and the current scheduling weights."""
    parts = (
        _normalize_magnitude_block(np.abs(u_avg).ravel()),
        _normalize_block(np.angle(u_avg).ravel()),
        _normalize_block(np.angle(beam_vectors).ravel()),
        _normalize_magnitude_block(np.asarray(weights, dtype=float)),
    )
    return np.concatenate(parts)


# --------------------------------------------------------------------------
# Network

@dataclass
class MlpParams:
    weights: list   # [ (L0,L1), (L1,L2), (L2,L3), (L3,I) ]
    biases: list    # [ (L1,), (L2,), (L3,), (I,) ]

    @property
    def layer_dims(self) -> tuple:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights],
                         [b.copy() for b in self.biases])


def init_params(layer_dims, rng: np.random.Generator) -> MlpParams:
    """Uniform init in +-sqrt(6 / (fan_in + fan_out))."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def default_dims(n_users: int, n_tx: int) -> tuple:
    return (feature_length(n_users, n_tx),) + HIDDEN_LAYERS + (n_users,)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def mlp_forward(params: MlpParams, features: np.ndarray) -> np.ndarray:
    """Sigmoid activations through every layer; outputs strictly in (0, 1)."""
    features = np.asarray(features, dtype=float)
    single = features.ndim == 1
    a = features[None, :] if single else features
    if a.shape[1] != params.layer_dims[0]:
        raise ValueError(f"expected {params.layer_dims[0]} features, got {a.shape[1]}")
    for w, b in zip(params.weights, params.biases):
        a = _sigmoid(a @ w + b)
    return a[0] if single else a


def _forward_cached(params: MlpParams, x: np.ndarray) -> list:
    activations = [x]
    for w, b in zip(params.weights, params.biases):
        activations.append(_sigmoid(activations[-1] @ w + b))
    return activations


def bce_loss(outputs: np.ndarray, labels: np.ndarray, eps: float = 1e-12) -> float:
    """Cross-entropy averaged over users and samples."""
    z = np.clip(outputs, eps, 1.0 - eps)
    y = np.asarray(labels, dtype=float)
    return float(-np.mean(y * np.log(z) + (1.0 - y) * np.log(1.0 - z)))


def backprop(params: MlpParams, features: np.ndarray, labels: np.ndarray) -> tuple:
    """Mean-BCE gradients for one batch: (loss, dW list, db list).

    With sigmoid outputs the output-layer delta collapses to (z - y)
    scaled by the averaging constant.
    """
    x = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.atleast_2d(np.asarray(labels, dtype=float))
    acts = _forward_cached(params, x)
    z = acts[-1]
    loss = bce_loss(z, y)

    delta = (z - y) / y.size
    grads_w, grads_b = [], []
    for layer in range(len(params.weights) - 1, -1, -1):
        grads_w.append(acts[layer].T @ delta)
        grads_b.append(delta.sum(axis=0))
        if layer > 0:
            a_prev = acts[layer]
            delta = (delta @ params.weights[layer].T) * a_prev * (1.0 - a_prev)
    return loss, grads_w[::-1], grads_b[::-1]


# --------------------------------------------------------------------------
# Dataset

@dataclass
class Dataset:
    features: np.ndarray   # (N, L0)
    labels: np.ndarray     # (N, I) in {0, 1}
    train_fraction: float = 0.8

    def __len__(self) -> int:
        return self.features.shape[0]

    def split(self) -> tuple:
        cut = int(round(self.train_fraction * len(self)))
        return ((self.features[:cut], self.labels[:cut]),
                (self.features[cut:], self.labels[cut:]))


def generate_dataset(config, n_episodes: int, n_slots: int, seed: int = 0,
                     progress=None) -> Dataset:
    """Greedy-incremental teacher rollouts, one sample per slot.

    Every episode draws a fresh seed, hence fresh channels, user drop, and
    movement directions.
    """
    from . import protocol  # deferred: protocol imports this module

    base = config.with_overrides(
        scheduler="greedy-inc",
        n_long_blocks=-(-n_slots // config.slots_per_long_block),
    )
    seeds = np.random.SeedSequence(seed).spawn(n_episodes)
    feats, labels = [], []
    for ep, ep_seed in enumerate(seeds):
        collected = []

        def hook(features, decision):
            collected.append((features, decision.selected))

        protocol.run_episode(base, sample_hook=hook, seed_sequence=ep_seed)
        for features, selected in collected[:n_slots]:
            label = np.zeros(base.n_users, dtype=np.int8)
            label[list(selected)] = 1
            feats.append(features)
            labels.append(label)
        if progress is not None:
            progress(ep + 1, n_episodes)
    return Dataset(np.asarray(feats), np.asarray(labels))


def save_dataset(path, dataset: Dataset) -> None:
    np.savez_compressed(path, version=DATASET_VERSION,
                        features=dataset.features,
                        labels=dataset.labels,
                        train_fraction=dataset.train_fraction)


def load_dataset(path) -> Dataset:
    with np.load(path) as data:
        if int(data["version"]) != DATASET_VERSION:
            raise ValueError(f"unsupported dataset version {int(data['version'])}")
        return Dataset(data["features"], data["labels"], float(data["train_fraction"]))


# --------------------------------------------------------------------------
# Training and evaluation

def train(dataset: Dataset, params: MlpParams, batch_size: int = 16,
          epochs: int = 300, step_size: float = 0.01, seed: int = 0,
          progress=None) -> tuple:
    """Mini-batch gradient descent; returns (params, per-epoch train losses)."""
    (x_train, y_train), _ = dataset.split()
    n = x_train.shape[0]
    if n == 0:
        raise ValueError("empty training split")
    rng = np.random.default_rng(seed)
    params = params.copy()
    losses = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        epoch_loss, batches = 0.0, 0
        for start in range(0, n, batch_size):
            sel = order[start:start + batch_size]
            loss, gw, gb = backprop(params, x_train[sel], y_train[sel])
            for layer in range(len(params.weights)):
                params.weights[layer] -= step_size * gw[layer]
                params.biases[layer] -= step_size * gb[layer]
            epoch_loss += loss
            batches += 1
        losses.append(epoch_loss / batches)
        if progress is not None:
            progress(epoch + 1, epochs, losses[-1])
    return params, np.asarray(losses)


def per_user_accuracy(params: MlpParams, features: np.ndarray,
                      labels: np.ndarray) -> float:
    predictions = mlp_forward(params, features) >= 0.5
    return float(np.mean(predictions == (np.asarray(labels) > 0)))


def all_zeros_accuracy(labels: np.ndarray) -> float:
    return float(np.mean(np.asarray(labels) == 0))


# --------------------------------------------------------------------------
# Scheduling policy

def schedule_learned(params: MlpParams, features: np.ndarray, weights: np.ndarray,
                     evaluator: CandidateEvaluator, max_served: int) -> ScheduleDecision:
    """Round the network outputs, cap by weight, evaluate the final set."""
    t0 = time.perf_counter()
    e0, p0 = evaluator.effective_channel_s, evaluator.precoder_s
    outputs = mlp_forward(params, features)
    candidates = tuple(int(i) for i in np.nonzero(outputs >= 0.5)[0])
    selected = selection_filter(candidates, weights, max_served)
    wsr, rates_sel = evaluator.evaluate(selected)
    full = np.zeros(evaluator.n_users)
    if selected:
        full[list(selected)] = rates_sel
    eff = evaluator.effective_channel_s - e0
    pre = evaluator.precoder_s - p0
    search = max(time.perf_counter() - t0 - eff - pre, 0.0)
    return ScheduleDecision(selected, full, wsr, 1,
                            ComponentTimings(eff, pre, search))


# --------------------------------------------------------------------------
# Checkpoints

def save_checkpoint(path, params: MlpParams) -> None:
    arrays = {"version": CHECKPOINT_VERSION,
              "layer_dims": np.asarray(params.layer_dims)}
    for idx, (w, b) in enumerate(zip(params.weights, params.biases)):
        arrays[f"w{idx}"] = w
        arrays[f"b{idx}"] = b
    np.savez(path, **arrays)


def load_checkpoint(path) -> MlpParams:
    with np.load(path) as data:
        if int(data["version"]) != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {int(data['version'])}")
        dims = data["layer_dims"]
        weights = [data[f"w{i}"] for i in range(len(dims) - 1)]
        biases = [data[f"b{i}"] for i in range(len(dims) - 1)]
    return MlpParams(weights, biases)
