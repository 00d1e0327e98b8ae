"""Shared helpers: realistic evaluator instances and lightweight stubs."""

import numpy as np

from mmwsched import beamforming, channel
from mmwsched.config import SimConfig
from mmwsched.schedulers import CandidateEvaluator


def make_instance(seed: int, weights=None, **overrides):
    """Full-pipeline CandidateEvaluator on a fresh channel realization."""
    cfg = SimConfig(**overrides)
    rng = np.random.default_rng(seed)
    geom = channel.ArrayGeometry.from_config(cfg)
    codebook = channel.build_codebook(
        geom, cfg.az_range_deg, cfg.el_range_deg,
        (cfg.codebook_az_count, cfg.codebook_el_count))
    topo = channel.generate_topology(cfg, rng)
    paths = channel.realize_long_block(topo, rng, cfg)
    snapshot = channel.evolve_short_block(paths, topo, 0, cfg)
    assignment = beamforming.assign_beams(snapshot, codebook)
    u_full = beamforming.effective_channels(snapshot, assignment, range(cfg.n_users))
    if weights is None:
        weights = rng.uniform(0.5, 2.0, cfg.n_users)
    bw = np.full(cfg.n_prb, float(cfg.bandwidth_factor))
    evaluator = CandidateEvaluator(u_full, assignment.beam_vectors, weights,
                                   cfg.tx_power_w, cfg.noise_w, bw)
    return evaluator, cfg


class StubEvaluator:
    """Duck-typed evaluator computing a set function without any physics."""

    def __init__(self, n_users: int, set_value, weights=None):
        self._value = set_value
        self._n = n_users
        self.weights = (np.ones(n_users) if weights is None
                        else np.asarray(weights, dtype=float))
        self.calls = 0
        self.effective_channel_s = 0.0
        self.precoder_s = 0.0

    @property
    def n_users(self):
        return self._n

    def evaluate(self, users):
        users = tuple(users)
        self.calls += 1
        value = float(self._value(users))
        rates = np.full(len(users), value / len(users)) if users else np.zeros(0)
        return value, rates
