"""Two-timescale simulation loop.

Each long block: redraw cluster geometry, let every user derive its
combiner and pick its best codebook beam, and freeze those analog choices.
Each slot within the block: measure effective channels for all users,
run the configured scheduler (which solves the per-PRB ZF precoders for
its candidate sets), serve the selected users, and update the fairness
tracker. Pilot and feedback exchanges carry no rate cost.

Randomness is split into independent streams for topology, channel, and
scheduler draws so that runs with different schedulers on the same seed
see identical channel realizations.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import beamforming, channel, fairness, neural, schedulers
from .config import SimConfig
from .schedulers import CandidateEvaluator, ComponentTimings, ScheduleDecision

__all__ = ["SimConfig", "EpisodeResult", "run_episode", "profile_components"]


@dataclass
class EpisodeResult:
    config: SimConfig
    selected: list                    # per-slot tuples
    rates: np.ndarray                 # (T, I)
    weighted_sum_rates: np.ndarray    # (T,)
    pf_trace: np.ndarray              # (T,) metric after each slot's update
    cumulative_rates: np.ndarray      # (T, I) tracker state per slot
    beam_indices: np.ndarray          # (T, I)
    evaluation_counts: np.ndarray     # (T,)
    timings: list                     # per-slot ComponentTimings
    slot_wall_s: np.ndarray           # (T,) full slot wall-clock
    weights_trace: np.ndarray = field(default=None)  # (T, I) weights used at each slot

    @property
    def n_slots(self) -> int:
        return self.rates.shape[0]

    @property
    def final_pf(self) -> float:
        return float(self.pf_trace[-1])

    @property
    def mean_sum_rate(self) -> float:
        return float(self.rates.sum(axis=1).mean())

    @property
    def mean_served(self) -> float:
        return float(np.mean([len(s) for s in self.selected]))

    def mean_timings(self) -> dict:
        return {
            "effective_channel_s": float(np.mean([t.effective_channel_s for t in self.timings])),
            "precoder_s": float(np.mean([t.precoder_s for t in self.timings])),
            "search_s": float(np.mean([t.search_s for t in self.timings])),
            "slot_total_s": float(self.slot_wall_s.mean()),
        }


def _dispatch(name: str, evaluator: CandidateEvaluator, cfg: SimConfig,
              rng: np.random.Generator, mlp_params, features) -> ScheduleDecision:
    if name == "brute":
        return schedulers.schedule_brute_force(evaluator, cfg.n_users, cfg.max_served)
    if name == "greedy-inc":
        return schedulers.schedule_greedy_incremental(evaluator, cfg.n_users, cfg.max_served)
    if name == "greedy-dec":
        return schedulers.schedule_greedy_decremental(evaluator, cfg.n_users, cfg.max_served)
    if name == "sorting":
        return schedulers.schedule_sorting(evaluator, cfg.n_users, cfg.max_served)
    if name == "random":
        return schedulers.schedule_random(evaluator, rng, cfg.n_users, cfg.max_served)
    if name == "learned":
        if mlp_params is None:
            raise ValueError("the learned scheduler needs trained parameters")
        return neural.schedule_learned(mlp_params, features, evaluator.weights,
                                       evaluator, cfg.max_served)
    raise ValueError(f"unknown scheduler {name!r}")


def run_episode(config: SimConfig, mlp_params=None, sample_hook=None,
                seed_sequence=None, channel_sink=None) -> EpisodeResult:
    """Simulate one episode of n_long_blocks * slots_per_long_block slots.

    sample_hook(features, decision) fires once per slot, after scheduling
    but before the fairness update; used for dataset generation.
    channel_sink(ChannelTensor) receives every slot's channel for export.
    """
    config.validate()
    if seed_sequence is None:
        seed_sequence = np.random.SeedSequence(config.seed)
    topo_seq, chan_seq, sched_seq = seed_sequence.spawn(3)
    chan_rng = np.random.default_rng(chan_seq)
    sched_rng = np.random.default_rng(sched_seq)

    geometry = channel.ArrayGeometry.from_config(config)
    codebook = channel.build_codebook(geometry, config.az_range_deg,
                                      config.el_range_deg,
                                      (config.codebook_az_count, config.codebook_el_count))
    topology = channel.generate_topology(config, np.random.default_rng(topo_seq))
    tracker = fairness.RateTracker(config.n_users, config.ema_factor)
    bw = np.full(config.n_prb, float(config.bandwidth_factor))
    needs_features = sample_hook is not None or config.scheduler == "learned"

    n_slots = config.n_slots
    all_users = range(config.n_users)
    selected, timings, decisions = [], [], []
    rates = np.empty((n_slots, config.n_users))
    wsrs = np.empty(n_slots)
    pf_trace = np.empty(n_slots)
    cumulative = np.empty((n_slots, config.n_users))
    weights_trace = np.empty((n_slots, config.n_users))
    beam_trace = np.empty((n_slots, config.n_users), dtype=int)
    eval_counts = np.empty(n_slots, dtype=int)
    slot_wall = np.empty(n_slots)

    t = 0
    for _ in range(config.n_long_blocks):
        paths = channel.realize_long_block(topology, chan_rng, config, start_slot=t)
        snapshot = channel.evolve_short_block(paths, topology, t, config)
        assignment = beamforming.assign_beams(snapshot, codebook)

        for s in range(config.slots_per_long_block):
            wall0 = time.perf_counter()
            tensor = snapshot if s == 0 else channel.evolve_short_block(
                paths, topology, t, config)
            if channel_sink is not None:
                channel_sink(tensor)

            eff0 = time.perf_counter()
            u_full = beamforming.effective_channels(tensor, assignment, all_users)
            eff_build = time.perf_counter() - eff0

            weights = tracker.weights()
            evaluator = CandidateEvaluator(u_full, assignment.beam_vectors, weights,
                                           config.tx_power_w, config.noise_w, bw)
            features = None
            if needs_features:
                features = neural.build_features(u_full.mean(axis=0),
                                                 assignment.beam_vectors, weights)

            decision = _dispatch(config.scheduler, evaluator, config, sched_rng,
                                 mlp_params, features)
            if sample_hook is not None:
                sample_hook(features, decision)

            tracker.update(decision.per_user_rates)

            selected.append(decision.selected)
            rates[t] = decision.per_user_rates
            wsrs[t] = decision.weighted_sum_rate
            pf_trace[t] = tracker.pf_metric()
            cumulative[t] = tracker.cumulative
            weights_trace[t] = weights
            beam_trace[t] = assignment.beam_index
            eval_counts[t] = decision.evaluation_count
            timings.append(ComponentTimings(
                decision.timings.effective_channel_s + eff_build,
                decision.timings.precoder_s,
                decision.timings.search_s))
            decisions.append(decision)
            slot_wall[t] = time.perf_counter() - wall0

            topology = channel.advance_topology(topology, config.slot_duration_s)
            t += 1

    return EpisodeResult(config, selected, rates, wsrs, pf_trace, cumulative,
                         beam_trace, eval_counts, timings, slot_wall, weights_trace)


def profile_components(results) -> dict:
    """Aggregate mean per-slot component times over one or more episodes."""
    if isinstance(results, EpisodeResult):
        results = [results]
    keys = ("effective_channel_s", "precoder_s", "search_s", "slot_total_s")
    acc = {k: [] for k in keys}
    for res in results:
        m = res.mean_timings()
        for k in keys:
            acc[k].append(m[k])
    return {k: float(np.mean(v)) for k, v in acc.items()}
