"""User-selection strategies over a common candidate-set evaluator.

Every scheduler returns a ScheduleDecision holding the selected users,
their finalized rates, the weighted sum-rate, the search count, and the
wall-clock split between effective-channel assembly, precoder solving,
and the search logic itself.

The search count follows the closed-form bookkeeping convention: it sums
the candidate evaluations of rounds that changed the selection, so a full
greedy run to M users costs M(2I-M+1)/2 searches incrementally and
(I-M)(I+M+1)/2 decrementally; a trailing round that only confirms
termination is excluded from the count (the evaluator still tallies every
call it serves).
"""

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import beamforming
from .beamforming import IllConditionedError

BRUTE_FORCE_LIMIT = 10 ** 6


class IntractableError(RuntimeError):
    """Exhaustive search would exceed the candidate-set budget."""


@dataclass
class ComponentTimings:
    effective_channel_s: float = 0.0
    precoder_s: float = 0.0
    search_s: float = 0.0

    @property
    def total_s(self) -> float:
        return self.effective_channel_s + self.precoder_s + self.search_s


@dataclass
class ScheduleDecision:
    selected: tuple                 # ascending user indices
    per_user_rates: np.ndarray      # (I,), zero outside the selected set
    weighted_sum_rate: float
    evaluation_count: int
    timings: ComponentTimings = field(default_factory=ComponentTimings)


class CandidateEvaluator:
    """Maps a candidate user set to its weighted sum-rate under ZF.

    Wraps the full effective-channel tensor (K, I, I), the per-user analog
    codewords, the scheduling weights, and the power/noise/bandwidth
    constants. Ill-conditioned sets evaluate to zero. Pure: the same set
    always yields the same value. Tracks call counts and the time spent in
    submatrix assembly vs. precoder mathematics.
    """

    def __init__(self, u_full: np.ndarray, beam_vectors: np.ndarray,
                 weights: np.ndarray, p_k: float, noise_w: float,
                 bandwidth_factors: np.ndarray):
        self.u_full = u_full
        self.beam_vectors = beam_vectors
        self.weights = np.asarray(weights, dtype=float)
        self.p_k = p_k
        self.noise_w = noise_w
        self.bandwidth_factors = np.asarray(bandwidth_factors, dtype=float)
        self.calls = 0
        self.effective_channel_s = 0.0
        self.precoder_s = 0.0

    @property
    def n_users(self) -> int:
        return self.u_full.shape[1]

    def evaluate(self, users) -> tuple:
        """Weighted sum-rate and per-user rates (aligned with `users`)."""
        users = tuple(users)
        self.calls += 1
        if not users:
            return 0.0, np.zeros(0)

        t0 = time.perf_counter()
        idx = list(users)
        u_set = self.u_full[:, idx][:, :, idx]
        analog = self.beam_vectors[idx].T
        t1 = time.perf_counter()
        self.effective_channel_s += t1 - t0

        try:
            f_set = beamforming.solve_set_precoders(u_set, analog, self.p_k, users)
            power = np.abs(u_set @ f_set) ** 2             # (K, M, M), row = user
            desired = np.einsum("kmm->km", power)
            interference = power.sum(axis=2) - desired
            sinrs = desired / (interference + self.noise_w)
            rates = self.bandwidth_factors[:, None] * np.log2(1.0 + sinrs)
            per_user = rates.sum(axis=0)
            wsr = float(self.weights[idx] @ per_user)
        except IllConditionedError:
            self.precoder_s += time.perf_counter() - t1
            return 0.0, np.zeros(len(users))
        self.precoder_s += time.perf_counter() - t1
        return wsr, per_user


def _finish(evaluator: CandidateEvaluator, selected, wsr: float, rates_sel,
            count: int, t_start: float, eff0: float, pre0: float) -> ScheduleDecision:
    full = np.zeros(evaluator.n_users)
    if len(selected):
        full[list(selected)] = rates_sel
    eff = evaluator.effective_channel_s - eff0
    pre = evaluator.precoder_s - pre0
    search = max(time.perf_counter() - t_start - eff - pre, 0.0)
    return ScheduleDecision(tuple(selected), full, wsr, count,
                            ComponentTimings(eff, pre, search))


def schedule_brute_force(evaluator: CandidateEvaluator, n_users: int,
                         max_served: int) -> ScheduleDecision:
    """Exhaustive search over all non-empty sets of size <= max_served."""
    sizes = range(1, min(max_served, n_users) + 1)
    total = sum(math.comb(n_users, m) for m in sizes)
    if total > BRUTE_FORCE_LIMIT:
        raise IntractableError(
            f"{total} candidate sets exceed the exhaustive-search budget of {BRUTE_FORCE_LIMIT}")

    t0, e0, p0 = time.perf_counter(), evaluator.effective_channel_s, evaluator.precoder_s
    best_set, best_rates, best_wsr = (), np.zeros(0), 0.0
    count = 0
    for m in sizes:
        for cand in itertools.combinations(range(n_users), m):
            wsr, rates = evaluator.evaluate(cand)
            count += 1
            if wsr > best_wsr or (wsr == best_wsr and best_set and cand < best_set):
                best_set, best_rates, best_wsr = cand, rates, wsr
    return _finish(evaluator, best_set, best_wsr, best_rates, count, t0, e0, p0)


def schedule_greedy_incremental(evaluator: CandidateEvaluator, n_users: int,
                                max_served: int) -> ScheduleDecision:
    """Grow the set one user at a time while the weighted sum-rate improves."""
    t0, e0, p0 = time.perf_counter(), evaluator.effective_channel_s, evaluator.precoder_s
    selected: list = []
    current_wsr, current_rates = 0.0, np.zeros(0)
    count = 0
    for _ in range(min(max_served, n_users)):
        remaining = [i for i in range(n_users) if i not in selected]
        best_user, best_wsr, best_rates = None, current_wsr, None
        round_evals = 0
        for i in remaining:
            wsr, rates = evaluator.evaluate(tuple(sorted(selected + [i])))
            round_evals += 1
            if wsr > best_wsr:
                best_user, best_wsr, best_rates = i, wsr, rates
        if best_user is None:
            break
        selected = sorted(selected + [best_user])
        current_wsr, current_rates = best_wsr, best_rates
        count += round_evals
    return _finish(evaluator, selected, current_wsr, current_rates, count, t0, e0, p0)


def schedule_greedy_decremental(evaluator: CandidateEvaluator, n_users: int,
                                max_served: int) -> ScheduleDecision:
    """Shrink from the full set while removal improves or the cap binds.

    Removal ties (common while an oversized set is rank-deficient and every
    candidate evaluates to zero) drop the lightest-weight user, so forced
    removals sacrifice the best-served users instead of a fixed index range.
    """
    t0, e0, p0 = time.perf_counter(), evaluator.effective_channel_s, evaluator.precoder_s
    selected = list(range(n_users))
    current_wsr, current_rates = evaluator.evaluate(tuple(selected))
    count = 0
    while len(selected) > 1:
        best_pos, best_wsr, best_rates = None, -np.inf, None
        for pos, user in enumerate(selected):
            cand = tuple(selected[:pos] + selected[pos + 1:])
            wsr, rates = evaluator.evaluate(cand)
            better = wsr > best_wsr or (
                wsr == best_wsr
                and evaluator.weights[user] < evaluator.weights[selected[best_pos]])
            if better:
                best_pos, best_wsr, best_rates = pos, wsr, rates
        if len(selected) > max_served or best_wsr > current_wsr:
            count += len(selected)
            del selected[best_pos]
            current_wsr, current_rates = best_wsr, best_rates
        else:
            break
    return _finish(evaluator, selected, current_wsr, current_rates, count, t0, e0, p0)


def schedule_sorting(evaluator: CandidateEvaluator, n_users: int,
                     max_served: int) -> ScheduleDecision:
    """Rank users by their interference-free weighted rate, take the top.

    Solo rates come from singleton evaluations (full power, diagonal
    effective channel); the chosen set is then re-evaluated jointly so the
    reported rates include the true inter-user interference.
    """
    t0, e0, p0 = time.perf_counter(), evaluator.effective_channel_s, evaluator.precoder_s
    solo = np.empty(n_users)
    for i in range(n_users):
        solo[i], _ = evaluator.evaluate((i,))
    order = sorted(range(n_users), key=lambda i: (-solo[i], i))
    selected = tuple(sorted(order[:min(max_served, n_users)]))
    wsr, rates = evaluator.evaluate(selected)
    return _finish(evaluator, selected, wsr, rates, n_users + 1, t0, e0, p0)


def schedule_random(evaluator: CandidateEvaluator, rng: np.random.Generator,
                    n_users: int, max_served: int) -> ScheduleDecision:
    """Uniformly sample min(I, I_max) distinct users."""
    t0, e0, p0 = time.perf_counter(), evaluator.effective_channel_s, evaluator.precoder_s
    pick = rng.choice(n_users, size=min(max_served, n_users), replace=False)
    selected = tuple(sorted(int(i) for i in pick))
    wsr, rates = evaluator.evaluate(selected)
    return _finish(evaluator, selected, wsr, rates, 1, t0, e0, p0)


def selection_filter(candidates, weights, max_served: int) -> tuple:
    """Cap a candidate set at max_served users, keeping the heaviest weights.

    Sets already within the cap pass through unchanged; weight ties keep
    the lower user index.
    """
    candidates = tuple(candidates)
    if len(candidates) <= max_served:
        return candidates
    weights = np.asarray(weights, dtype=float)
    kept = sorted(candidates, key=lambda i: (-weights[i], i))[:max_served]
    return tuple(sorted(kept))
