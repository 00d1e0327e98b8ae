"""Analog beam selection, effective channels, ZF precoding, and rates.

The digital precoder inverts the effective-channel matrix of the selected
users (rows = measuring user, columns = beam owner), so that row i of U
times column j of F is delta_ij: exact interference nulling per PRB.
"""

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelTensor, Codebook

CONDITION_LIMIT = 1e12


class IllConditionedError(RuntimeError):
    """Effective channel too close to singular for ZF inversion."""

    def __init__(self, cond: float, users=None):
        self.cond = cond
        self.users = tuple(users) if users is not None else None
        detail = f" for users {self.users}" if self.users else ""
        super().__init__(f"effective channel condition {cond:.3e} exceeds limit{detail}")


@dataclass
class BeamAssignment:
    """Per-user best beams and receive combiners for one long block."""
    beam_index: np.ndarray     # (I,) int
    beam_vectors: np.ndarray   # (I, n_tx) complex codewords
    combiners: np.ndarray      # (I, n_rx) complex, unit norm

    def analog_matrix(self, users) -> np.ndarray:
        """Analog precoder for a selected set: one codeword column per user."""
        return self.beam_vectors[list(users)].T


def derive_combiner(h_avg: np.ndarray) -> np.ndarray:
    """Receive combiner maximizing the combined channel norm.

    Dominant right singular vector of the PRB-averaged channel (n_tx, n_rx);
    reduces to the scalar 1 for single-antenna users. An all-zero channel
    falls back to the first canonical basis vector.
    """
    h_avg = np.asarray(h_avg)
    n_rx = h_avg.shape[1]
    if n_rx == 1:
        return np.ones(1, dtype=complex)
    if not np.any(h_avg):
        e1 = np.zeros(n_rx, dtype=complex)
        e1[0] = 1.0
        return e1
    _, _, vh = np.linalg.svd(h_avg)
    g = vh[0].conj()
    anchor = g[np.argmax(np.abs(g))]
    g = g * (anchor.conj() / abs(anchor))
    return g / np.linalg.norm(g)


def select_best_beam(channels: np.ndarray, combiner: np.ndarray, codebook: Codebook) -> int:
    """Best codebook beam by PRB-averaged combined beamforming power.

    channels: (K, n_tx, n_rx) for one user. Ties break to the lowest index.
    """
    v = np.einsum("kmn,n->km", channels, combiner).conj()   # rows g^H h^H, (K, n_tx)
    metric = np.mean(np.abs(v @ codebook.beams.T) ** 2, axis=0)
    return int(np.argmax(metric))


def assign_beams(channels: ChannelTensor, codebook: Codebook) -> BeamAssignment:
    """Run beam training for all users on one channel snapshot."""
    h = channels.h
    n_users = h.shape[1]
    combiners = np.empty((n_users, h.shape[3]), dtype=complex)
    indices = np.empty(n_users, dtype=int)
    for i in range(n_users):
        combiners[i] = derive_combiner(h[:, i].mean(axis=0))
        indices[i] = select_best_beam(h[:, i], combiners[i], codebook)
    return BeamAssignment(indices, codebook.beams[indices].copy(), combiners)


def effective_channels(channels: ChannelTensor, assignment: BeamAssignment,
                       users) -> np.ndarray:
    """Scalar channels seen by each user's combiner through each user's beam.

    Returns (K, M, M) with entry [k, i, j] = g_i^H h_{k,i}^H psi_j over the
    given user set.
    """
    users = list(users)
    h = channels.h[:, users]                              # (K, M, n_tx, n_rx)
    g = assignment.combiners[users]                       # (M, n_rx)
    v = np.einsum("kimn,in->kim", h, g).conj()            # (K, M, n_tx)
    return np.einsum("kim,jm->kij", v, assignment.beam_vectors[users])


def zf_precoder(u_mat: np.ndarray, users=None) -> np.ndarray:
    """Right-inverse precoder U^H (U U^H)^-1 for one PRB.

    Raises IllConditionedError when cond(U U^H) exceeds 1e12; callers treat
    such candidate sets as yielding zero rate.
    """
    gram = u_mat @ u_mat.conj().T
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise IllConditionedError(float(cond), users)
    return u_mat.conj().T @ np.linalg.inv(gram)


def normalize_precoder(f_mat: np.ndarray, analog: np.ndarray, p_k: float,
                       n_streams: int) -> np.ndarray:
    """Scale each column so its composite beam carries exactly p_k/M power."""
    composite = analog @ f_mat                          # (n_tx, M)
    norms = np.linalg.norm(composite, axis=0)
    if np.any(norms == 0.0):
        raise IllConditionedError(np.inf, None)
    return f_mat * (math.sqrt(p_k / n_streams) / norms)[None, :]


def sinr(u_mat: np.ndarray, f_norm: np.ndarray, stream: int, noise_w: float) -> float:
    """Post-combining SINR of one scheduled stream on one PRB."""
    row = u_mat[stream]
    signals = np.abs(row @ f_norm) ** 2                 # (M,)
    desired = signals[stream]
    interference = signals.sum() - desired
    return float(desired / (interference + noise_w))


def all_sinrs(u_mat: np.ndarray, f_norm: np.ndarray, noise_w: float) -> np.ndarray:
    """SINRs of every scheduled stream on one PRB."""
    power = np.abs(u_mat @ f_norm) ** 2                 # (M, M), row = user
    desired = np.diag(power)
    interference = power.sum(axis=1) - desired
    return desired / (interference + noise_w)


def user_rate(sinrs: np.ndarray, bandwidth_factors: np.ndarray) -> float:
    """Per-slot rate: sum over PRBs of B_k * log2(1 + SINR_k)."""
    return float(np.sum(np.asarray(bandwidth_factors) * np.log2(1.0 + np.asarray(sinrs))))


def weighted_sum_rate(weights: np.ndarray, rates: np.ndarray) -> float:
    return float(np.dot(np.asarray(weights), np.asarray(rates)))


def solve_set_precoders(u_set: np.ndarray, analog: np.ndarray, p_k: float,
                        users=None) -> np.ndarray:
    """ZF-and-normalize across all PRBs for one candidate set: (K, M, M).

    Batched equivalent of normalize_precoder(zf_precoder(U_k)) per PRB; a
    single ill-conditioned PRB disqualifies the whole set.
    """
    n_streams = u_set.shape[1]
    gram = u_set @ u_set.conj().transpose(0, 2, 1)
    conds = np.linalg.cond(gram)
    worst = float(np.max(conds))
    if not np.isfinite(worst) or worst > CONDITION_LIMIT:
        raise IllConditionedError(worst, users)
    f = np.linalg.solve(gram, u_set).conj().transpose(0, 2, 1)
    composite = analog[None, :, :] @ f                   # (K, n_tx, M)
    norms = np.linalg.norm(composite, axis=1)            # (K, M)
    if np.any(norms == 0.0):
        raise IllConditionedError(np.inf, users)
    return f * (math.sqrt(p_k / n_streams) / norms)[:, None, :]
