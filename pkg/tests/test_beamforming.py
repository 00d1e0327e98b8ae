"""Beam selection, effective channels, ZF precoding, SINR, and rates."""

import numpy as np
import pytest

from mmwsched import beamforming, channel
from mmwsched.beamforming import IllConditionedError
from mmwsched.channel import ChannelTensor, Codebook


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def orthonormal_codebook(n_tx: int) -> Codebook:
    beams = np.fft.fft(np.eye(n_tx)) / np.sqrt(n_tx)
    return Codebook(beams, (n_tx, 1), np.arange(n_tx, dtype=float), np.zeros(1))


# --------------------------------------------------------------------------
# Combiner

def test_combiner_single_antenna_is_one():
    rng = np.random.default_rng(0)
    g = beamforming.derive_combiner(crandn(rng, 16, 1))
    assert np.array_equal(g, np.ones(1, dtype=complex))


def test_combiner_rank_one_channel_aligns_with_right_factor():
    rng = np.random.default_rng(1)
    a = crandn(rng, 16)
    b = crandn(rng, 4)
    h = np.outer(a, b.conj())
    g = beamforming.derive_combiner(h)
    assert abs(abs(np.vdot(g, b / np.linalg.norm(b))) - 1.0) < 1e-10


def test_combiner_matches_svd_and_maximizes_gain():
    rng = np.random.default_rng(2)
    h = crandn(rng, 16, 2)
    g = beamforming.derive_combiner(h)
    assert abs(np.linalg.norm(g) - 1.0) < 1e-12
    # oracle: dense SVD dominant right singular vector
    _, _, vh = np.linalg.svd(h)
    best = vh[0].conj()
    assert abs(abs(np.vdot(g, best)) - 1.0) < 1e-10
    # no random unit vector does better
    achieved = np.linalg.norm(h @ g)
    for _ in range(300):
        cand = crandn(rng, 2)
        cand /= np.linalg.norm(cand)
        assert np.linalg.norm(h @ cand) <= achieved + 1e-9


def test_combiner_zero_channel_degenerates_to_basis_vector():
    g = beamforming.derive_combiner(np.zeros((8, 3), dtype=complex))
    assert np.array_equal(g, np.array([1.0, 0.0, 0.0], dtype=complex))


# --------------------------------------------------------------------------
# Beam selection

def test_best_beam_for_aligned_channel():
    cb = orthonormal_codebook(8)
    h = np.outer(cb.beams[7], np.ones(1))[None, :, :]   # K=1
    idx = beamforming.select_best_beam(h, np.ones(1, dtype=complex), cb)
    assert idx == 7


def test_best_beam_zero_channel_tiebreaks_low():
    cb = orthonormal_codebook(8)
    h = np.zeros((3, 8, 1), dtype=complex)
    assert beamforming.select_best_beam(h, np.ones(1, dtype=complex), cb) == 0


def test_best_beam_matches_exhaustive_metric():
    rng = np.random.default_rng(3)
    geom = channel.ArrayGeometry(8, 2)
    cb = channel.build_codebook(geom, (-180, 180), (-30, 30), (32, 8))
    h = crandn(rng, 12, 16, 2)
    g = beamforming.derive_combiner(h.mean(axis=0))
    idx = beamforming.select_best_beam(h, g, cb)
    # oracle: literal loop over beams and PRBs
    best_l, best_val = -1, -1.0
    for ell in range(256):
        val = 0.0
        for k in range(12):
            val += abs(g.conj() @ h[k].conj().T @ cb.beams[ell]) ** 2
        val /= 12
        if val > best_val + 1e-15:
            best_l, best_val = ell, val
    assert idx == best_l


def test_best_beam_invariant_to_channel_scaling():
    rng = np.random.default_rng(4)
    geom = channel.ArrayGeometry(8, 2)
    cb = channel.build_codebook(geom, (-180, 180), (-30, 30), (32, 8))
    h = crandn(rng, 4, 16, 1)
    g = np.ones(1, dtype=complex)
    base = beamforming.select_best_beam(h, g, cb)
    for scale in (1e-6, 3.7, 2.5e4):
        assert beamforming.select_best_beam(scale * h, g, cb) == base


# --------------------------------------------------------------------------
# Effective channels

def test_effective_channel_single_user():
    rng = np.random.default_rng(5)
    h = crandn(rng, 2, 1, 8, 1)
    beam = crandn(rng, 8)
    beam /= np.linalg.norm(beam)
    asn = beamforming.BeamAssignment(np.array([0]), beam[None, :],
                                     np.ones((1, 1), dtype=complex))
    u = beamforming.effective_channels(ChannelTensor(h, 0), asn, [0])
    assert u.shape == (2, 1, 1)
    expected = np.conj(h[0, 0, :, 0]) @ beam
    assert u[0, 0, 0] == pytest.approx(expected)


def test_effective_channel_orthogonal_alignment_is_diagonal():
    eye = np.eye(4, dtype=complex)
    h = np.stack([np.outer(eye[i], [1.0]) for i in range(3)])[None, :, :, :]
    asn = beamforming.BeamAssignment(np.arange(3), eye[:3],
                                     np.ones((3, 1), dtype=complex))
    u = beamforming.effective_channels(ChannelTensor(h, 0), asn, [0, 1, 2])
    off_diag = u[0] - np.diag(np.diag(u[0]))
    assert np.max(np.abs(off_diag)) < 1e-14
    assert np.allclose(np.diag(u[0]), 1.0)


def test_effective_channels_match_triple_loop():
    rng = np.random.default_rng(6)
    n_prb, n_users, n_tx, n_rx = 3, 3, 8, 2
    h = crandn(rng, n_prb, n_users, n_tx, n_rx)
    beams = crandn(rng, n_users, n_tx)
    beams /= np.linalg.norm(beams, axis=1, keepdims=True)
    combs = crandn(rng, n_users, n_rx)
    combs /= np.linalg.norm(combs, axis=1, keepdims=True)
    asn = beamforming.BeamAssignment(np.arange(n_users), beams, combs)
    u = beamforming.effective_channels(ChannelTensor(h, 0), asn, range(n_users))
    for k in range(n_prb):
        for i in range(n_users):
            for j in range(n_users):
                scalar = combs[i].conj() @ h[k, i].conj().T @ beams[j]
                assert u[k, i, j] == pytest.approx(scalar)


# --------------------------------------------------------------------------
# ZF precoder

def test_zf_identity_input_gives_identity():
    f = beamforming.zf_precoder(np.eye(3, dtype=complex))
    assert np.allclose(f, np.eye(3))


def test_zf_diagonal_input_inverts():
    f = beamforming.zf_precoder(np.diag([2.0, 4.0]).astype(complex))
    assert np.allclose(f, np.diag([0.5, 0.25]))


def test_zf_residual_small_for_random_matrix():
    rng = np.random.default_rng(7)
    u = crandn(rng, 4, 4)
    f = beamforming.zf_precoder(u)
    residual = np.linalg.norm(u @ f - np.eye(4))
    assert residual < 1e-9


def test_zf_rejects_singular_matrix_with_users():
    u = np.ones((3, 3), dtype=complex)   # rank one
    with pytest.raises(IllConditionedError) as err:
        beamforming.zf_precoder(u, users=(2, 5, 9))
    assert err.value.users == (2, 5, 9)


def test_zf_nulls_interference():
    rng = np.random.default_rng(8)
    u = crandn(rng, 4, 4)
    f = beamforming.zf_precoder(u)
    power = np.abs(u @ f) ** 2
    signal = np.diag(power)
    interference = power.sum(axis=1) - signal
    assert np.all(interference <= 1e-12 * signal)


# --------------------------------------------------------------------------
# Normalization

def test_normalize_single_stream_full_power():
    rng = np.random.default_rng(9)
    analog = crandn(rng, 8, 1)
    analog /= np.linalg.norm(analog)
    f = beamforming.normalize_precoder(np.array([[1.3 + 0.2j]]), analog, 1.0, 1)
    assert np.linalg.norm(analog @ f) == pytest.approx(1.0)


def test_normalize_per_stream_power_is_budget_share():
    rng = np.random.default_rng(10)
    m, p_k = 8, 0.1           # 20 dBm
    u = crandn(rng, m, m)
    analog = crandn(rng, 16, m)
    analog /= np.linalg.norm(analog, axis=0, keepdims=True)
    f = beamforming.normalize_precoder(beamforming.zf_precoder(u), analog, p_k, m)
    powers = np.linalg.norm(analog @ f, axis=0) ** 2
    assert np.allclose(powers, 0.0125, rtol=1e-12)
    assert powers.sum() == pytest.approx(p_k, rel=1e-9)


def test_batched_solver_matches_per_prb_composition():
    rng = np.random.default_rng(11)
    u_set = crandn(rng, 5, 3, 3)
    analog = crandn(rng, 16, 3)
    analog /= np.linalg.norm(analog, axis=0, keepdims=True)
    batched = beamforming.solve_set_precoders(u_set, analog, 0.1)
    for k in range(5):
        single = beamforming.normalize_precoder(
            beamforming.zf_precoder(u_set[k]), analog, 0.1, 3)
        assert np.allclose(batched[k], single, rtol=1e-10, atol=1e-14)


# --------------------------------------------------------------------------
# SINR and rates

def test_sinr_unity_when_signal_equals_noise():
    u = np.array([[2.0 + 0.0j]])
    f = np.array([[0.5 + 0.0j]])    # |u f|^2 = 1
    assert beamforming.sinr(u, f, 0, 1.0) == pytest.approx(1.0)


def test_sinr_with_exact_zf_is_noise_limited():
    rng = np.random.default_rng(12)
    u = crandn(rng, 2, 2)
    analog = crandn(rng, 16, 2)
    analog /= np.linalg.norm(analog, axis=0, keepdims=True)
    f = beamforming.normalize_precoder(beamforming.zf_precoder(u), analog, 0.1, 2)
    noise = 1e-6
    for i in range(2):
        row = u[i]
        desired = abs(row @ f[:, i]) ** 2
        interference = abs(row @ f[:, 1 - i]) ** 2
        assert interference < 1e-15 * desired
        assert beamforming.sinr(u, f, i, noise) == pytest.approx(desired / noise, rel=1e-9)


def test_sinr_matches_scalar_loop():
    rng = np.random.default_rng(13)
    u = crandn(rng, 3, 3)
    f = crandn(rng, 3, 3)
    noise = 0.37
    for i in range(3):
        desired = abs(sum(u[i, m] * f[m, i] for m in range(3))) ** 2
        interference = sum(abs(sum(u[i, m] * f[m, j] for m in range(3))) ** 2
                           for j in range(3) if j != i)
        expected = desired / (interference + noise)
        assert beamforming.sinr(u, f, i, noise) == pytest.approx(expected)
        assert beamforming.all_sinrs(u, f, noise)[i] == pytest.approx(expected)


def test_user_rate_values_and_loop_oracle():
    assert beamforming.user_rate(np.array([1.0]), np.array([168.0])) == pytest.approx(168.0)
    assert beamforming.user_rate(np.zeros(12), np.full(12, 168.0)) == 0.0
    rng = np.random.default_rng(14)
    sinrs = rng.uniform(0, 50, 12)
    expected = sum(168.0 * np.log2(1 + s) for s in sinrs)
    assert beamforming.user_rate(sinrs, np.full(12, 168.0)) == pytest.approx(expected)


def test_user_rate_monotone_in_each_sinr():
    rng = np.random.default_rng(15)
    sinrs = rng.uniform(0, 10, 6)
    bw = np.full(6, 168.0)
    base = beamforming.user_rate(sinrs, bw)
    for k in range(6):
        bumped = sinrs.copy()
        bumped[k] += 0.5
        assert beamforming.user_rate(bumped, bw) > base


def test_weighted_sum_rate():
    assert beamforming.weighted_sum_rate(np.zeros(0), np.zeros(0)) == 0.0
    rates = np.array([3.0, 5.0, 7.0])
    assert beamforming.weighted_sum_rate(np.ones(3), rates) == pytest.approx(15.0)
    w = np.array([0.2, 0.5, 0.1])
    assert beamforming.weighted_sum_rate(w, rates) == pytest.approx(
        0.2 * 3 + 0.5 * 5 + 0.1 * 7)
