"""Tests for rate evaluation, constraint audits, and noise statistics."""

from types import SimpleNamespace

import numpy as np
import pytest

from beamlink.channel import ChannelConfig, ClusterParams, realize, sample_channel
from beamlink.codebooks import orthogonal_codebook, weak_coherent_codebook
from beamlink.metrics import (
    RateReport,
    approximation_error,
    audit_power_constraints,
    draw_ze,
    evaluate_rate,
    export_noise_stats_csv,
    fully_digital_rate,
    mutual_information,
    u_statistics,
    v_statistics,
    ze_covariance,
)
from beamlink.reference import reference_beamformers
from beamlink.selection import (
    BeamformerSet,
    digital_beamforming,
    initial_beam_selection,
    select_beams,
)
from beamlink.training import simulate_training


def _identity_bf(n=4, n_rf=2, n_s=2, num_k=3):
    eye = np.eye(n, dtype=complex)
    return BeamformerSet(
        tx_analog=eye[:, :n_rf],
        rx_analog=eye[:, :n_rf],
        tx_digital=np.broadcast_to(np.eye(n_rf, n_s, dtype=complex), (num_k, n_rf, n_s)).copy(),
        rx_digital=np.broadcast_to(np.eye(n_rf, n_s, dtype=complex), (num_k, n_rf, n_s)).copy(),
    )


def _unit_path_channel(num_k=3, n=4):
    params = ClusterParams(
        num_clusters=1,
        rays_per_cluster=1,
        gains=np.array([[1.0 + 0j]]),
        delays=np.array([[0]]),
        aod_deg=np.array([[0.0]]),
        aoa_deg=np.array([[0.0]]),
        mean_aod_deg=np.array([0.0]),
        mean_aoa_deg=np.array([0.0]),
        asd_deg=0.0,
        asa_deg=0.0,
        ray_offsets=np.array([0.0]),
    )
    return realize(params, 1.0, num_k, n, n)


def _alg1_beamformers(seed=5, codebook=None, sigma2=0.05, m=4, n_s=2, num_k=8):
    cb = codebook or weak_coherent_codebook()
    cfg = SimpleNamespace(n_t=cb.num_antennas, n_r=cb.num_antennas, k=num_k, n_rf=2)
    chan = sample_channel(cfg, ChannelConfig(), np.random.default_rng(seed))
    t = simulate_training(chan, cb, cb, sigma2=sigma2, seed=seed)
    sets = initial_beam_selection(t, m=m, n_rf=2)
    gamma = 1.0 / (n_s * sigma2)
    _, _, est = select_beams(t, sets, "eig", gamma, cb, cb, n_s=n_s)
    return chan, digital_beamforming(est, cb, cb, sets, n_s=n_s)


# ---------------------------------------------------------------------------
# mutual information / rates


def test_identity_link_rate():
    bf = _identity_bf()
    h = np.eye(4, dtype=complex)
    r_s = np.eye(2) / 2.0
    got = mutual_information(h, bf, k=0, r_s=r_s, sigma2=1.0)
    assert got == pytest.approx(2 * np.log2(1.5))


def test_zero_channel_rate_is_zero():
    bf = _identity_bf()
    got = mutual_information(np.zeros((4, 4), complex), bf, 0, np.eye(2) / 2, 1.0)
    assert got == pytest.approx(0.0, abs=1e-12)


def test_evaluate_rate_matches_scalar_loop():
    chan, bf = _alg1_beamformers(seed=2, num_k=6)
    r_s = np.eye(2) / 2.0
    report = evaluate_rate(chan, bf, r_s, sigma2=0.05)
    for k in range(6):
        single = mutual_information(chan.per_subcarrier[k], bf, k, r_s, 0.05)
        assert report.per_subcarrier_bits[k] == pytest.approx(single, rel=1e-10)
    assert report.mean_bits_per_s_hz == pytest.approx(
        np.mean(report.per_subcarrier_bits)
    )


def test_noise_free_selection_rate_equals_log_sum_of_singular_values():
    """With exact couplings the achieved rate IS the eig criterion value."""
    cb = weak_coherent_codebook()
    cfg = SimpleNamespace(n_t=32, n_r=32, k=8, n_rf=2)
    chan = sample_channel(cfg, ChannelConfig(), np.random.default_rng(7))
    t = simulate_training(chan, cb, cb, sigma2=0.0, noise_free=True)
    sets = initial_beam_selection(t, m=4, n_rf=2)
    sigma2 = 0.125
    gamma = 1.0 / (2 * sigma2)
    _, _, est = select_beams(t, sets, "eig", gamma, cb, cb, n_s=2)
    bf = digital_beamforming(est, cb, cb, sets, n_s=2)
    report = evaluate_rate(chan, bf, np.eye(2) / 2.0, sigma2)
    svals = np.linalg.svd(est.per_subcarrier, compute_uv=False)
    expected = np.sum(np.log2(1.0 + gamma * svals[:, :2] ** 2), axis=1)
    np.testing.assert_allclose(report.per_subcarrier_bits, expected, atol=1e-8)


def test_singular_noise_covariance_names_subcarrier():
    bf = BeamformerSet(
        tx_analog=np.eye(4, dtype=complex)[:, :2],
        rx_analog=np.eye(4, dtype=complex)[:, :2],
        tx_digital=np.broadcast_to(np.eye(2, dtype=complex), (3, 2, 2)).copy(),
        rx_digital=np.zeros((3, 2, 2), complex),  # kills the combined noise
    )
    with pytest.raises(ValueError, match="subcarrier 2"):
        mutual_information(np.eye(4, dtype=complex), bf, 2, np.eye(2) / 2, 1.0)


def test_hybrid_never_beats_fully_digital():
    for seed in range(4):
        chan, bf = _alg1_beamformers(seed=seed, sigma2=0.1)
        gamma = 1.0 / (2 * 0.1)
        hybrid = evaluate_rate(chan, bf, np.eye(2) / 2.0, 0.1)
        dbf = fully_digital_rate(chan, gamma, n_s=2)
        assert hybrid.mean_bits_per_s_hz <= dbf.mean_bits_per_s_hz + 1e-9
        np.testing.assert_array_less(
            hybrid.per_subcarrier_bits, dbf.per_subcarrier_bits + 1e-9
        )


def test_fully_digital_single_path_unit_gamma():
    chan = _unit_path_channel()
    report = fully_digital_rate(chan, gamma=1.0, n_s=1)
    assert report.mean_bits_per_s_hz == pytest.approx(1.0)  # log2(1 + 1)


def test_rate_report_validation_and_normalization():
    with pytest.raises(ValueError):
        RateReport(per_subcarrier_bits=np.array([1.0, 2.0]), mean_bits_per_s_hz=5.0)
    rep = RateReport(per_subcarrier_bits=np.array([1.0, 2.0]), mean_bits_per_s_hz=1.5)
    assert rep.with_normalization(3.0).normalized_to_dbf == pytest.approx(0.5)


# ---------------------------------------------------------------------------
# approximation error


def _noise_free_estimates(num, gamma):
    cb = orthogonal_codebook(32)
    cfg = SimpleNamespace(n_t=32, n_r=32, k=16, n_rf=2)
    out = []
    for seed in range(num):
        chan = sample_channel(cfg, ChannelConfig(), np.random.default_rng(seed))
        t = simulate_training(chan, cb, cb, sigma2=0.0, noise_free=True)
        sets = initial_beam_selection(t, m=3, n_rf=2)
        _, _, est = select_beams(t, sets, "eig", gamma, cb, cb, n_s=2)
        out.append(est)
    return out


def test_approximation_error_vanishes_at_tiny_gamma():
    ests = _noise_free_estimates(5, gamma=1e-6)
    report = approximation_error(ests, gamma=1e-6, n_s=2)
    assert report.epsilon < 1e-4
    # at vanishing SNR the first-order expansion is essentially exact
    assert report.epsilon == pytest.approx(report.closed_form, rel=1e-4)


def test_approximation_error_scales_linearly_in_gamma():
    ests = _noise_free_estimates(10, gamma=0.01)
    low = approximation_error(ests, gamma=0.005, n_s=2)
    high = approximation_error(ests, gamma=0.01, n_s=2)
    assert high.epsilon / low.epsilon == pytest.approx(2.0, rel=0.15)
    # and the closed form tracks the definition at low SNR
    assert low.epsilon == pytest.approx(low.closed_form, rel=0.10)


def test_approximation_error_requires_input():
    with pytest.raises(ValueError):
        approximation_error([], gamma=1.0)


# ---------------------------------------------------------------------------
# Z_E covariance and U statistics


def test_ze_covariance_identity_grams():
    eye = np.eye(2, dtype=complex)
    cov = ze_covariance(eye, eye, sigma2=0.5)
    np.testing.assert_allclose(cov, 0.5 * np.eye(4), atol=1e-14)


def test_ze_covariance_kron_swap():
    g_f = np.array([[1.0, 0.3 + 0.1j], [0.3 - 0.1j, 1.0]])
    g_w = np.array([[1.0, 0.5], [0.5, 1.0]])
    a = ze_covariance(g_f, g_w, 1.0)
    b = ze_covariance(g_w, g_f, 1.0)
    inv_gw = np.linalg.inv(np.conj(g_w))
    inv_gf = np.linalg.inv(g_f)
    np.testing.assert_allclose(b, np.kron(inv_gw, inv_gf), atol=1e-12)
    assert not np.allclose(a, b)


def test_ze_draw_covariance_matches_formula():
    g_f = np.array([[1.0, 0.4], [0.4, 1.0]], dtype=complex)
    g_w = np.array([[1.0, -0.2j], [0.2j, 1.0]], dtype=complex)
    sigma2 = 0.7
    exact = ze_covariance(g_f, g_w, sigma2)
    draws = draw_ze(g_f, g_w, sigma2, 200_000, np.random.default_rng(3))
    vecs = np.transpose(draws, (0, 2, 1)).reshape(len(draws), -1)  # column-major vec
    emp = (vecs.T @ vecs.conj()) / len(vecs)
    scale = np.max(np.abs(exact))
    assert np.max(np.abs(emp - exact)) < 0.03 * scale


def test_u_statistics_orthogonal_gamma_law():
    eye = np.eye(2, dtype=complex)
    stats = u_statistics(eye, eye, sigma2=1.0, num_samples=100_000,
                         rng=np.random.default_rng(11))
    assert stats.expected_u == pytest.approx(4.0, abs=1e-12)
    assert stats.gamma_shape == 4
    assert stats.gamma_scale == pytest.approx(1.0)
    assert stats.var_u == pytest.approx(4.0, rel=0.05)
    assert stats.empirical_mean_u == pytest.approx(4.0, rel=0.01)
    assert stats.empirical_var_u == pytest.approx(4.0, rel=0.05)
    np.testing.assert_allclose(stats.covariance, np.eye(4), atol=1e-12)


def test_u_statistics_correlated_grams():
    g = np.array([[1.0, 0.5], [0.5, 1.0]], dtype=complex)
    sigma2 = 0.3
    stats = u_statistics(g, g, sigma2=sigma2, num_samples=150_000,
                         rng=np.random.default_rng(29))
    # tr(inv(G)) = 8/3 on both sides, worked out by hand
    assert stats.expected_u == pytest.approx((8.0 / 3.0) ** 2 * sigma2, rel=1e-12)
    assert stats.empirical_mean_u == pytest.approx(stats.expected_u, rel=0.01)
    # the contraction-based variance must agree with the plain sample variance
    assert stats.var_u == pytest.approx(stats.empirical_var_u, rel=0.05)


def test_v_statistics_zero_channel():
    draws = draw_ze(np.eye(2, dtype=complex), np.eye(2, dtype=complex), 1.0, 1000,
                    np.random.default_rng(5))
    mean, var = v_statistics(np.zeros((2, 2)), draws)
    assert mean == 0.0
    assert var == 0.0


def test_v_statistics_orthogonal_variance():
    rng = np.random.default_rng(17)
    h_ref = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    h_ref *= np.sqrt(3.0) / np.linalg.norm(h_ref)  # ||H'||_F^2 = 3
    eye = np.eye(2, dtype=complex)
    draws = draw_ze(eye, eye, sigma2=1.0, num_samples=100_000, rng=rng)
    mean, var = v_statistics(h_ref, draws)
    assert var == pytest.approx(6.0, rel=0.03)  # 2 sigma2 ||H'||^2
    assert abs(mean) < 3 * np.sqrt(var / 100_000)


def test_noise_stats_csv(tmp_path):
    stats = u_statistics(np.eye(2, dtype=complex), np.eye(2, dtype=complex), 1.0,
                         num_samples=10_000, rng=np.random.default_rng(1))
    path = tmp_path / "stats.csv"
    export_noise_stats_csv(stats, str(path))
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "statistic,closed_form,empirical,rel_error"
    assert lines[1].startswith("mean_u,4.0,")
    assert len(lines) == 3


# ---------------------------------------------------------------------------
# constraint audit


def test_identity_beamformers_audit_exact_zero():
    audit = audit_power_constraints(_identity_bf(), np.eye(2) / 2.0)
    assert audit.worst_tx == 0.0
    assert audit.worst_rx == 0.0


def test_alg1_beamformers_pass_audit():
    _, bf = _alg1_beamformers(seed=3)
    audit = audit_power_constraints(bf, np.eye(2) / 2.0)
    assert audit.worst_tx < 1e-8
    assert audit.worst_rx < 1e-8


def test_reference_audit_tx_tight_rx_reported():
    cb = weak_coherent_codebook()
    cfg = SimpleNamespace(n_t=32, n_r=32, k=8, n_rf=2)
    chan = sample_channel(cfg, ChannelConfig(), np.random.default_rng(19))
    bf = reference_beamformers(chan, cb, cb, n_rf=2, n_s=2)
    audit = audit_power_constraints(bf, np.eye(2) / 2.0)
    assert audit.worst_tx < 1e-8
    assert audit.rx_residuals.shape == (8,)
    # the LS combiner is generally not orthogonalized; the audit reports it
    assert audit.worst_rx > 1e-8
