import math

import numpy as np
import pytest
from scipy import special

from aging_mimo.channel import KroneckerStats, uniform_correlation
from aging_mimo.estimation import (UserSlot, estimate_covariance, estimator_matrices,
                                   isotropic_beamformer, lmmse_estimate, regularizer,
                                   simulate_estimates, slot_stats)
from aging_mimo.frame import FramePlan, PowerBudget, UserConfig, pilot_matrices


def test_regularizer():
    assert regularizer(2.0, 0.5, 4, 1.0) == pytest.approx(1 / 8)
    assert math.isinf(regularizer(1.0, 0.0, 4, 1.0))


def test_scalar_first_frame_closed_form():
    f = 0.07
    stats = KroneckerStats(np.eye(1), np.eye(1), f)
    plan = FramePlan((5,), pilot_len=1)
    reg = regularizer(1.0, 1.0, 1, 0.2)
    for t in plan.data_slots:
        e = estimate_covariance(estimator_matrices(stats, plan, t, 1.0, 1.0, 0.2))
        rho = special.j0(2 * np.pi * f * (t - 1))
        assert e.cov_est[0, 0].real == pytest.approx(rho**2 / (1 + reg), rel=1e-12)
        assert e.cov_err[0, 0].real == pytest.approx(1 - rho**2 / (1 + reg), rel=1e-12)


def test_zero_pilot_power_gives_zero_estimate():
    stats = KroneckerStats(np.eye(2), np.eye(2), 0.1)
    mats = estimator_matrices(stats, FramePlan((3,)), 2, 1.0, 0.0, 1.0)
    e = estimate_covariance(mats)
    assert not np.any(e.cov_est)
    np.testing.assert_allclose(e.cov_err, stats.cov(2))
    s = pilot_matrices(1, 2, 2)[0]
    assert not np.any(lmmse_estimate(np.ones(4), mats, s, 1.0, 0.0))


def test_frozen_noiseless_channel_is_known_exactly():
    stats = KroneckerStats(uniform_correlation(2, 0.5), np.eye(2), 0.0)
    plan = FramePlan((3, 3), pilot_len=2)
    e = estimate_covariance(estimator_matrices(stats, plan, 6, 1.0, 1.0, 1e-14))
    np.testing.assert_allclose(e.cov_est, stats.cov(6), atol=1e-8)
    assert np.abs(e.cov_err).max() < 1e-8


def test_pilot_slot_rejected():
    stats = KroneckerStats(np.eye(1), np.eye(1))
    with pytest.raises(ValueError):
        estimator_matrices(stats, FramePlan((3, 3)), 4, 1.0, 1.0, 1.0)


def test_error_covariance_is_psd_and_dominated():
    stats = KroneckerStats(uniform_correlation(3, 0.7), uniform_correlation(2, 0.2), 0.04)
    plan = FramePlan((2, 4), pilot_len=3)
    for t in plan.data_slots:
        e = estimate_covariance(estimator_matrices(stats, plan, t, 0.8, 1.5, 0.3))
        assert np.linalg.eigvalsh(e.cov_err).min() > -1e-12
        assert np.linalg.eigvalsh(e.cov_est).min() > -1e-12
        np.testing.assert_allclose(e.cov_est + e.cov_err, stats.cov(t), atol=1e-12)


def test_previous_pilot_never_hurts():
    stats = KroneckerStats(uniform_correlation(2, 0.4), np.eye(2), 0.03)
    plan = FramePlan((3, 4), pilot_len=2)
    t = 6
    both = estimate_covariance(estimator_matrices(stats, plan, t, 1.0, 1.0, 0.5))
    alone = estimate_covariance(estimator_matrices(stats, FramePlan((7,), 2), t - 3, 1.0, 1.0, 0.5))
    # with stationary statistics, slot t-3 of a fresh frame sees the same current-pilot lag
    assert np.trace(both.cov_err).real <= np.trace(alone.cov_err).real + 1e-12


def test_batch_estimate_matches_rows(rng):
    stats = KroneckerStats(uniform_correlation(2, 0.4), np.eye(3), 0.05)
    plan = FramePlan((2, 3), pilot_len=4)
    mats = estimator_matrices(stats, plan, 5, 1.2, 0.7, 0.4)
    s = pilot_matrices(2, 2, 4)[1]
    y = rng.standard_normal((5, 24)) + 1j * rng.standard_normal((5, 24))
    batch = lmmse_estimate(y, mats, s, 1.2, 0.7)
    for i in range(5):
        np.testing.assert_allclose(batch[i], lmmse_estimate(y[i], mats, s, 1.2, 0.7), atol=1e-12)
    with pytest.raises(ValueError):
        lmmse_estimate(y[:, :10], mats, s, 1.2, 0.7)


def test_simulated_error_is_orthogonal_to_estimate():
    stats = KroneckerStats(uniform_correlation(2, 0.3), np.eye(2), 0.05)
    plan = FramePlan((3,), pilot_len=2)
    s = pilot_matrices(1, 2, 2)[0]
    h, h_hat = simulate_estimates(stats, plan, 3, 1.0, 1.0, 0.3, s, 20_000, 3)
    cross = (h - h_hat).T @ h_hat.conj() / h.shape[0]
    assert np.abs(cross).max() < 0.03


def test_slot_stats_split_powers_and_beamformer():
    st = KroneckerStats(np.eye(2), np.eye(3), 0.02)
    users = [UserConfig(1.0, PowerBudget(2.0, 3.0), st, 0.1, 0.2),
             UserConfig(0.5, PowerBudget(1.0, 1.0), st, 0.1, 0.2)]
    plan = FramePlan((2, 2), pilot_len=4)
    slot = slot_stats(users, plan, 2)
    assert slot.n_users == 2 and slot.n_rx == 3 and slot.noise_var == 0.2
    assert slot.users[0].data_power == pytest.approx(1.5)
    w = isotropic_beamformer(2)
    s = slot.with_beamformers([w, 2 * w])
    np.testing.assert_allclose(np.linalg.norm(s.users[1].beamformer), 1.0)
    np.testing.assert_allclose(s.users[0].tx_cov, 1.5 * np.outer(w, w.conj()))
    assert s.reordered(1).users[0] is s.users[1]
    with pytest.raises(ValueError):
        UserSlot(1.0, np.eye(2), np.eye(2), np.eye(2), 1.0, 1).tx_cov
