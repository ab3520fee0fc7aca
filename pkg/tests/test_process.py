"""Tests for the exact OU discretization helpers."""

import numpy as np
import pytest

from oufactor.errors import NumericalError
from oufactor.process import (
    spectral_summary,
    stationary_cov,
    transition_matrix,
    transition_noise_cov,
)
from support import (
    gap_noise_cov_oracle,
    quadrature_noise_cov_oracle,
    random_spd,
    random_stable_theta,
    taylor_expm,
)

# Eigenvalues of [[0.16, 0.02], [-0.02, 0.1]] from the quadratic formula
# lambda = (0.26 +- sqrt(0.26^2 - 4 * 0.0164)) / 2, evaluated in 40-digit
# decimal arithmetic and rounded to double.
EIGS_SLOW_PAIR = (0.1523606797749979, 0.1076393202250021)

# Scalar gap variance (1 - exp(-2 * 0.5 * 0.7)) / (2 * 0.5) at 30 digits.
SCALAR_Q_07 = 0.5034146962085905


class TestTransitionMatrix:
    def test_matches_taylor_series(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            m = rng.integers(1, 5)
            theta = random_stable_theta(rng, m)
            dt = rng.uniform(0.01, 3.0)
            c = transition_matrix(theta, dt)
            ref = taylor_expm(-theta * dt)
            assert np.allclose(c, ref, rtol=1e-12, atol=1e-12)

    def test_zero_gap_is_identity(self):
        theta = np.array([[0.8, 0.3], [-0.3, 0.1]])
        assert np.array_equal(transition_matrix(theta, 0.0), np.eye(2))

    def test_semigroup_property(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            m = rng.integers(1, 5)
            theta = random_stable_theta(rng, m)
            a, b = rng.uniform(0.05, 2.0, size=2)
            lhs = transition_matrix(theta, a + b)
            rhs = transition_matrix(theta, a) @ transition_matrix(theta, b)
            assert np.allclose(lhs, rhs, rtol=0, atol=1e-9)

    def test_invalid_inputs(self):
        theta = np.eye(2)
        with pytest.raises(ValueError):
            transition_matrix(theta, -0.5)
        with pytest.raises(ValueError):
            transition_matrix(theta, np.nan)
        with pytest.raises(ValueError):
            transition_matrix(np.ones((2, 3)), 1.0)
        with pytest.raises(ValueError):
            transition_matrix(np.array([[np.inf, 0], [0, 1]]), 1.0)


class TestStationaryCov:
    def test_scalar_closed_form(self):
        # For scalar theta: q = sigma / (2 theta).
        q = stationary_cov(np.array([[0.5]]), np.array([[1.0]]))
        assert q.shape == (1, 1)
        assert abs(q[0, 0] - 1.0) < 1e-14
        q = stationary_cov(np.array([[0.25]]), np.array([[0.8]]))
        assert abs(q[0, 0] - 1.6) < 1e-14

    def test_default_sigma_is_identity(self):
        theta = np.array([[0.8, 0.3], [-0.3, 0.1]])
        assert np.allclose(
            stationary_cov(theta), stationary_cov(theta, np.eye(2)), atol=0
        )

    def test_lyapunov_residual(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            m = rng.integers(1, 7)
            theta = random_stable_theta(rng, m)
            sigma = random_spd(rng, m)
            q = stationary_cov(theta, sigma)
            resid = theta @ q + q @ theta.T - sigma
            assert np.abs(resid).max() < 1e-10 * max(1.0, np.abs(q).max())
            assert np.allclose(q, q.T, atol=0)
            assert np.linalg.eigvalsh(q).min() > 0

    def test_matches_bartels_stewart(self):
        from scipy.linalg import solve_continuous_lyapunov

        rng = np.random.default_rng(14)
        for _ in range(20):
            m = rng.integers(1, 7)
            theta = random_stable_theta(rng, m)
            sigma = random_spd(rng, m)
            q = stationary_cov(theta, sigma)
            ref = solve_continuous_lyapunov(theta, sigma)
            assert np.allclose(q, ref, rtol=1e-9, atol=1e-11)

    def test_unstable_theta_rejected(self):
        with pytest.raises(ValueError, match="stationary"):
            stationary_cov(np.array([[-0.1]]))
        with pytest.raises(ValueError, match="stationary"):
            stationary_cov(np.array([[0.0, 1.0], [0.0, 0.5]]))

    def test_asymmetric_sigma_rejected(self):
        with pytest.raises(ValueError, match="symmetric"):
            stationary_cov(np.eye(2), np.array([[1.0, 0.5], [0.0, 1.0]]))


class TestTransitionNoiseCov:
    def test_scalar_closed_form(self):
        q = transition_noise_cov(np.array([[0.5]]), 0.7)
        assert abs(q[0, 0] - SCALAR_Q_07) < 1e-14

    def test_zero_gap(self):
        theta = np.array([[0.8, 0.3], [-0.3, 0.1]])
        assert np.array_equal(transition_noise_cov(theta, 0.0), np.zeros((2, 2)))

    def test_long_gap_reaches_stationary(self):
        theta = np.array([[0.5]])
        q = transition_noise_cov(theta, 1e6)
        assert abs(q[0, 0] - 1.0) < 1e-12

    def test_matches_direct_gap_solve(self):
        rng = np.random.default_rng(15)
        for _ in range(40):
            m = rng.integers(1, 6)
            theta = random_stable_theta(rng, m)
            sigma = random_spd(rng, m)
            dt = rng.uniform(0.05, 4.0)
            q = transition_noise_cov(theta, dt, sigma)
            ref = gap_noise_cov_oracle(theta, dt, sigma)
            assert np.allclose(q, ref, rtol=1e-9, atol=1e-10)

    def test_matches_quadrature_integral(self):
        rng = np.random.default_rng(16)
        for _ in range(10):
            m = rng.integers(1, 4)
            theta = random_stable_theta(rng, m)
            sigma = random_spd(rng, m)
            dt = rng.uniform(0.1, 2.0)
            q = transition_noise_cov(theta, dt, sigma)
            ref = quadrature_noise_cov_oracle(theta, dt, sigma)
            assert np.allclose(q, ref, rtol=1e-10, atol=1e-11)

    def test_gap_lyapunov_residual(self):
        rng = np.random.default_rng(17)
        for _ in range(40):
            m = rng.integers(1, 6)
            theta = random_stable_theta(rng, m)
            sigma = random_spd(rng, m)
            dt = rng.uniform(0.01, 5.0)
            q = transition_noise_cov(theta, dt, sigma)
            c = transition_matrix(theta, dt)
            resid = theta @ q + q @ theta.T - (sigma - c @ sigma @ c.T)
            assert np.abs(resid).max() < 1e-9

    def test_result_is_psd_and_symmetric(self):
        rng = np.random.default_rng(18)
        for _ in range(30):
            m = rng.integers(1, 6)
            theta = random_stable_theta(rng, m)
            dt = rng.uniform(1e-4, 3.0)
            q = transition_noise_cov(theta, dt)
            assert np.array_equal(q, q.T)
            assert np.linalg.eigvalsh(q).min() >= 0

    def test_monotone_in_gap_for_diagonal_theta(self):
        # For normal theta the noise covariance grows with the gap in the
        # PSD order; checked on diagonal cases.
        for diag in ([0.3], [0.5, 1.2], [0.1, 0.7, 2.0]):
            theta = np.diag(diag)
            gaps = [0.1, 0.5, 1.0, 2.0, 5.0]
            covs = [transition_noise_cov(theta, dt) for dt in gaps]
            for q_small, q_big in zip(covs, covs[1:]):
                assert np.linalg.eigvalsh(q_big - q_small).min() > -1e-14


class TestSpectralSummary:
    def test_frozen_real_pair(self):
        s = spectral_summary(np.array([[0.16, 0.02], [-0.02, 0.1]]))
        assert s.kind == "real"
        assert abs(s.eigenvalues[0] - EIGS_SLOW_PAIR[0]) < 1e-12
        assert abs(s.eigenvalues[1] - EIGS_SLOW_PAIR[1]) < 1e-12
        assert abs(s.max_modulus - EIGS_SLOW_PAIR[0]) < 1e-12
        # trace^2 - 4 det = 0.26^2 - 4 * 0.0164
        assert abs(s.sq_diff - 0.002) < 1e-15

    def test_complex_pair(self):
        s = spectral_summary(np.array([[0.16, 1.0], [-1.0, 0.1]]))
        assert s.kind == "complex"
        assert s.sq_diff == pytest.approx(-3.9964, abs=1e-12)
        assert s.eigenvalues[0].imag > 0 > s.eigenvalues[1].imag
        assert s.eigenvalues[0].real == pytest.approx(0.13, abs=1e-12)

    def test_ordering_by_modulus(self):
        rng = np.random.default_rng(19)
        for _ in range(20):
            m = rng.integers(1, 6)
            theta = random_stable_theta(rng, m)
            s = spectral_summary(theta)
            mods = np.abs(s.eigenvalues)
            assert np.all(np.diff(mods) <= 1e-12 * max(1.0, mods[0]))
            assert s.max_modulus == pytest.approx(mods[0])

    def test_sq_diff_only_for_two_factors(self):
        assert spectral_summary(np.eye(3)).sq_diff is None
        assert spectral_summary(np.array([[2.0]])).sq_diff is None

    def test_large_diagonal_real_label(self):
        # Strong damping with a modest rotation still has two real roots.
        s = spectral_summary(np.array([[6.0, 0.5], [-0.5, 1.8]]))
        assert s.kind == "real"
        assert s.sq_diff > 0


class TestPsdRepair:
    def test_indefinite_matrix_rejected(self):
        from oufactor.process import _clamp_psd

        bad = np.diag([1.0, -1e-6])
        with pytest.raises(NumericalError, match="indefinite"):
            _clamp_psd(bad, "test matrix")

    def test_roundoff_negative_clamped(self):
        from oufactor.process import _clamp_psd

        q = np.diag([1.0, -1e-12])
        out = _clamp_psd(q, "test matrix")
        assert np.linalg.eigvalsh(out).min() >= 0
        assert np.abs(out - np.diag([1.0, 0.0])).max() < 1e-11
