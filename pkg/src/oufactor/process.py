"""Exact discretization of the multivariate Ornstein-Uhlenbeck process.

For dx = -theta x dt + B dW with B B^T = sigma, the transition over a gap
of length dt is

    x(t + dt) = C x(t) + eta,  C = exp(-theta dt),  eta ~ N(0, Q_dt)

with Q_dt = Q_inf - C Q_inf C^T, where the stationary covariance Q_inf
solves the Lyapunov equation theta Q + Q theta^T = sigma.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import NumericalError


def _check_theta(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
        raise ValueError(f"theta must be square, got shape {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta contains non-finite entries")
    return theta


def _check_sigma(sigma, m: int) -> np.ndarray:
    if sigma is None:
        return np.eye(m)
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (m, m):
        raise ValueError(f"sigma must have shape {(m, m)}, got {sigma.shape}")
    scale = max(1.0, np.abs(sigma).max())
    if np.abs(sigma - sigma.T).max() > 1e-8 * scale:
        raise ValueError("sigma must be symmetric")
    return sigma


def transition_matrix(theta, dt: float) -> np.ndarray:
    """Discrete-time transition matrix exp(-theta * dt).

    Parameters
    ----------
    theta : (m, m) array
        Mean-reversion matrix.
    dt : float
        Gap length, must be >= 0.
    """
    theta = _check_theta(theta)
    if not np.isfinite(dt) or dt < 0:
        raise ValueError(f"dt must be a finite value >= 0, got {dt}")
    if dt == 0:
        return np.eye(theta.shape[0])
    return expm(-theta * dt)


def _lyapunov_solve(theta: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve theta X + X theta^T = rhs by Kronecker vectorization.

    Dense solve, fine for the small state dimensions used here. The
    row-major vec identity vec(A X B) = (A kron B^T) vec(X) gives the
    system (theta kron I + I kron theta) vec(X) = vec(rhs).
    """
    m = theta.shape[0]
    eye = np.eye(m)
    mat = np.kron(theta, eye) + np.kron(eye, theta)
    try:
        x = np.linalg.solve(mat, rhs.reshape(-1))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular Lyapunov system: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise NumericalError("Lyapunov solve produced non-finite entries")
    x = x.reshape(m, m)
    return (x + x.T) / 2.0


def stationary_cov(theta, sigma=None) -> np.ndarray:
    """Stationary covariance of the OU process.

    Solves theta Q + Q theta^T = sigma. Requires every eigenvalue of theta
    to have positive real part; otherwise the process has no stationary
    distribution and a ValueError is raised.
    """
    theta = _check_theta(theta)
    sigma = _check_sigma(sigma, theta.shape[0])
    eigs = np.linalg.eigvals(theta)
    if np.min(eigs.real) <= 0:
        raise ValueError(
            "theta has an eigenvalue with nonpositive real part "
            f"(min real part {eigs.real.min():.6g}); no stationary distribution"
        )
    return _lyapunov_solve(theta, sigma)


def _clamp_psd(q: np.ndarray, what: str) -> np.ndarray:
    """Symmetrize and clamp tiny negative eigenvalues of a covariance.

    Eigenvalues below zero are set to zero only when they are within
    roundoff of zero (relative to the largest eigenvalue); anything more
    negative raises a NumericalError.
    """
    q = (q + q.T) / 2.0
    w = np.linalg.eigvalsh(q)
    lo = w[0]
    if lo >= 0:
        return q
    tol = 1e-10 * max(1.0, w[-1])
    if lo < -tol:
        raise NumericalError(
            f"{what} is indefinite (min eigenvalue {lo:.3e}); "
            "not attributable to roundoff"
        )
    w_full, v = np.linalg.eigh(q)
    q = (v * np.maximum(w_full, 0.0)) @ v.T
    return (q + q.T) / 2.0


def transition_noise_cov(theta, dt: float, sigma=None) -> np.ndarray:
    """Covariance of the transition noise accumulated over a gap of length dt.

    Uses the closed form Q_dt = Q_inf - C Q_inf C^T with C = exp(-theta dt),
    which solves the gap Lyapunov equation
    theta Q_dt + Q_dt theta^T = sigma - C sigma C^T.

    The result is symmetrized and, if roundoff produced eigenvalues within
    -1e-10 (relative) of zero, clamped to be positive semidefinite. More
    negative eigenvalues raise a NumericalError.
    """
    theta = _check_theta(theta)
    if not np.isfinite(dt) or dt < 0:
        raise ValueError(f"dt must be a finite value >= 0, got {dt}")
    q_inf = stationary_cov(theta, sigma)
    if dt == 0:
        return np.zeros_like(q_inf)
    c = expm(-theta * dt)
    q = q_inf - c @ q_inf @ c.T
    return _clamp_psd(q, "transition noise covariance")


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    """Symmetric square root of a positive semidefinite matrix."""
    w, v = np.linalg.eigh((mat + mat.T) / 2.0)
    tol = 1e-12 * max(1.0, abs(w[-1]))
    if w[0] < -tol:
        raise NumericalError(
            f"matrix is not positive semidefinite (min eigenvalue {w[0]:.3e})"
        )
    return (v * np.sqrt(np.maximum(w, 0.0))) @ v.T


@dataclass
class SpectralSummary:
    """Eigenvalue summary of a mean-reversion matrix.

    Attributes
    ----------
    eigenvalues : (m,) complex array
        Eigenvalues sorted by decreasing modulus (ties broken by decreasing
        real part, then decreasing imaginary part).
    max_modulus : float
        Largest eigenvalue modulus.
    sq_diff : float or None
        Squared eigenvalue difference (lambda_1 - lambda_2)^2 for m = 2,
        computed as trace^2 - 4 det so it is exactly real: positive for two
        real roots, negative for a complex pair. None for other dimensions.
    kind : str
        "real" if all eigenvalues are real (up to roundoff), else "complex".
    """

    eigenvalues: np.ndarray
    max_modulus: float
    sq_diff: float | None
    kind: str


def spectral_summary(theta) -> SpectralSummary:
    """Classify the spectrum of a mean-reversion matrix."""
    theta = _check_theta(theta)
    eigs = np.linalg.eigvals(theta)
    order = np.lexsort((-eigs.imag, -eigs.real, -np.abs(eigs)))
    eigs = eigs[order]
    max_modulus = float(np.abs(eigs[0])) if eigs.size else 0.0
    tol = 1e-10 * max(1.0, max_modulus)
    kind = "real" if np.all(np.abs(eigs.imag) <= tol) else "complex"
    sq_diff = None
    if theta.shape[0] == 2:
        tr = theta[0, 0] + theta[1, 1]
        det = theta[0, 0] * theta[1, 1] - theta[0, 1] * theta[1, 0]
        sq_diff = float(tr * tr - 4.0 * det)
    return SpectralSummary(
        eigenvalues=eigs, max_modulus=max_modulus, sq_diff=sq_diff, kind=kind
    )
