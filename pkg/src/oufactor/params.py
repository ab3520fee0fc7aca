"""Parameter container for the latent-factor OU state space model.

The observation model is

    y_i = obs_mean + loadings @ x(t_i) + e_i,   e_i ~ N(0, diag(noise_var))

where x(t) is an m-dimensional Ornstein-Uhlenbeck process

    dx(t) = -theta @ x(t) dt + B dW(t),   B @ B.T = diffusion

observed at strictly increasing, possibly irregular times t_i.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


def _as_matrix(x, name: str) -> np.ndarray:
    arr = np.array(x, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _as_vector(x, name: str) -> np.ndarray:
    arr = np.array(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass
class ModelParams:
    """Model parameters.

    Parameters
    ----------
    theta : (m, m) array
        Mean-reversion matrix of the latent OU process. Must have all
        eigenvalues in the right half plane for a stationary model; this is
        checked where it matters (stationary covariance, filtering) rather
        than at construction time.
    loadings : (p, m) array
        Observation loading matrix mapping factors to observed coordinates.
    obs_mean : (p,) array
        Mean of the observed series.
    noise_var : (p,) array
        Diagonal of the measurement-error covariance. Entries must be >= 0
        (zero is allowed, e.g. for noiseless checks).
    diffusion : (m, m) array, optional
        Symmetric positive definite diffusion covariance of the OU process.
        ``None`` means the identity, which is the canonical normalization.
    """

    theta: np.ndarray
    loadings: np.ndarray
    obs_mean: np.ndarray
    noise_var: np.ndarray
    diffusion: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.theta = _as_matrix(self.theta, "theta")
        m = self.theta.shape[0]
        if self.theta.shape != (m, m):
            raise ValueError(f"theta must be square, got shape {self.theta.shape}")
        self.loadings = _as_matrix(self.loadings, "loadings")
        if self.loadings.shape[1] != m:
            raise ValueError(
                f"loadings has {self.loadings.shape[1]} columns, expected {m}"
            )
        p = self.loadings.shape[0]
        self.obs_mean = _as_vector(self.obs_mean, "obs_mean")
        if self.obs_mean.shape != (p,):
            raise ValueError(f"obs_mean must have length {p}")
        self.noise_var = _as_vector(self.noise_var, "noise_var")
        if self.noise_var.shape != (p,):
            raise ValueError(f"noise_var must have length {p}")
        if np.any(self.noise_var < 0):
            raise ValueError("noise_var entries must be >= 0")
        if self.diffusion is not None:
            self.diffusion = _as_matrix(self.diffusion, "diffusion")
            if self.diffusion.shape != (m, m):
                raise ValueError(
                    f"diffusion must have shape {(m, m)}, got {self.diffusion.shape}"
                )
            asym = np.abs(self.diffusion - self.diffusion.T).max()
            scale = max(1.0, np.abs(self.diffusion).max())
            if asym > 1e-8 * scale:
                raise ValueError("diffusion must be symmetric")

    @property
    def m(self) -> int:
        """Number of latent factors."""
        return self.theta.shape[0]

    @property
    def p(self) -> int:
        """Number of observed coordinates."""
        return self.loadings.shape[0]

    def diffusion_matrix(self) -> np.ndarray:
        """Diffusion covariance as an explicit array (identity if None)."""
        if self.diffusion is None:
            return np.eye(self.m)
        return self.diffusion

    def is_canonical(self, tol: float = 1e-8) -> bool:
        """Whether the parameters are in identifiable canonical form.

        Canonical means: diffusion is the identity, theta has antisymmetric
        off-diagonal part and non-increasing diagonal, and the first row of
        the loadings is non-negative. (Stationary fitted models additionally
        have a positive diagonal, but that is a property of the estimation
        parametrization, not of canonical structure.)
        """
        scale = max(1.0, np.abs(self.theta).max())
        if self.diffusion is not None:
            if np.abs(self.diffusion - np.eye(self.m)).max() > tol:
                return False
        sym = self.theta + self.theta.T
        off = sym - np.diag(np.diag(sym))
        if np.abs(off).max() > tol * scale:
            return False
        d = np.diag(self.theta)
        if np.any(np.diff(d) > tol * scale):
            return False
        if self.m > 1 and np.any(self.loadings[0] < -tol):
            return False
        return True

    def copy(self) -> "ModelParams":
        """Deep copy."""
        return replace(
            self,
            theta=self.theta.copy(),
            loadings=self.loadings.copy(),
            obs_mean=self.obs_mean.copy(),
            noise_var=self.noise_var.copy(),
            diffusion=None if self.diffusion is None else self.diffusion.copy(),
        )
