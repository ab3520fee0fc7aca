"""Shared helpers for the test suite.

The oracle functions here deliberately use different algorithms from the
package (Taylor series instead of Pade, column-major Kronecker solves,
joint-density evaluation instead of recursive filtering) so that agreement
is evidence of correctness rather than shared code.
"""

from __future__ import annotations

import numpy as np


# ---------------------------------------------------------------------------
# independent oracles


def taylor_expm(a: np.ndarray, terms: int = 40) -> np.ndarray:
    """Matrix exponential by scaling + truncated Taylor series + squaring."""
    a = np.asarray(a, dtype=float)
    norm = np.linalg.norm(a, 1)
    k = 0
    while norm > 0.25:
        norm /= 2.0
        k += 1
    b = a / (2.0**k)
    out = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for i in range(1, terms + 1):
        term = term @ b / i
        out = out + term
    for _ in range(k):
        out = out @ out
    return out


def lyap_solve_colmajor(theta: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve theta X + X theta^T = rhs via column-major vectorization.

    Uses the Fortran-order identity vec(A X B) = (B^T kron A) vec(X), the
    opposite convention from the package implementation.
    """
    m = theta.shape[0]
    eye = np.eye(m)
    mat = np.kron(eye, theta) + np.kron(theta, eye)
    x = np.linalg.solve(mat, rhs.reshape(-1, order="F"))
    x = x.reshape(m, m, order="F")
    return (x + x.T) / 2.0


def gap_noise_cov_oracle(theta: np.ndarray, dt: float, sigma: np.ndarray) -> np.ndarray:
    """Transition noise covariance from a direct solve of the gap equation.

    Solves theta Q + Q theta^T = sigma - C sigma C^T with C = exp(-theta dt)
    (Taylor-series exponential), independently of the closed form used by
    the package.
    """
    c = taylor_expm(-theta * dt)
    rhs = sigma - c @ sigma @ c.T
    return lyap_solve_colmajor(theta, rhs)


def quadrature_noise_cov_oracle(
    theta: np.ndarray, dt: float, sigma: np.ndarray, order: int = 80
) -> np.ndarray:
    """Transition noise covariance by Gauss-Legendre quadrature.

    Evaluates the defining integral
    Q_dt = int_0^dt exp(-theta s) sigma exp(-theta^T s) ds directly, a third
    route independent of both the closed form and the Lyapunov solve.
    """
    nodes, weights = np.polynomial.legendre.leggauss(order)
    s = 0.5 * dt * (nodes + 1.0)
    out = np.zeros_like(sigma)
    for si, wi in zip(s, weights):
        e = taylor_expm(-theta * si)
        out = out + wi * (e @ sigma @ e.T)
    return 0.5 * dt * out


def joint_loglik_oracle(params, times, values, missing=None) -> float:
    """Log-likelihood via the stacked joint Gaussian density.

    Builds the full covariance of all observed rows from the stationary
    cross-covariance cov(x_s, x_t) = Q_inf exp(-theta^T (t_t - t_s)) and
    evaluates one multivariate normal density. O((Np)^3), for small checks
    only.
    """
    from scipy.stats import multivariate_normal

    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    n = times.shape[0]
    if missing is None:
        missing = np.zeros(n, dtype=bool)
    obs = np.flatnonzero(~np.asarray(missing))
    p = params.p
    z = params.loadings
    h = np.diag(params.noise_var)
    sigma = params.diffusion_matrix()
    q_inf = lyap_solve_colmajor(params.theta, sigma)
    k = obs.size
    cov = np.zeros((k * p, k * p))
    for a in range(k):
        for b in range(a, k):
            gap = times[obs[b]] - times[obs[a]]
            cross = q_inf @ taylor_expm(-params.theta.T * gap)
            block = z @ cross @ z.T
            if a == b:
                block = block + h
            cov[a * p : (a + 1) * p, b * p : (b + 1) * p] = block
            if b != a:
                cov[b * p : (b + 1) * p, a * p : (a + 1) * p] = block.T
    cov = (cov + cov.T) / 2.0
    mean = np.tile(params.obs_mean, k)
    y = values[obs].reshape(-1)
    return float(multivariate_normal(mean=mean, cov=cov).logpdf(y))


def grid_gauge_distance(theta, theta_hat, n_angles: int = 3600) -> float:
    """Brute-force gauge distance over a dense orthogonal-group grid.

    Scans rotation angles (and both reflection classes) and returns the
    smallest Frobenius distance ||theta - Q theta_hat Q^T||_F.
    """
    theta = np.asarray(theta, dtype=float)
    theta_hat = np.asarray(theta_hat, dtype=float)
    refl = np.diag([1.0, -1.0])
    best = np.inf
    for phi in np.linspace(0.0, 2.0 * np.pi, n_angles, endpoint=False):
        c, s = np.cos(phi), np.sin(phi)
        rot = np.array([[c, -s], [s, c]])
        for q in (rot, rot @ refl):
            d = np.linalg.norm(theta - q @ theta_hat @ q.T)
            if d < best:
                best = d
    return float(best)


# ---------------------------------------------------------------------------
# random inputs


def random_stable_theta(rng, m: int, scale: float = 1.0) -> np.ndarray:
    """Random matrix with all eigenvalues in the right half plane."""
    a = rng.normal(size=(m, m)) * scale
    shift = max(0.0, -np.linalg.eigvals(a).real.min())
    return a + (shift + 0.1 * scale + rng.uniform(0.05, 0.5) * scale) * np.eye(m)


def random_spd(rng, m: int, scale: float = 1.0) -> np.ndarray:
    """Random symmetric positive definite matrix with moderate conditioning."""
    q = np.linalg.qr(rng.normal(size=(m, m)))[0]
    w = np.exp(rng.uniform(-1.0, 1.0, size=m)) * scale
    return (q * w) @ q.T


def random_canonical_theta(rng, m: int = 2) -> np.ndarray:
    """Random canonical mean-reversion matrix.

    Antisymmetric off-diagonal part plus a strictly decreasing positive
    diagonal.
    """
    alphas = np.exp(rng.uniform(-2.0, 1.0, size=m))
    diag = np.cumsum(alphas[::-1])[::-1]
    theta = np.diag(diag)
    iu = np.triu_indices(m, k=1)
    vals = rng.normal(scale=1.0, size=len(iu[0]))
    theta[iu] += vals
    theta[(iu[1], iu[0])] -= vals
    return theta


def random_model(rng, p: int, m: int, canonical: bool = False):
    """Random stationary model for round-trip and invariance tests."""
    from oufactor.params import ModelParams

    if canonical:
        theta = random_canonical_theta(rng, m)
        diffusion = None
    else:
        theta = random_stable_theta(rng, m)
        diffusion = random_spd(rng, m)
    loadings = rng.normal(size=(p, m))
    if canonical:
        loadings[0] = np.abs(loadings[0])
    return ModelParams(
        theta=theta,
        loadings=loadings,
        obs_mean=rng.normal(size=p),
        noise_var=np.exp(rng.uniform(-2.0, 0.5, size=p)),
        diffusion=diffusion,
    )
