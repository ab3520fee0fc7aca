"""Compiled inner loop of the Kalman filter.

numba is optional at import time: when it is unavailable the decorated
functions run as plain Python (same code path, much slower), so the
package stays importable and testable without a compiler.

Everything is written with explicit loops over preallocated buffers; the
state and observation dimensions are tiny, so per-call BLAS dispatch and
temporary allocation would dominate the runtime otherwise.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap


_LOG_2PI = math.log(2.0 * math.pi)


@njit(cache=True)
def _cholesky(a, lower):
    """Lower Cholesky factor of a into lower. Returns False on failure."""
    p = a.shape[0]
    for i in range(p):
        s = a[i, i]
        for k in range(i):
            s -= lower[i, k] * lower[i, k]
        if not (s > 0.0) or not np.isfinite(s):
            return False
        lower[i, i] = math.sqrt(s)
        for j in range(i + 1, p):
            t = a[j, i]
            for k in range(i):
                t -= lower[j, k] * lower[i, k]
            lower[j, i] = t / lower[i, i]
    return True


@njit(cache=True)
def _chol_solve_mat(lower, b, out):
    """Solve (lower lower^T) @ out = b for matrix b, column by column."""
    p = lower.shape[0]
    cols = b.shape[1]
    for j in range(cols):
        for i in range(p):
            s = b[i, j]
            for k in range(i):
                s -= lower[i, k] * out[k, j]
            out[i, j] = s / lower[i, i]
        for i in range(p - 1, -1, -1):
            s = out[i, j]
            for k in range(i + 1, p):
                s -= lower[k, i] * out[k, j]
            out[i, j] = s / lower[i, i]


@njit(cache=True)
def filter_loop(values, miss, gap_idx, trans, noise, z, mu, h, a0, p0, cond_limit):
    """Run the full Kalman recursion.

    Parameters are raw arrays: observations (n, p), missing-row flags (n,),
    per-step transition table index (n,) where entry i selects the gap from
    row i to row i + 1 (the last entry points at the zero gap), transition
    matrices (g, m, m), transition noise covariances (g, m, m), loadings
    (p, m), observation mean (p,), measurement-error variances (p,),
    initial state mean (m,) and covariance (m, m).

    Returns (status, bad_step, loglik, n_observed, innovations,
    innovation_covs, gains, state_means, state_covs). status is 0 on
    success, 1 when an innovation covariance loses positive definiteness
    and 2 when its condition estimate exceeds cond_limit; bad_step is the
    offending row. State arrays have n + 1 entries; entry i is the one-step
    prediction at row i and the final entry is the filtered state after the
    last row (zero-gap convention).
    """
    n, p = values.shape
    m = a0.shape[0]
    innovations = np.full((n, p), np.nan)
    innovation_covs = np.zeros((n, p, p))
    gains = np.zeros((n, m, p))
    state_means = np.zeros((n + 1, m))
    state_covs = np.zeros((n + 1, m, m))
    f = np.zeros((p, p))
    lower = np.zeros((p, p))
    w = np.zeros(p)
    vi = np.zeros(p)
    zp = np.zeros((p, m))
    gain_t = np.zeros((p, m))
    a = a0.copy()
    pcov = p0.copy()
    apost = np.zeros(m)
    ppost = np.zeros((m, m))
    tmp = np.zeros((m, m))
    loglik = 0.0
    nobs = 0
    for i in range(n):
        for j in range(m):
            state_means[i, j] = a[j]
            for k in range(m):
                state_covs[i, j, k] = pcov[j, k]
        # zp = loadings @ pcov, f = zp @ loadings^T + diag(h)
        for j in range(p):
            for s in range(m):
                acc = 0.0
                for r in range(m):
                    acc += z[j, r] * pcov[r, s]
                zp[j, s] = acc
        for j in range(p):
            for k in range(j + 1):
                acc = 0.0
                for s in range(m):
                    acc += zp[j, s] * z[k, s]
                f[j, k] = acc
                f[k, j] = acc
            f[j, j] += h[j]
        for j in range(p):
            for k in range(p):
                innovation_covs[i, j, k] = f[j, k]
        observed = miss[i] == 0
        if observed:
            for j in range(p):
                for k in range(j + 1):
                    lower[j, k] = 0.0
            if not _cholesky(f, lower):
                return (1, i, loglik, nobs, innovations, innovation_covs,
                        gains, state_means, state_covs)
            dmin = lower[0, 0]
            dmax = lower[0, 0]
            for j in range(1, p):
                d = lower[j, j]
                if d < dmin:
                    dmin = d
                if d > dmax:
                    dmax = d
            if (dmax / dmin) ** 2 > cond_limit:
                return (2, i, loglik, nobs, innovations, innovation_covs,
                        gains, state_means, state_covs)
            for j in range(p):
                acc = values[i, j] - mu[j]
                for r in range(m):
                    acc -= z[j, r] * a[r]
                vi[j] = acc
                innovations[i, j] = acc
            # forward solve lower @ w = vi
            logdet_half = 0.0
            quad = 0.0
            for j in range(p):
                s = vi[j]
                for k in range(j):
                    s -= lower[j, k] * w[k]
                w[j] = s / lower[j, j]
                logdet_half += math.log(lower[j, j])
                quad += w[j] * w[j]
            loglik += -0.5 * p * _LOG_2PI - logdet_half - 0.5 * quad
            nobs += 1
            # gain^T solves f @ gain_t = zp; gain = gain_t^T = pcov z^T f^-1
            _chol_solve_mat(lower, zp, gain_t)
            for j in range(m):
                acc = a[j]
                for r in range(p):
                    acc += gain_t[r, j] * vi[r]
                apost[j] = acc
            for j in range(m):
                for k in range(j + 1):
                    acc = pcov[j, k]
                    for r in range(p):
                        acc -= gain_t[r, j] * zp[r, k]
                    ppost[j, k] = acc
                    ppost[k, j] = acc
        else:
            for j in range(m):
                apost[j] = a[j]
                for k in range(m):
                    ppost[j, k] = pcov[j, k]
        gi = gap_idx[i]
        c = trans[gi]
        q = noise[gi]
        if observed:
            for j in range(m):
                for r in range(p):
                    acc = 0.0
                    for l in range(m):
                        acc += c[j, l] * gain_t[r, l]
                    gains[i, j, r] = acc
        for j in range(m):
            acc = 0.0
            for l in range(m):
                acc += c[j, l] * apost[l]
            a[j] = acc
        for j in range(m):
            for k in range(m):
                acc = 0.0
                for l in range(m):
                    acc += c[j, l] * ppost[l, k]
                tmp[j, k] = acc
        # lower triangle of c @ ppost @ c^T + q, mirrored for exact symmetry
        for j in range(m):
            for k in range(j + 1):
                acc = q[j, k]
                for l in range(m):
                    acc += tmp[j, l] * c[k, l]
                pcov[j, k] = acc
        for j in range(m):
            for k in range(j + 1, m):
                pcov[j, k] = pcov[k, j]
    for j in range(m):
        state_means[n, j] = a[j]
        for k in range(m):
            state_covs[n, j, k] = pcov[j, k]
    return (0, -1, loglik, nobs, innovations, innovation_covs,
            gains, state_means, state_covs)
