"""Maximum-likelihood estimation in the identifiable parametrization.

The canonical model is packed into a flat vector so a quasi-Newton
optimizer can search an unconstrained space:

    [log alpha_1..m | upper antisymmetric entries | loadings (row-major)
     | obs_mean | log noise_var]

where the theta diagonal is the reversed cumulative sum of the alphas
(diag_k = alpha_k + ... + alpha_m), which enforces a strictly decreasing
positive diagonal, and the antisymmetric entries run over the strict upper
triangle in row-major order. The log transforms keep alphas and
measurement-error variances positive without explicit bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .canonical import sign_normalize
from .errors import EstimationError, NumericalError
from .kalman import TimeSeries, loglikelihood
from .params import ModelParams

_CBRT_EPS = float(np.finfo(float).eps) ** (1.0 / 3.0)


def packed_length(p: int, m: int) -> int:
    """Number of free parameters: p(m + 2) + m(m + 1)/2."""
    if p < 1 or m < 1:
        raise ValueError(f"p and m must be >= 1, got p={p}, m={m}")
    return p * (m + 2) + m * (m + 1) // 2


def pack(params: ModelParams) -> np.ndarray:
    """Flatten a canonical model into the optimizer vector.

    Requires identity diffusion, a strictly decreasing positive theta
    diagonal, an antisymmetric off-diagonal part, and strictly positive
    noise variances. Inverse of `unpack` up to floating-point rounding in
    the log/exp and cumulative-sum transforms (the map is a bijection).
    """
    m, p = params.m, params.p
    if params.diffusion is not None and np.abs(
        params.diffusion - np.eye(m)
    ).max() > 1e-8:
        raise ValueError("pack requires identity diffusion (canonical form)")
    theta = params.theta
    scale = max(1.0, np.abs(theta).max())
    if np.abs(theta + theta.T - 2 * np.diag(np.diag(theta))).max() > 1e-8 * scale:
        raise ValueError("pack requires an antisymmetric off-diagonal part")
    d = np.diag(theta)
    alphas = np.diff(d[::-1])[::-1] if m > 1 else d[:1].copy()
    if m > 1:
        alphas = np.concatenate([alphas, d[-1:]])
    if np.any(alphas <= 0):
        raise ValueError(
            "pack requires a strictly decreasing positive theta diagonal"
        )
    if np.any(params.noise_var <= 0):
        raise ValueError("pack requires strictly positive noise variances")
    iu = np.triu_indices(m, k=1)
    return np.concatenate(
        [
            np.log(alphas),
            theta[iu],
            params.loadings.reshape(-1),
            params.obs_mean,
            np.log(params.noise_var),
        ]
    )


def unpack(x: np.ndarray, p: int, m: int) -> ModelParams:
    """Rebuild the canonical model from an optimizer vector."""
    x = np.asarray(x, dtype=float)
    k = packed_length(p, m)
    if x.shape != (k,):
        raise ValueError(f"expected a vector of length {k}, got shape {x.shape}")
    n_anti = m * (m - 1) // 2
    logs = x[:m]
    anti = x[m : m + n_anti]
    z = x[m + n_anti : m + n_anti + p * m].reshape(p, m)
    mu = x[m + n_anti + p * m : m + n_anti + p * m + p]
    log_h = x[m + n_anti + p * m + p :]
    alphas = np.exp(logs)
    diag = np.cumsum(alphas[::-1])[::-1]
    theta = np.diag(diag)
    if n_anti:
        iu = np.triu_indices(m, k=1)
        theta[iu] = anti
        theta[(iu[1], iu[0])] = -anti
    return ModelParams(
        theta=theta,
        loadings=z.copy(),
        obs_mean=mu.copy(),
        noise_var=np.exp(log_h),
        diffusion=None,
    )


def numerical_gradient(f, x: np.ndarray) -> np.ndarray:
    """Central-difference gradient with per-coordinate scaled steps.

    Uses h_i = eps^(1/3) * max(1, |x_i|). If a probe is non-finite the
    coordinate falls back to a one-sided difference against f(x); if both
    probes are non-finite that coordinate is reported as 0 so a
    line-search-based optimizer can still back off.
    """
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    f_center = None
    for i in range(x.size):
        h = _CBRT_EPS * max(1.0, abs(x[i]))
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        fp = f(xp)
        fm = f(xm)
        if np.isfinite(fp) and np.isfinite(fm):
            grad[i] = (fp - fm) / (2.0 * h)
            continue
        if f_center is None:
            f_center = f(x)
        if np.isfinite(fp) and np.isfinite(f_center):
            grad[i] = (fp - f_center) / h
        elif np.isfinite(fm) and np.isfinite(f_center):
            grad[i] = (f_center - fm) / h
        else:
            grad[i] = 0.0
    return grad


@dataclass
class StartResult:
    """Diagnostics for one optimization start."""

    index: int
    loglik: float
    n_evals: int
    converged: bool
    message: str


@dataclass
class FitResult:
    """Output of `fit`.

    Attributes
    ----------
    params : ModelParams
        Sign-normalized canonical estimate.
    loglik : float
        Maximized log-likelihood.
    packed : ndarray
        The estimate in packed form (consistent with `params`).
    n_evals : int
        Total objective evaluations across all starts, including the ones
        spent inside gradient probes.
    converged : bool
        Whether the winning start terminated by tolerance rather than by
        budget.
    start_index : int
        Which start produced the estimate.
    starts : list of StartResult
        Per-start diagnostics.
    """

    params: ModelParams
    loglik: float
    packed: np.ndarray
    n_evals: int
    converged: bool
    start_index: int
    starts: list[StartResult]


class _BudgetExceeded(Exception):
    pass


def _default_start(series: TimeSeries, m: int, rng) -> np.ndarray:
    """Data-driven initial vector: PCA loadings, sample mean and variances."""
    observed = series.values[~series.missing]
    p = series.p
    mu0 = observed.mean(axis=0)
    var0 = observed.var(axis=0)
    diag0 = np.geomspace(1.0, 0.05, m) if m > 1 else np.array([0.3])
    theta0 = np.diag(diag0)
    from .process import stationary_cov

    latent_sd = np.sqrt(np.diag(stationary_cov(theta0)))
    centered = observed - mu0
    z0 = np.zeros((p, m))
    if centered.shape[0] >= 2:
        _, svals, vt = np.linalg.svd(centered, full_matrices=False)
        comp_sd = svals / np.sqrt(centered.shape[0])
        n_use = min(m, vt.shape[0])
        for k in range(n_use):
            z0[:, k] = vt[k] * comp_sd[k] / latent_sd[k]
        if n_use < m:
            z0[:, n_use:] = 0.1 * rng.normal(size=(p, m - n_use))
    else:
        z0 = 0.1 * rng.normal(size=(p, m))
    h0 = np.maximum(0.5 * var0, 1e-4)
    start = ModelParams(
        theta=theta0, loadings=z0, obs_mean=mu0, noise_var=h0, diffusion=None
    )
    return pack(start)


def fit(
    series: TimeSeries,
    m: int,
    *,
    n_starts: int = 5,
    max_evals: int = 5000,
    tol: float = 1e-8,
    seed: int = 0,
    extra_starts: tuple[np.ndarray, ...] = (),
) -> FitResult:
    """Maximum-likelihood fit with m latent factors.

    Runs `n_starts` quasi-Newton searches (L-BFGS-B on the packed vector
    with the package's central-difference gradient): one data-driven start
    plus seeded random perturbations of it, plus any `extra_starts` packed
    vectors (appended after the regular ones). Each start is capped at
    `max_evals` objective evaluations; `tol` is the relative
    function-reduction stopping tolerance.

    Raises EstimationError when no start achieves a finite likelihood.
    """
    if not isinstance(series, TimeSeries):
        raise ValueError("series must be a TimeSeries")
    if m < 1 or m != int(m):
        raise ValueError(f"m must be a positive integer, got {m}")
    if n_starts < 1:
        raise ValueError(f"n_starts must be >= 1, got {n_starts}")
    m = int(m)
    p = series.p
    k = packed_length(p, m)
    rng = np.random.default_rng(seed)
    base = _default_start(series, m, rng)
    perturbs = rng.normal(scale=0.5, size=(n_starts - 1, k))
    start_vectors = [base] + [base + d for d in perturbs]
    for extra in extra_starts:
        extra = np.asarray(extra, dtype=float)
        if extra.shape != (k,):
            raise ValueError(
                f"extra start has shape {extra.shape}, expected {(k,)}"
            )
        start_vectors.append(extra)

    total_evals = 0
    diagnostics: list[StartResult] = []
    best_overall = np.inf
    best_x = None
    best_index = -1
    best_converged = False

    for idx, x0 in enumerate(start_vectors):
        evals = 0
        local_best = np.inf
        local_x = None

        def objective(x):
            nonlocal evals, local_best, local_x
            if evals >= max_evals:
                raise _BudgetExceeded
            evals += 1
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    value = -loglikelihood(unpack(x, p, m), series)
            except (NumericalError, ValueError, np.linalg.LinAlgError):
                return np.inf
            if not np.isfinite(value):
                return np.inf
            if value < local_best:
                local_best = value
                local_x = x.copy()
            return value

        def gradient(x):
            return numerical_gradient(objective, x)

        converged = False
        message = ""
        try:
            res = minimize(
                objective,
                x0,
                jac=gradient,
                method="L-BFGS-B",
                options={"maxfun": max_evals, "ftol": tol, "maxiter": max_evals},
            )
            converged = bool(res.success) and np.isfinite(local_best)
            message = str(res.message)
        except _BudgetExceeded:
            message = "evaluation budget exhausted"
        total_evals += evals
        diagnostics.append(
            StartResult(
                index=idx,
                loglik=-local_best if np.isfinite(local_best) else -np.inf,
                n_evals=evals,
                converged=converged,
                message=message,
            )
        )
        if local_x is not None and local_best < best_overall:
            best_overall = local_best
            best_x = local_x
            best_index = idx
            best_converged = converged

    if best_x is None:
        raise EstimationError(
            "no optimization start produced a finite likelihood"
        )
    raw = unpack(best_x, p, m)
    z, theta = sign_normalize(raw.loadings, raw.theta)
    params = ModelParams(
        theta=theta,
        loadings=z,
        obs_mean=raw.obs_mean,
        noise_var=raw.noise_var,
        diffusion=None,
    )
    return FitResult(
        params=params,
        loglik=-best_overall,
        packed=pack(params),
        n_evals=total_evals,
        converged=best_converged,
        start_index=best_index,
        starts=diagnostics,
    )
