"""Kalman filtering for the latent-factor OU model on irregular time grids.

The recursion works directly with the exact discrete transition over each
observed gap, so no interpolation or equal-spacing assumption is needed.
Fully missing rows are supported: they contribute no likelihood term and
the state is propagated through them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernel import filter_loop
from .errors import FilterDivergenceError
from .params import ModelParams
from .process import _clamp_psd, stationary_cov, transition_matrix

#: Multiplier for 95% prediction intervals (normal 0.975 quantile).
Z95 = 1.959964

#: Condition-number estimate of the innovation covariance above which the
#: filter is declared divergent.
COND_LIMIT = 1e12


@dataclass
class TimeSeries:
    """An irregularly sampled multivariate series.

    Parameters
    ----------
    times : (n,) array
        Strictly increasing observation times.
    values : (n, p) array
        One row per time. A row that is entirely NaN marks a missing
        observation; rows must otherwise be finite. Mixed rows (some NaN,
        some not) are rejected, since partial missingness is not modelled.
    missing : (n,) bool array, optional
        Explicit missing-row flags. Derived from NaN rows when omitted.
    """

    times: np.ndarray
    values: np.ndarray
    missing: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.ndim != 1:
            raise ValueError(f"times must be 1-dimensional, got shape {self.times.shape}")
        if not np.all(np.isfinite(self.times)):
            raise ValueError("times contains non-finite entries")
        if self.values.ndim != 2:
            raise ValueError(
                f"values must be 2-dimensional (rows, coordinates), got shape {self.values.shape}"
            )
        n = self.times.shape[0]
        if self.values.shape[0] != n:
            raise ValueError(
                f"times has {n} entries but values has {self.values.shape[0]} rows"
            )
        if n == 0:
            raise ValueError("series must contain at least one row")
        gaps = np.diff(self.times)
        if np.any(gaps <= 0):
            bad = int(np.flatnonzero(gaps <= 0)[0]) + 1
            raise ValueError(
                f"times must be strictly increasing; row {bad} "
                f"(t={self.times[bad]!r}) does not advance"
            )
        nan_rows = np.isnan(self.values)
        all_nan = nan_rows.all(axis=1)
        some_nan = nan_rows.any(axis=1) & ~all_nan
        if np.any(some_nan):
            bad = int(np.flatnonzero(some_nan)[0])
            raise ValueError(
                f"row {bad} mixes missing and observed entries; rows must be "
                "fully observed or fully missing"
            )
        if self.missing is None:
            self.missing = all_nan
        else:
            self.missing = np.asarray(self.missing, dtype=bool)
            if self.missing.shape != (n,):
                raise ValueError(f"missing must have shape {(n,)}")
            if np.any(all_nan & ~self.missing):
                bad = int(np.flatnonzero(all_nan & ~self.missing)[0])
                raise ValueError(f"row {bad} is NaN but not flagged missing")
        observed_bad = ~self.missing & ~np.all(np.isfinite(self.values), axis=1)
        if np.any(observed_bad):
            bad = int(np.flatnonzero(observed_bad)[0])
            raise ValueError(f"observed row {bad} contains non-finite entries")

    @property
    def n(self) -> int:
        """Number of rows (observed plus missing)."""
        return self.times.shape[0]

    @property
    def p(self) -> int:
        """Number of observed coordinates."""
        return self.values.shape[1]

    @property
    def n_observed(self) -> int:
        """Number of non-missing rows."""
        return int(np.sum(~self.missing))

    def split(self, train_rows: int) -> tuple["TimeSeries", "TimeSeries"]:
        """Split into a leading and trailing series at a row index."""
        if not 0 < train_rows < self.n:
            raise ValueError(
                f"train_rows must be in (0, {self.n}), got {train_rows}"
            )
        head = TimeSeries(
            self.times[:train_rows].copy(),
            self.values[:train_rows].copy(),
            self.missing[:train_rows].copy(),
        )
        tail = TimeSeries(
            self.times[train_rows:].copy(),
            self.values[train_rows:].copy(),
            self.missing[train_rows:].copy(),
        )
        return head, tail


@dataclass
class FilterResult:
    """Output of `kalman_filter`.

    Attributes
    ----------
    loglik : float
        Exact Gaussian log-likelihood of the observed rows.
    innovations : (n, p) array
        One-step prediction errors; NaN on missing rows.
    innovation_cov : (n, p, p) array
        Covariance of each one-step observation prediction.
    gains : (n, m, p) array
        Kalman gain mapping each innovation into the next state prediction
        (zero on missing rows).
    state_mean : (n + 1, m) array
        One-step state predictions; entry i is the mean of x(t_i) given
        rows before i, and the final entry is the filtered mean at the last
        time (zero-gap convention), ready for forecasting onward.
    state_cov : (n + 1, m, m) array
        Matching prediction covariances.
    n_observed : int
        Number of rows that contributed likelihood terms.
    """

    loglik: float
    innovations: np.ndarray
    innovation_cov: np.ndarray
    gains: np.ndarray
    state_mean: np.ndarray
    state_cov: np.ndarray
    n_observed: int


@dataclass
class Prediction:
    """One-step-ahead forecast of a single row.

    The interval is the plug-in 95% band mean +- 1.959964 * sd using the
    innovation covariance diagonal; parameter uncertainty is not included.
    """

    time: float
    mean: np.ndarray
    lower95: np.ndarray
    upper95: np.ndarray


def _gap_tables(params: ModelParams, times: np.ndarray):
    """Per-step transition tables, one entry per distinct gap length.

    The gap list gets a trailing zero so the recursion can close with a
    zero-length transition, making the final state entry the filtered
    (posterior) state at the last time.
    """
    sigma = params.diffusion_matrix()
    q_inf = stationary_cov(params.theta, sigma)
    gaps = np.concatenate([np.diff(times), [0.0]])
    uniq, gap_idx = np.unique(gaps, return_inverse=True)
    m = params.m
    trans = np.empty((uniq.size, m, m))
    noise = np.empty((uniq.size, m, m))
    for i, g in enumerate(uniq):
        if g == 0.0:
            trans[i] = np.eye(m)
            noise[i] = np.zeros((m, m))
        else:
            c = transition_matrix(params.theta, g)
            trans[i] = c
            noise[i] = _clamp_psd(
                q_inf - c @ q_inf @ c.T, "transition noise covariance"
            )
    return q_inf, gap_idx.astype(np.int64), trans, noise


def kalman_filter(params: ModelParams, series: TimeSeries) -> FilterResult:
    """Run the exact Kalman filter and return the full recursion output.

    The state is initialized at the stationary distribution (zero mean,
    stationary covariance), so theta must be stable. Raises
    FilterDivergenceError if an innovation covariance stops being positive
    definite or its condition estimate exceeds COND_LIMIT.
    """
    if series.p != params.p:
        raise ValueError(
            f"series has {series.p} coordinates but the model expects {params.p}"
        )
    q_inf, gap_idx, trans, noise = _gap_tables(params, series.times)
    status, bad, loglik, nobs, v, f, k, a, p = filter_loop(
        np.ascontiguousarray(series.values),
        series.missing.astype(np.uint8),
        gap_idx,
        trans,
        noise,
        np.ascontiguousarray(params.loadings),
        params.obs_mean,
        params.noise_var,
        np.zeros(params.m),
        q_inf,
        COND_LIMIT,
    )
    if status == 1:
        raise FilterDivergenceError(
            int(bad), "innovation covariance not positive definite"
        )
    if status == 2:
        raise FilterDivergenceError(
            int(bad), f"innovation covariance condition estimate exceeds {COND_LIMIT:.0e}"
        )
    return FilterResult(
        loglik=float(loglik),
        innovations=v,
        innovation_cov=f,
        gains=k,
        state_mean=a,
        state_cov=p,
        n_observed=int(nobs),
    )


def loglikelihood(params: ModelParams, series: TimeSeries) -> float:
    """Exact Gaussian log-likelihood of the observed rows."""
    return kalman_filter(params, series).loglik


def predict_one_step(
    params: ModelParams, train: TimeSeries, test: TimeSeries
) -> list[Prediction]:
    """Sequential one-step-ahead forecasts over a held-out continuation.

    Filters the training rows, then for each test row emits the one-step
    predictive mean and 95% interval before assimilating that row and
    moving on. Test times must all lie strictly after the training range.
    """
    if test.p != train.p:
        raise ValueError(
            f"train has {train.p} coordinates but test has {test.p}"
        )
    if test.times[0] <= train.times[-1]:
        raise ValueError(
            f"test must start after the training range; test t={test.times[0]!r} "
            f"does not follow train t={train.times[-1]!r}"
        )
    merged = TimeSeries(
        np.concatenate([train.times, test.times]),
        np.vstack([train.values, test.values]),
        np.concatenate([train.missing, test.missing]),
    )
    result = kalman_filter(params, merged)
    out = []
    for i in range(train.n, merged.n):
        mean = params.obs_mean + params.loadings @ result.state_mean[i]
        sd = np.sqrt(np.diag(result.innovation_cov[i]))
        out.append(
            Prediction(
                time=float(merged.times[i]),
                mean=mean,
                lower95=mean - Z95 * sd,
                upper95=mean + Z95 * sd,
            )
        )
    return out
