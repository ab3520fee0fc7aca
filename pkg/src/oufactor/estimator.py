"""Scikit-learn style estimator wrapping the maximum-likelihood fit."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .estimate import fit
from .kalman import TimeSeries, kalman_filter
from .selection import information_criteria


class FactorOU(BaseEstimator):
    """Latent factor model with mean-reverting continuous-time dynamics.

    Observations are noisy linear combinations of an m-dimensional
    Ornstein-Uhlenbeck process, observed at arbitrary (possibly
    irregular) times. `fit` maximizes the exact Gaussian likelihood in
    the identifiable canonical parametrization.

    Parameters
    ----------
    m : int
        Latent state dimension.
    n_starts : int
        Random optimization starts per fit.
    max_evals : int
        Total likelihood-evaluation budget across starts.
    tol : float
        Relative convergence tolerance of the optimizer.
    seed : int
        Seed for the start-point generator; fits are deterministic
        given the data and this seed.

    Attributes
    ----------
    params_ : ModelParams
        Fitted canonical parameters.
    loglik_ : float
        Maximized log-likelihood.
    aic_, bic_ : float
        Information criteria at the optimum.
    n_parameters_ : int
        Number of free parameters.
    converged_ : bool
        Whether the winning start reported convergence.
    result_ : FitResult
        Full per-start fit record.

    Examples
    --------
    >>> model = FactorOU(m=1, n_starts=2, seed=0)
    >>> model.fit(values, t=times).score(values, t=times)  # doctest: +SKIP
    """

    def __init__(self, m: int = 1, n_starts: int = 5, max_evals: int = 5000,
                 tol: float = 1e-8, seed: int = 0):
        self.m = m
        self.n_starts = n_starts
        self.max_evals = max_evals
        self.tol = tol
        self.seed = seed

    def _series(self, X, t) -> TimeSeries:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise ValueError(f"X must be 2-dimensional, got shape {X.shape}")
        if t is None:
            t = np.arange(X.shape[0], dtype=float)
        return TimeSeries(t, X)

    def fit(self, X, y=None, t=None):
        """Fit to an (n, p) array of observations.

        Rows of NaN mark missing observations. `t` gives the observation
        times (strictly increasing); equally spaced unit gaps are
        assumed when omitted. `y` is ignored (present for scikit-learn
        API compatibility).
        """
        series = self._series(X, t)
        result = fit(series, self.m, n_starts=self.n_starts,
                     max_evals=self.max_evals, tol=self.tol, seed=self.seed)
        ic = information_criteria(
            result.loglik, self.m, series.p, series.n_observed
        )
        self.params_ = result.params
        self.result_ = result
        self.loglik_ = result.loglik
        self.converged_ = result.converged
        self.aic_ = ic.aic
        self.bic_ = ic.bic
        self.n_parameters_ = ic.k
        self.n_features_in_ = series.p
        return self

    def predict(self, X, t=None) -> np.ndarray:
        """One-step-ahead predicted means for each row of X.

        Row i is predicted from rows before i only (the first row from
        the stationary distribution). NaN rows contribute no update, so
        trailing NaN rows yield pure forecasts.
        """
        check_is_fitted(self, "params_")
        series = self._series(X, t)
        if series.p != self.n_features_in_:
            raise ValueError(
                f"X has {series.p} coordinates but the model was fitted "
                f"with {self.n_features_in_}"
            )
        result = kalman_filter(self.params_, series)
        states = result.state_mean[: series.n]
        return self.params_.obs_mean + states @ self.params_.loadings.T

    def score(self, X, y=None, t=None) -> float:
        """Average log-likelihood per observed row (higher is better)."""
        check_is_fitted(self, "params_")
        series = self._series(X, t)
        if series.p != self.n_features_in_:
            raise ValueError(
                f"X has {series.p} coordinates but the model was fitted "
                f"with {self.n_features_in_}"
            )
        result = kalman_filter(self.params_, series)
        return result.loglik / max(result.n_observed, 1)
