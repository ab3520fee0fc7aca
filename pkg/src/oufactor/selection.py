"""State-dimension selection by information criteria."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import NumericalError
from .estimate import FitResult, fit, pack, packed_length
from .kalman import TimeSeries
from .params import ModelParams

#: Tolerated decrease of the maximized log-likelihood when the state
#: dimension grows; larger drops trigger one refit with a bigger budget,
#: since nested models cannot genuinely fit worse.
NESTING_SLACK = 1e-3


class InformationCriteria(NamedTuple):
    aic: float
    bic: float
    k: int


def param_count(p: int, m: int) -> int:
    """Free parameters of the canonical model: p(m + 2) + m(m + 1)/2."""
    return packed_length(p, m)


def information_criteria(
    loglik: float, m: int, p: int, n_obs: int
) -> InformationCriteria:
    """AIC and BIC for a fitted model.

    aic = -2 loglik + 2 k and bic = -2 loglik + log(n_obs) k with
    k = param_count(p, m); n_obs is the number of observed rows.
    """
    if n_obs < 1:
        raise ValueError(f"n_obs must be >= 1, got {n_obs}")
    k = param_count(p, m)
    aic = -2.0 * loglik + 2.0 * k
    bic = -2.0 * loglik + np.log(n_obs) * k
    return InformationCriteria(aic=float(aic), bic=float(bic), k=k)


@dataclass
class SelectionRow:
    """Fit summary for one candidate state dimension."""

    m: int
    loglik: float | None
    k: int
    aic: float | None
    bic: float | None
    converged: bool
    n_evals: int
    refitted: bool
    error: str | None


@dataclass
class SelectionTable:
    """Result of `select_dimension`.

    best_aic / best_bic are the dimensions minimizing each criterion among
    the successful fits; `fits` keeps the winning FitResult per dimension
    for further use.
    """

    rows: list[SelectionRow]
    best_aic: int
    best_bic: int
    fits: dict[int, FitResult]

    def as_text(self) -> str:
        """Plain-text table with the selected dimensions starred."""
        lines = ["   m       loglik    k          aic          bic"]
        for row in self.rows:
            if row.error is not None:
                lines.append(f"{row.m:4d}  failed: {row.error}")
                continue
            a_mark = "*" if row.m == self.best_aic else " "
            b_mark = "*" if row.m == self.best_bic else " "
            lines.append(
                f"{row.m:4d}  {row.loglik:11.3f}  {row.k:3d}  "
                f"{row.aic:10.3f}{a_mark}  {row.bic:10.3f}{b_mark}"
            )
        return "\n".join(lines)


def _padded_start(result: FitResult, m_new: int, rng) -> np.ndarray:
    """Grow a fitted model to a larger dimension as a warm start.

    Keeps the fitted block, appends slower diagonal entries below the
    current minimum (preserving the strict decrease), zero new
    antisymmetric couplings, and small random extra loading columns.
    """
    old = result.params
    m_old = old.m
    theta = np.zeros((m_new, m_new))
    theta[:m_old, :m_old] = old.theta
    d_min = old.theta[m_old - 1, m_old - 1]
    for j in range(m_old, m_new):
        d_min = d_min / 2.0
        theta[j, j] = d_min
    z = np.hstack(
        [old.loadings, 0.05 * rng.normal(size=(old.p, m_new - m_old))]
    )
    padded = ModelParams(
        theta=theta,
        loadings=z,
        obs_mean=old.obs_mean.copy(),
        noise_var=old.noise_var.copy(),
        diffusion=None,
    )
    return pack(padded)


def select_dimension(
    series: TimeSeries,
    m_values=(1, 2, 3),
    *,
    n_starts: int = 5,
    max_evals: int = 5000,
    tol: float = 1e-8,
    seed: int = 0,
) -> SelectionTable:
    """Fit every candidate dimension and rank by AIC and BIC.

    Dimensions are fitted in increasing order; each fit receives the
    previous dimension's optimum (padded) as an extra warm start. A fit
    whose log-likelihood falls more than NESTING_SLACK below the previous
    dimension's is retried once with twice the starts, and the better of
    the two attempts is kept.
    """
    m_values = sorted({int(m) for m in m_values})
    if not m_values or m_values[0] < 1:
        raise ValueError(f"m_values must be positive integers, got {m_values}")
    rng = np.random.default_rng(seed)
    n_obs = series.n_observed
    rows: list[SelectionRow] = []
    fits: dict[int, FitResult] = {}
    prev: FitResult | None = None
    for i, m in enumerate(m_values):
        extra = ()
        if prev is not None:
            extra = (_padded_start(prev, m, rng),)
        refitted = False
        try:
            result = fit(
                series, m, n_starts=n_starts, max_evals=max_evals, tol=tol,
                seed=seed + i, extra_starts=extra,
            )
            if prev is not None and result.loglik < prev.loglik - NESTING_SLACK:
                refitted = True
                retry = fit(
                    series, m, n_starts=2 * n_starts, max_evals=max_evals,
                    tol=tol, seed=seed + i + 1000, extra_starts=extra,
                )
                if retry.loglik > result.loglik:
                    result = retry
        except NumericalError as exc:
            rows.append(
                SelectionRow(
                    m=m, loglik=None, k=param_count(series.p, m), aic=None,
                    bic=None, converged=False, n_evals=0, refitted=refitted,
                    error=str(exc),
                )
            )
            continue
        ic = information_criteria(result.loglik, m, series.p, n_obs)
        rows.append(
            SelectionRow(
                m=m, loglik=result.loglik, k=ic.k, aic=ic.aic, bic=ic.bic,
                converged=result.converged, n_evals=result.n_evals,
                refitted=refitted, error=None,
            )
        )
        fits[m] = result
        prev = result
    ok = [row for row in rows if row.error is None]
    if not ok:
        raise NumericalError("every candidate dimension failed to fit")
    best_aic = min(ok, key=lambda row: row.aic).m
    best_bic = min(ok, key=lambda row: row.bic).m
    return SelectionTable(rows=rows, best_aic=best_aic, best_bic=best_bic, fits=fits)
