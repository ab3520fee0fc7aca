"""Shared exception types."""

from __future__ import annotations


class NumericalError(RuntimeError):
    """A linear-algebra or optimization step failed numerically.

    Raised for singular solves, indefinite covariances beyond repair
    tolerance, and similar conditions that are not caused by invalid user
    input. The CLI maps this to exit code 2.
    """


class FilterDivergenceError(NumericalError):
    """The Kalman recursion produced a non-positive-definite or
    ill-conditioned prediction covariance.

    Parameters
    ----------
    step : int
        Index of the offending observation row.
    message : str, optional
        Extra detail appended to the standard text.
    """

    def __init__(self, step: int, message: str = ""):
        self.step = step
        text = f"filter diverged at observation row {step}"
        if message:
            text = f"{text}: {message}"
        super().__init__(text)


class EstimationError(NumericalError):
    """Every optimization start failed to produce a finite likelihood."""


class DegenerateSpectrumError(NumericalError):
    """Eigenvalues are too close for a stable eigenvector basis."""
