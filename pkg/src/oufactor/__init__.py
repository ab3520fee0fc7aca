"""Latent factor models with mean-reverting continuous-time dynamics.

Multivariate series observed at irregular times are modeled as noisy
linear combinations of an m-dimensional Ornstein-Uhlenbeck process.
The package provides exact simulation, Kalman-filter likelihoods,
identifiability-constrained maximum-likelihood estimation, canonical and
block-diagonal parameter interpretation, state-dimension selection, and
a command-line interface.
"""

from .canonical import (
    BlockForm,
    CanonicalTransform,
    apply_basis_change,
    block_diagonalize,
    canonicalize,
    exp_error_ratio,
    sign_normalize,
    theta_distance,
    to_canonical,
)
from .dataio import (
    example_path,
    load_model_params,
    read_params,
    read_series,
    write_params,
    write_series,
)
from .errors import (
    DegenerateSpectrumError,
    EstimationError,
    FilterDivergenceError,
    NumericalError,
)
from .estimate import FitResult, fit, numerical_gradient, pack, packed_length, unpack
from .estimator import FactorOU
from .kalman import (
    FilterResult,
    Prediction,
    TimeSeries,
    kalman_filter,
    loglikelihood,
    predict_one_step,
)
from .params import ModelParams
from .preprocess import (
    Climatology,
    RawCounts,
    day_of_year,
    deseasonalize,
    logratio_transform,
    read_counts,
)
from .process import (
    SpectralSummary,
    spectral_summary,
    stationary_cov,
    transition_matrix,
    transition_noise_cov,
)
from .selection import (
    InformationCriteria,
    SelectionTable,
    information_criteria,
    param_count,
    select_dimension,
)
from .simulate import (
    ExperimentResult,
    Scenario,
    run_experiment,
    scenario_suite,
    simulate,
)

__version__ = "0.1.0"

__all__ = [
    "BlockForm",
    "CanonicalTransform",
    "Climatology",
    "DegenerateSpectrumError",
    "EstimationError",
    "ExperimentResult",
    "FactorOU",
    "FilterDivergenceError",
    "FilterResult",
    "FitResult",
    "InformationCriteria",
    "ModelParams",
    "NumericalError",
    "Prediction",
    "RawCounts",
    "Scenario",
    "SelectionTable",
    "SpectralSummary",
    "TimeSeries",
    "apply_basis_change",
    "block_diagonalize",
    "canonicalize",
    "day_of_year",
    "deseasonalize",
    "example_path",
    "exp_error_ratio",
    "fit",
    "information_criteria",
    "kalman_filter",
    "load_model_params",
    "loglikelihood",
    "logratio_transform",
    "numerical_gradient",
    "pack",
    "packed_length",
    "param_count",
    "predict_one_step",
    "read_counts",
    "read_params",
    "read_series",
    "run_experiment",
    "scenario_suite",
    "select_dimension",
    "sign_normalize",
    "simulate",
    "spectral_summary",
    "stationary_cov",
    "theta_distance",
    "to_canonical",
    "transition_matrix",
    "transition_noise_cov",
    "unpack",
    "write_params",
    "write_series",
    "__version__",
]
