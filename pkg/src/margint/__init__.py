"""Robust marginal-integration estimation for additive regression models."""

from .data import Dataset, EvaluationGrid, read_csv, write_csv
from .errors import (AllPointsFailedError, DataFormatError,
                     DegenerateScaleError, GridCoverageError,
                     InsufficientSupportError, MargintError,
                     SingularDesignError, WindowEmptyError)
from .integration import (AdditiveFit, ComponentEstimate, IntegrationMeasure,
                          estimate_component, estimate_derivative,
                          estimate_mu, fit_additive, interp_component,
                          predict)
from .kernels import (BandwidthSpec, KernelSpec, eval_kernel, kernel_moment,
                      moment_matrix_S, product_weight, variance_matrix_V,
                      vector_s_q)
from .localfit import LocalFitConfig, LocalFitResult, local_m_fit, score
from .losses import LossSpec, psi, psi_prime, rho, weight
from .scale import ScaleEstimate, local_median, mad, residual_scale

__all__ = [
    "AdditiveFit", "AllPointsFailedError", "BandwidthSpec",
    "ComponentEstimate", "DataFormatError", "Dataset", "DegenerateScaleError",
    "EvaluationGrid", "GridCoverageError", "InsufficientSupportError",
    "IntegrationMeasure", "KernelSpec", "LocalFitConfig", "LocalFitResult",
    "LossSpec", "MargintError", "ScaleEstimate", "SingularDesignError",
    "WindowEmptyError", "estimate_component", "estimate_derivative",
    "estimate_mu", "eval_kernel", "fit_additive", "interp_component",
    "kernel_moment", "local_m_fit", "local_median", "mad", "moment_matrix_S",
    "predict", "product_weight", "psi", "psi_prime", "read_csv",
    "residual_scale", "rho", "score", "variance_matrix_V", "vector_s_q",
    "weight", "write_csv",
]

__version__ = "0.1.0"
