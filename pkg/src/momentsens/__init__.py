"""Moment informativeness measures for GMM and indirect-inference estimators."""

from .estimation import (
    EstimateResult,
    FunctionMomentModel,
    GMMEstimator,
    MomentModel,
    bootstrap_moment_variance,
    diagonal_weight,
    gmm_estimate,
    moment_covariance,
    numerical_jacobian,
)
from .exceptions import NOT_IDENTIFIED
from .gmm_core import CovarianceResult, GmmIngredients, asymptotic_covariance, optimal_covariance
from .sensitivity import MomentSensitivity, SensitivityReport, full_report, m1, m2, m3, m4, m5, m6

__version__ = "0.1.0"

__all__ = [
    "CovarianceResult",
    "EstimateResult",
    "FunctionMomentModel",
    "GMMEstimator",
    "GmmIngredients",
    "MomentModel",
    "MomentSensitivity",
    "NOT_IDENTIFIED",
    "SensitivityReport",
    "asymptotic_covariance",
    "bootstrap_moment_variance",
    "diagonal_weight",
    "full_report",
    "gmm_estimate",
    "m1",
    "m2",
    "m3",
    "m4",
    "m5",
    "m6",
    "moment_covariance",
    "numerical_jacobian",
    "optimal_covariance",
]
