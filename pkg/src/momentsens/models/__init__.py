from .probit import ProbitModel, ProbitParams, probit_moments, simulate_probit
from .retirement import (
    THETA_STAR,
    RetirementConfig,
    RetirementModel,
    RetirementParams,
    gamma_sensitivity,
    simulate_plans,
    synthetic_population,
)
from .weibull import WeibullModel, WeibullParams, integrated_hazard, simulate_weibull, weibull_moments

__all__ = [
    "ProbitModel",
    "ProbitParams",
    "probit_moments",
    "simulate_probit",
    "RetirementConfig",
    "RetirementModel",
    "RetirementParams",
    "THETA_STAR",
    "gamma_sensitivity",
    "simulate_plans",
    "synthetic_population",
    "WeibullModel",
    "WeibullParams",
    "integrated_hazard",
    "simulate_weibull",
    "weibull_moments",
]
