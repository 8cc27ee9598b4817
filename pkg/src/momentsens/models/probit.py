"""Probit model estimated from six moments of the generalized residual."""

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.special import ndtr

from ..estimation import MomentModel
from ..rng import normal_rows

BETA_TRUE = np.full(3, 1 / np.sqrt(3))
BETA_TRUE.setflags(write=False)
RHO_X = 0.5


@dataclass(frozen=True)
class ProbitParams:
    beta0: float = BETA_TRUE[0]
    beta1: float = BETA_TRUE[1]
    beta2: float = BETA_TRUE[2]

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_array())):
            raise ValueError("probit coefficients must be finite")

    def as_array(self):
        return np.array([self.beta0, self.beta1, self.beta2], dtype=float)


def simulate_probit(n, seed, params=None, convention="positive", n_jobs=None):
    """Draw ``(y, x1, x2)`` with ``(x1, x2)`` standard bivariate normal, corr 0.5.

    ``convention="positive"`` sets ``y = 1{y* > 0}``, which gives
    ``P(y = 1) = 0.66`` at the default coefficients and makes the moments below
    valid. ``convention="literal"`` sets ``y = 0`` when ``y* > 0`` and 1
    otherwise; under it the moments are centred at ``P(y=1) = 0.34`` instead.
    """
    if n < 1:
        raise ValueError("n must be positive")
    beta = (params or ProbitParams()).as_array()
    z = normal_rows(seed, n, 3, n_jobs=n_jobs)
    x1 = z[:, 0]
    x2 = RHO_X * z[:, 0] + np.sqrt(1 - RHO_X**2) * z[:, 1]
    ystar = beta[0] + beta[1] * x1 + beta[2] * x2 + z[:, 2]
    if convention == "positive":
        y = ystar > 0
    elif convention == "literal":
        y = ~(ystar > 0)
    else:
        raise ValueError(f"unknown convention {convention!r}")
    return pd.DataFrame({"y": y.astype(float), "x1": x1, "x2": x2})


def _design(data):
    x1 = np.asarray(data["x1"], dtype=float)
    x2 = np.asarray(data["x2"], dtype=float)
    return x1, x2, np.column_stack([np.ones_like(x1), x1, x2, x1 * x1, x1 * x2, x2 * x2])


def probit_moments(data, theta):
    """Columns ``e, e x1, e x2, e x1^2, e x1 x2, e x2^2`` with ``e = y - Phi(x'theta)``."""
    theta = np.asarray(theta, dtype=float)
    x1, x2, psi = _design(data)
    e = np.asarray(data["y"], dtype=float) - ndtr(theta[0] + theta[1] * x1 + theta[2] * x2)
    return e[:, None] * psi


def probit_jacobian(data, theta):
    """Sample analogue of ``E[-phi(x'theta) psi(x) (1, x1, x2)]``."""
    theta = np.asarray(theta, dtype=float)
    x1, x2, psi = _design(data)
    index = theta[0] + theta[1] * x1 + theta[2] * x2
    dens = np.exp(-0.5 * index**2) / np.sqrt(2 * np.pi)
    xt = np.column_stack([np.ones_like(x1), x1, x2])
    return -(psi * dens[:, None]).T @ xt / len(x1)


class ProbitModel(MomentModel):
    param_names = ("beta0", "beta1", "beta2")
    moment_names = ("E[e]", "E[e x1]", "E[e x2]", "E[e x1^2]", "E[e x1 x2]", "E[e x2^2]")
    jacobian_scheme = "smooth"
    theta0 = BETA_TRUE

    def moments(self, data, theta):
        return probit_moments(data, theta)

    def simulate(self, n, seed, n_jobs=None):
        return simulate_probit(n, seed, n_jobs=n_jobs)
