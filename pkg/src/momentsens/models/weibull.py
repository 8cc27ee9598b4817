"""Mixed proportional hazard model with a Weibull baseline and a time-varying covariate.

The hazard is ``alpha t^(alpha-1) exp(beta0 + beta1 x1 + beta2 x2(t)) eta`` with
``x2`` piecewise constant on ``[0,1], (1,2], (2,inf)``. Since ``eta`` times the
integrated hazard at ``T`` is unit exponential,

    log Lambda0(T) + gamma_E + beta0

(with ``Lambda0`` the integrated hazard without the intercept) has mean zero
given the covariates when ``E[log eta] = 0``. Interacting it with
``(1, x1, x21, x22, x23)`` gives five moments for
``theta = (beta0/alpha, beta1/alpha, beta2/alpha, alpha)``.
"""

from dataclasses import dataclass

import numpy as np
import pandas as pd

from ..estimation import MomentModel
from ..exceptions import NonFinite
from ..rng import normal_rows, uniform_rows

EULER_GAMMA = 0.5772156649
ALPHA_TRUE = 2.0
BETA_TRUE = np.array([-1.0, 1 / np.sqrt(2), 1 / np.sqrt(2)])
LOG_ETA_VAR = 0.5
UNDERFLOW = 1e-300


@dataclass(frozen=True)
class WeibullParams:
    """``theta = (b0, b1, b2, alpha)`` with ``b_j = beta_j / alpha``."""

    b0: float
    b1: float
    b2: float
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")

    @classmethod
    def from_beta(cls, beta, alpha):
        beta = np.asarray(beta, dtype=float)
        return cls(*(beta / alpha), alpha)

    def as_array(self):
        return np.array([self.b0, self.b1, self.b2, self.alpha])


THETA_TRUE = WeibullParams.from_beta(BETA_TRUE, ALPHA_TRUE).as_array()
THETA_TRUE.setflags(write=False)


def _levels(record, beta):
    x1 = np.asarray(record["x1"], dtype=float)
    base = beta[0] * x1
    return tuple(np.exp(base + beta[1] * np.asarray(record[c], dtype=float)) for c in ("x21", "x22", "x23"))


def integrated_hazard(t, record, beta, alpha):
    """``int_0^t alpha s^(alpha-1) exp(beta1 x1 + beta2 x2(s)) ds`` in closed form.

    ``record`` maps ``x1, x21, x22, x23`` to scalars or arrays; ``beta`` is
    ``(beta1, beta2)``.
    """
    t = np.asarray(t, dtype=float)
    k1, k2, k3 = _levels(record, beta)
    two_a = 2.0**alpha
    out = k1 * np.minimum(t, 1.0) ** alpha
    out = out + np.where(t > 1, k2 * (np.minimum(t, 2.0) ** alpha - 1.0), 0.0)
    out = out + np.where(t > 2, k3 * (t**alpha - two_a), 0.0)
    return out


def invert_integrated_hazard(target, record, beta, alpha):
    """Solve ``integrated_hazard(T) = target`` segment by segment."""
    k1, k2, k3 = _levels(record, beta)
    target, k1, k2, k3 = (np.array(a, dtype=float) for a in np.broadcast_arrays(target, k1, k2, k3))
    two_a = 2.0**alpha
    cut1 = k1
    cut2 = k1 + k2 * (two_a - 1.0)
    seg1 = target <= cut1
    seg2 = ~seg1 & (target <= cut2)
    seg3 = ~(seg1 | seg2)
    inv_a = 1.0 / alpha
    T = np.empty(target.shape)
    T[seg1] = np.exp(inv_a * (np.log(target[seg1]) - np.log(k1[seg1])))
    T[seg2] = (1.0 + (target[seg2] - cut1[seg2]) / k2[seg2]) ** inv_a
    T[seg3] = (two_a + (target[seg3] - cut2[seg3]) / k3[seg3]) ** inv_a
    return T


def simulate_weibull(
    n, seed, beta=BETA_TRUE, alpha=ALPHA_TRUE, log_eta_var=LOG_ETA_VAR, antithetic=True, n_jobs=None, keep_eta=False
):
    """Draw ``n`` spells ``(T, x1, x21, x22, x23)``, plus ``eta`` if ``keep_eta``.

    With ``antithetic=True`` rows come in groups of four sharing ``eta`` and the
    uniform draw, with the signs of ``Z1`` and of ``(Z2, Z3, Z4)`` flipped across
    the group. Sample means of every covariate and of ``x1 x2s`` are then exactly
    zero, so the structural zeros in the Jacobian hold in-sample and the
    drop-one identification failures are detected exactly.
    """
    if n < 1:
        raise ValueError("n must be positive")
    beta = np.asarray(beta, dtype=float)
    if antithetic:
        m = -(-n // 4)
        base = normal_rows(seed, m, 5, n_jobs=n_jobs)
        u = uniform_rows(seed, m, 1, stream=1, n_jobs=n_jobs)[:, 0]
        signs = np.array([[1, 1], [-1, 1], [1, -1], [-1, -1]], dtype=float)
        z = np.repeat(base[:, :4], 4, axis=0)
        z[:, 0] *= np.tile(signs[:, 0], m)
        z[:, 1:] *= np.tile(signs[:, 1], m)[:, None]
        log_eta = np.repeat(base[:, 4], 4)
        u = np.repeat(u, 4)
        z, log_eta, u = z[:n], log_eta[:n], u[:n]
    else:
        base = normal_rows(seed, n, 5, n_jobs=n_jobs)
        z, log_eta = base[:, :4], base[:, 4]
        u = uniform_rows(seed, n, 1, stream=1, n_jobs=n_jobs)[:, 0]
    x1 = z[:, 0]
    x21 = z[:, 1]
    x22 = (x21 + z[:, 2]) / np.sqrt(2)
    x23 = (x22 + z[:, 3]) / np.sqrt(2)
    eta = np.exp(np.sqrt(log_eta_var) * log_eta)
    record = {"x1": x1, "x21": x21, "x22": x22, "x23": x23}
    # 1 - u lies in (0, 1], so the exponential draw is finite
    target = -np.log1p(-u) / (eta * np.exp(beta[0]))
    target = np.maximum(target, UNDERFLOW)
    T = invert_integrated_hazard(target, record, beta[1:], alpha)
    out = pd.DataFrame({"T": T, **record})
    if keep_eta:
        out["eta"] = eta
    return out


def weibull_residual(data, theta):
    b0, b1, b2, alpha = np.asarray(theta, dtype=float)
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    lam = integrated_hazard(np.asarray(data["T"], dtype=float), data, (alpha * b1, alpha * b2), alpha)
    if np.any(~np.isfinite(lam)) or np.any(lam < UNDERFLOW):
        raise NonFinite("integrated hazard underflowed or overflowed")
    return np.log(lam) + EULER_GAMMA + alpha * b0


def weibull_moments(data, theta):
    """Residual times ``(1, x1, x21, x22, x23)``, ``n x 5``."""
    r = weibull_residual(data, theta)
    psi = np.column_stack([np.ones(len(r))] + [np.asarray(data[c], dtype=float) for c in ("x1", "x21", "x22", "x23")])
    return r[:, None] * psi


class WeibullModel(MomentModel):
    param_names = ("beta0/alpha", "beta1/alpha", "beta2/alpha", "alpha")
    moment_names = ("E[e]", "E[e x1]", "E[e x21]", "E[e x22]", "E[e x23]")
    jacobian_scheme = "smooth"
    theta0 = THETA_TRUE

    def __init__(self, antithetic=True):
        self.antithetic = antithetic

    def moments(self, data, theta):
        return weibull_moments(data, theta)

    def simulate(self, n, seed, n_jobs=None):
        return simulate_weibull(n, seed, antithetic=self.antithetic, n_jobs=n_jobs)
