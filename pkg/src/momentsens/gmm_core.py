"""Asymptotic covariance algebra for GMM estimators.

Everything here works on small dense matrices: ``G`` (J x P Jacobian of the
expected moments), ``S`` (J x J covariance of the moment contributions) and
``W`` (J x J weighting matrix).
"""

from dataclasses import dataclass

import numpy as np

from ._validation import (
    COND_MAX,
    check_full_column_rank,
    check_matrix,
    check_positive_definite,
    check_psd,
    spd_inverse,
)
from .exceptions import SingularBread, SingularS


@dataclass(frozen=True)
class GmmIngredients:
    """Validated ``(G, S, W)`` triple evaluated at a parameter point.

    ``S`` and ``W`` are symmetrized on construction when their asymmetry is
    pure roundoff and rejected otherwise.
    """

    G: np.ndarray
    S: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        G = check_full_column_rank(check_matrix(self.G, "G"))
        J = G.shape[0]
        S = check_psd(check_matrix(self.S, "S", (J, J)), "S")
        W = check_positive_definite(check_matrix(self.W, "W", (J, J)), "W")
        for name, val in (("G", G), ("S", S), ("W", W)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def J(self):
        return self.G.shape[0]

    @property
    def P(self):
        return self.G.shape[1]

    def with_weight(self, W):
        return GmmIngredients(self.G, self.S, W)


@dataclass(frozen=True)
class CovarianceResult:
    sigma: np.ndarray
    condition_number: float


def _bread_inverse(G, W):
    bread = G.T @ W @ G
    bread = (bread + bread.T) / 2
    inv, cond = spd_inverse(bread)
    if inv is None or cond > COND_MAX:
        raise SingularBread(f"G'WG is numerically singular (condition {cond:.3g})")
    return inv, cond


def _sandwich(G, S, W, bread_inv):
    meat = G.T @ W @ S @ W @ G
    sigma = bread_inv @ meat @ bread_inv
    return (sigma + sigma.T) / 2


def asymptotic_covariance(ing):
    """Sandwich covariance ``(G'WG)^-1 G'WSWG (G'WG)^-1`` of ``sqrt(n)(theta_hat - theta0)``."""
    bread_inv, cond = _bread_inverse(ing.G, ing.W)
    return CovarianceResult(_sandwich(ing.G, ing.S, ing.W, bread_inv), cond)


def inverse_moment_covariance(S):
    S = np.asarray(S, dtype=float)
    inv, cond = spd_inverse((S + S.T) / 2)
    if inv is None or cond > COND_MAX:
        raise SingularS(f"S is not invertible (condition {cond:.3g})")
    return inv


def optimal_covariance(G, S):
    """``(G' S^-1 G)^-1``, the covariance under the efficient weighting ``W = S^-1``."""
    G = check_full_column_rank(check_matrix(G, "G"))
    S = check_matrix(S, "S", (G.shape[0], G.shape[0]))
    S_inv = inverse_moment_covariance(S)
    info = G.T @ S_inv @ G
    sigma, cond = spd_inverse((info + info.T) / 2)
    if sigma is None or cond > COND_MAX:
        raise SingularBread(f"G'S^-1G is numerically singular (condition {cond:.3g})")
    return CovarianceResult(sigma, cond)


def matrix_to_frame(a):
    """Long ``j,k,value`` layout (1-based indices) used for matrix CSV files."""
    import pandas as pd

    a = np.atleast_2d(np.asarray(a, dtype=float))
    j, k = np.indices(a.shape)
    return pd.DataFrame({"j": j.ravel() + 1, "k": k.ravel() + 1, "value": a.ravel()})


def frame_to_matrix(df):
    cols = {c.strip().lower() for c in df.columns}
    if not {"j", "k", "value"} <= cols:
        raise ValueError("matrix CSV needs the header j,k,value")
    df = df.rename(columns=lambda c: c.strip().lower())
    j = df["j"].to_numpy(dtype=int) - 1
    k = df["k"].to_numpy(dtype=int) - 1
    if j.min() < 0 or k.min() < 0:
        raise ValueError("matrix indices are 1-based")
    out = np.full((j.max() + 1, k.max() + 1), np.nan)
    out[j, k] = df["value"].to_numpy(dtype=float)
    if np.isnan(out).any():
        raise ValueError("matrix CSV is missing entries")
    return out


def write_matrix_csv(a, path):
    matrix_to_frame(a).to_csv(path, index=False, float_format="%.17g")


def read_matrix_csv(path):
    import pandas as pd

    return frame_to_matrix(pd.read_csv(path, float_precision="round_trip"))
