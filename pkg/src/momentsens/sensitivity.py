"""Moment informativeness measures for GMM estimators.

``m1`` is the bias-sensitivity matrix ``-(G'WG)^-1 G'W``. The remaining
measures describe how the asymptotic variance responds to a moment:

* ``m2`` / ``m3``: derivative with respect to the noise ``S[k, k]`` under
  efficient weighting (re-optimized) and under the weighting actually used;
* ``m4`` / ``m5``: change from dropping moment ``k`` altogether, keeping the
  remaining weights / re-optimizing them;
* ``m6``: derivative with respect to the weight ``W[k, k]``; zero when the
  weighting is already efficient.

Moment indices ``k`` are 0-based throughout.
"""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import COND_MAX, spd_inverse
from .exceptions import NOT_IDENTIFIED, NotOveridentified, SingularBread
from .gmm_core import (
    GmmIngredients,
    _bread_inverse,
    _sandwich,
    asymptotic_covariance,
    inverse_moment_covariance,
    optimal_covariance,
)

MEASURES = ("M1", "E1", "E2", "E3", "E4", "E5", "E6")


def _check_k(k, J):
    if not 0 <= k < J:
        raise IndexError(f"moment index {k} outside [0, {J})")


def m1(G, W):
    """Sensitivity of the estimator to moment misspecification, ``P x J``."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    W = np.asarray(W, dtype=float)
    bread_inv, _ = _bread_inverse(G, W)
    return -bread_inv @ G.T @ W


def m2(G, S, k):
    """``d Sigma_opt / d S[k, k]`` with the efficient weighting kept optimal."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    _check_k(k, G.shape[0])
    S_inv = inverse_moment_covariance(S)
    sigma_opt = optimal_covariance(G, S).sigma
    a = sigma_opt @ G.T @ S_inv[:, k]
    return np.outer(a, a)


def m3(G, W, k):
    """``d Sigma / d S[k, k]`` holding the weighting matrix fixed."""
    M = m1(G, W)
    _check_k(k, M.shape[1])
    return np.outer(M[:, k], M[:, k])


def _drop_mask(J, k):
    keep = np.ones(J)
    keep[k] = 0.0
    return np.outer(keep, keep)


def m4(G, W, S, k):
    """Covariance change from zeroing moment ``k``'s row and column of ``W``.

    Returns :data:`NOT_IDENTIFIED` when the reduced bread matrix has condition
    number above ``1e12``.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    J, P = G.shape
    if J <= P:
        raise NotOveridentified(f"dropping a moment needs J > P (J={J}, P={P})")
    _check_k(k, J)
    W = np.asarray(W, dtype=float)
    S = np.asarray(S, dtype=float)
    sigma = _sandwich(G, S, W, _bread_inverse(G, W)[0])
    W_drop = W * _drop_mask(J, k)
    try:
        bread_inv, _ = _bread_inverse(G, W_drop)
    except SingularBread:
        return NOT_IDENTIFIED
    return _sandwich(G, S, W_drop, bread_inv) - sigma


def m5(G, S, k):
    """Change in the efficient covariance from removing moment ``k``.

    Returns :data:`NOT_IDENTIFIED` when the reduced model loses rank.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    J, P = G.shape
    if J <= P:
        raise NotOveridentified(f"dropping a moment needs J > P (J={J}, P={P})")
    _check_k(k, J)
    S = np.asarray(S, dtype=float)
    keep = np.arange(J) != k
    G_k = G[keep]
    S_k_inv = inverse_moment_covariance(S[np.ix_(keep, keep)])
    info = G_k.T @ S_k_inv @ G_k
    reduced, cond = spd_inverse((info + info.T) / 2)
    if reduced is None or cond > COND_MAX:
        return NOT_IDENTIFIED
    return reduced - optimal_covariance(G, S).sigma


def m6(G, W, S, k):
    """``d Sigma / d W[k, k]``; a gauge of how far ``W`` is from efficient."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    _check_k(k, G.shape[0])
    W = np.asarray(W, dtype=float)
    S = np.asarray(S, dtype=float)
    bread_inv, _ = _bread_inverse(G, W)
    sigma = _sandwich(G, S, W, bread_inv)
    g_k = G[k]
    outer_gk = np.outer(g_k, g_k)  # G' O_kk G
    swg = S @ W @ G
    cross = np.outer(g_k, swg[k])  # G' O_kk S W G
    out = (
        -bread_inv @ outer_gk @ sigma
        + bread_inv @ cross @ bread_inv
        + bread_inv @ cross.T @ bread_inv
        - sigma @ outer_gk @ bread_inv
    )
    return out


@dataclass
class SensitivityReport:
    """Scaled measures, one ``P x J`` matrix per measure.

    ``e4`` and ``e5`` hold ``nan`` in columns where the model is not identified
    after dropping that moment; :meth:`value` maps those cells to
    :data:`NOT_IDENTIFIED`.
    """

    m1: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    e3: np.ndarray
    e4: np.ndarray
    e5: np.ndarray
    e6: np.ndarray
    e4_identified: np.ndarray
    e5_identified: np.ndarray
    sigma: np.ndarray
    sigma_opt: np.ndarray
    param_names: list = field(default_factory=list)
    moment_names: list = field(default_factory=list)

    @property
    def dropped_identified(self):
        return self.e4_identified & self.e5_identified

    @property
    def shape(self):
        return self.m1.shape

    def matrix(self, measure):
        return getattr(self, measure.lower())

    def flags(self, measure):
        """Boolean ``P x J`` mask of cells reported as not identified."""
        P, J = self.shape
        if measure.upper() == "E4":
            return np.broadcast_to(~self.e4_identified, (P, J))
        if measure.upper() == "E5":
            return np.broadcast_to(~self.e5_identified, (P, J))
        return np.zeros((P, J), dtype=bool)

    def value(self, measure, j, k):
        if self.flags(measure)[j, k]:
            return NOT_IDENTIFIED
        return float(self.matrix(measure)[j, k])

    def row(self, param):
        """All measures for one parameter as a ``J x 6`` table (E1..E6)."""
        import pandas as pd

        j = param if isinstance(param, int) else self.param_names.index(param)
        return pd.DataFrame(
            {f"E{i}": self.matrix(f"E{i}")[j] for i in range(1, 7)},
            index=pd.Index(self.moment_names, name="moment"),
        )

    def to_frame(self):
        """Long format: ``parameter, moment, measure, value, flag``."""
        import pandas as pd

        recs = []
        for measure in MEASURES:
            mat = self.matrix(measure)
            flags = self.flags(measure)
            for j, pname in enumerate(self.param_names):
                for k, mname in enumerate(self.moment_names):
                    recs.append(
                        (pname, mname, measure, mat[j, k], "not_identified" if flags[j, k] else "")
                    )
        return pd.DataFrame(recs, columns=["parameter", "moment", "measure", "value", "flag"])


def _labels(names, n, prefix):
    if names is None:
        return [f"{prefix}{i + 1}" for i in range(n)]
    names = [str(x) for x in names]
    if len(names) != n:
        raise ValueError(f"expected {n} labels, got {len(names)}")
    return names


def full_report(ing, param_names=None, moment_names=None):
    """Compute ``M1`` and the scaled measures ``E1``..``E6`` for every pair.

    Scaling: ``E1 = M1 sqrt(S_kk)``; ``E2 = M2_jj S_kk / Sigma_opt_jj``;
    ``E3 = M3_jj S_kk / Sigma_jj``; ``E4 = M4_jj / Sigma_jj``;
    ``E5 = M5_jj / Sigma_opt_jj``; ``E6 = M6_jj W_kk / Sigma_jj``.
    """
    if not isinstance(ing, GmmIngredients):
        ing = GmmIngredients(*ing)
    J, P = ing.J, ing.P
    # The E measures are unit-free, so evaluate them on the equilibrated
    # problem (unit S_kk); rescaling a moment then changes nothing but rounding.
    root = np.sqrt(np.diag(ing.S))
    G = ing.G / root[:, None]
    S = ing.S / np.outer(root, root)
    W = ing.W * np.outer(root, root)
    S = (S + S.T) / 2
    W = (W + W.T) / 2
    sigma = asymptotic_covariance(GmmIngredients(G, S, W)).sigma
    sigma_opt = optimal_covariance(G, S).sigma
    d_sig = np.diag(sigma)
    d_opt = np.diag(sigma_opt)
    s_kk = np.ones(J)
    w_kk = np.diag(W)

    e1 = m1(G, W)
    M1 = e1 / root[None, :]
    e2, e3, e4, e5, e6 = (np.empty((P, J)) for _ in range(5))
    ok4 = np.ones(J, dtype=bool)
    ok5 = np.ones(J, dtype=bool)
    for k in range(J):
        e2[:, k] = np.diag(m2(G, S, k)) * s_kk[k] / d_opt
        e3[:, k] = e1[:, k] ** 2 * s_kk[k] / d_sig
        e6[:, k] = np.diag(m6(G, W, S, k)) * w_kk[k] / d_sig
        if J > P:
            r4 = m4(G, W, S, k)
            r5 = m5(G, S, k)
        else:
            r4 = r5 = NOT_IDENTIFIED
        if r4 is NOT_IDENTIFIED:
            ok4[k] = False
            e4[:, k] = np.nan
        else:
            e4[:, k] = np.diag(r4) / d_sig
        if r5 is NOT_IDENTIFIED:
            ok5[k] = False
            e5[:, k] = np.nan
        else:
            e5[:, k] = np.diag(r5) / d_opt
    return SensitivityReport(
        m1=M1,
        e1=e1,
        e2=e2,
        e3=e3,
        e4=e4,
        e5=e5,
        e6=e6,
        e4_identified=ok4,
        e5_identified=ok5,
        sigma=sigma,
        sigma_opt=sigma_opt,
        param_names=_labels(param_names, P, "theta"),
        moment_names=_labels(moment_names, J, "m"),
    )


class MomentSensitivity(BaseEstimator):
    """Estimator-style wrapper around :func:`full_report`.

    Parameters
    ----------
    param_names, moment_names : sequence of str, optional
        Row and column labels for the report.

    Attributes
    ----------
    report_ : SensitivityReport
    m1_, e1_ ... e6_ : ndarray of shape (P, J)
    dropped_identified_ : ndarray of bool, shape (J,)
    """

    def __init__(self, param_names=None, moment_names=None):
        self.param_names = param_names
        self.moment_names = moment_names

    def fit(self, X, S=None, W=None):
        """Fit from a :class:`GmmIngredients`, a fitted ``GMMEstimator`` or ``(G, S, W)``."""
        if hasattr(X, "ingredients_"):
            ing = X.ingredients_
            pn = self.param_names or getattr(X.model, "param_names", None)
            mn = self.moment_names or getattr(X.model, "moment_names", None)
        else:
            ing = X if isinstance(X, GmmIngredients) else GmmIngredients(X, S, W)
            pn, mn = self.param_names, self.moment_names
        rep = full_report(ing, pn, mn)
        self.report_ = rep
        self.m1_ = rep.m1
        for i in range(1, 7):
            setattr(self, f"e{i}_", rep.matrix(f"E{i}"))
        self.dropped_identified_ = rep.dropped_identified
        return self

    def to_frame(self):
        return self.report_.to_frame()
