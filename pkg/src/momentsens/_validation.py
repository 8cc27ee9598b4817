"""Input validation helpers shared by the matrix algebra and the estimators."""

import numpy as np

from .exceptions import SingularBread

#: relative singular-value cutoff for rank decisions
RANK_TOL = 1e-10
#: condition-number ceiling above which a matrix is treated as singular
COND_MAX = 1e12
SYM_TOL = 1e-10


def check_matrix(a, name, shape=None):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1 and shape is not None and len(shape) == 2 and shape[1] == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array, got ndim={a.ndim}")
    if shape is not None:
        for got, want, ax in zip(a.shape, shape, "rc"):
            if want is not None and got != want:
                raise ValueError(f"{name} has shape {a.shape}, expected {shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def check_symmetric(a, name, tol=SYM_TOL):
    """Return ``(a + a')/2`` if ``a`` is symmetric up to roundoff, else raise."""
    a = check_matrix(a, name)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got {a.shape}")
    scale = np.max(np.abs(a))
    asym = np.max(np.abs(a - a.T))
    if scale > 0 and asym > tol * scale:
        raise ValueError(f"{name} is not symmetric (relative asymmetry {asym / scale:.3g})")
    return (a + a.T) / 2


def sym_eig(a):
    """Eigen-decomposition of a symmetric matrix plus its 2-norm condition number."""
    w, v = np.linalg.eigh(a)
    top = np.max(np.abs(w))
    low = np.min(w)
    cond = np.inf if low <= 0 else top / low
    return w, v, cond


def spd_inverse(a):
    """Inverse of a symmetric positive definite matrix and its condition number.

    Returns ``(None, inf)`` when ``a`` is not positive definite.
    """
    w, v, cond = sym_eig(a)
    if not np.isfinite(cond):
        return None, cond
    inv = (v / w) @ v.T
    return (inv + inv.T) / 2, cond


def check_positive_definite(a, name):
    a = check_symmetric(a, name)
    w = np.linalg.eigvalsh(a)
    if w[0] <= 0:
        raise ValueError(f"{name} is not positive definite (min eigenvalue {w[0]:.3g})")
    return a


def check_psd(a, name, tol=SYM_TOL):
    a = check_symmetric(a, name)
    w = np.linalg.eigvalsh(a)
    if w[0] < -tol * max(abs(w[-1]), 1e-300):
        raise ValueError(f"{name} is not positive semidefinite (min eigenvalue {w[0]:.3g})")
    return a


def check_full_column_rank(g, name="G", rank_tol=RANK_TOL):
    g = check_matrix(g, name)
    if g.shape[0] < g.shape[1]:
        raise ValueError(f"{name} has fewer rows ({g.shape[0]}) than columns ({g.shape[1]})")
    sv = np.linalg.svd(g, compute_uv=False)
    if sv[0] == 0 or sv[-1] <= rank_tol * sv[0]:
        # G'WG is then singular for every W: the parameters are not identified
        raise SingularBread(f"{name} does not have full column rank")
    return g


def check_theta(theta, n_params):
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.shape != (n_params,):
        raise ValueError(f"theta must have length {n_params}, got {theta.shape[0]}")
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta contains non-finite entries")
    return theta
