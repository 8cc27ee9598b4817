"""Generic GMM machinery: criterion minimization, numerical ``G``, ``S`` and ``W``."""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator

from ._validation import check_theta
from .exceptions import DegenerateMoment, NoImprovement, NonFinite
from .gmm_core import GmmIngredients, asymptotic_covariance, inverse_moment_covariance
from .sensitivity import full_report

#: relative step of the central differences, per Jacobian scheme
JACOBIAN_STEPS = {"smooth": 1e-5, "simulated": 5e-2}


class MomentModel:
    """A set of moment conditions ``E[f(x_i, theta0)] = 0``.

    Subclasses implement :meth:`moments`, returning the ``n x J`` matrix of
    per-observation contributions. Simulation-based models must hold their
    simulation draws fixed (common random numbers) so that :meth:`moments` is
    a deterministic function of ``(data, theta)``.
    """

    param_names = ()
    moment_names = ()
    jacobian_scheme = "smooth"

    @property
    def J(self):
        return len(self.moment_names)

    @property
    def P(self):
        return len(self.param_names)

    def moments(self, data, theta):
        raise NotImplementedError

    def mean_moments(self, data, theta):
        return self.moments(data, theta).mean(axis=0)

    def simulate(self, n, seed):
        raise NotImplementedError(f"{type(self).__name__} has no data generator")


class FunctionMomentModel(MomentModel):
    """Wrap a plain function ``f(data, theta) -> (n, J)`` as a :class:`MomentModel`."""

    def __init__(self, func, param_names, moment_names, jacobian_scheme="smooth"):
        self.func = func
        self.param_names = tuple(param_names)
        self.moment_names = tuple(moment_names)
        self.jacobian_scheme = jacobian_scheme

    def moments(self, data, theta):
        return np.asarray(self.func(data, theta), dtype=float)


@dataclass
class EstimateResult:
    theta_hat: np.ndarray
    criterion_value: float
    ingredients: GmmIngredients
    n_evals: int
    start_criterion: float = np.nan


def _checked_moments(model, data, theta):
    F = np.asarray(model.moments(data, theta), dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    if not np.all(np.isfinite(F)):
        raise NonFinite(f"non-finite moment contributions at theta={theta}")
    return F


def criterion(model, data, W, theta):
    g = _checked_moments(model, data, theta).mean(axis=0)
    return float(g @ W @ g)


def numerical_jacobian(model, data, theta, scheme=None):
    """Central-difference Jacobian of the mean moments, ``J x P``.

    ``smooth`` uses steps ``1e-5 max(1, |theta_j|)``; ``simulated`` uses the
    much wider ``5e-2 max(1, |theta_j|)`` suited to step-function moments
    computed with common random numbers.
    """
    scheme = scheme or model.jacobian_scheme
    if scheme not in JACOBIAN_STEPS:
        raise ValueError(f"unknown Jacobian scheme {scheme!r}")
    theta = np.asarray(theta, dtype=float)
    steps = JACOBIAN_STEPS[scheme] * np.maximum(1.0, np.abs(theta))
    cols = []
    for j, h in enumerate(steps):
        up = theta.copy()
        dn = theta.copy()
        up[j] += h
        dn[j] -= h
        g_up = _checked_moments(model, data, up).mean(axis=0)
        g_dn = _checked_moments(model, data, dn).mean(axis=0)
        cols.append((g_up - g_dn) / (up[j] - dn[j]))
    return np.column_stack(cols)


def covariance_of_rows(F):
    """Covariance of the rows of ``F`` with divisor ``n``."""
    F = np.asarray(F, dtype=float)
    n = F.shape[0]
    centered = F - F.mean(axis=0)
    S = centered.T @ centered / n
    S = (S + S.T) / 2
    scale = np.max(np.abs(F), axis=0)
    bad = np.flatnonzero(np.diag(S) <= (1e-12 * scale) ** 2)
    if bad.size:
        raise DegenerateMoment(f"moments {bad.tolist()} have zero variance")
    return S


def moment_covariance(model, data, theta):
    """``S``: sample covariance of the moment contributions at ``theta``."""
    F = _checked_moments(model, data, theta)
    if F.shape[0] < F.shape[1] + 1:
        raise ValueError(f"need at least J+1={F.shape[1] + 1} observations")
    return covariance_of_rows(F)


def diagonal_weight(S):
    """``diag(1 / S_kk)``."""
    d = np.diag(np.asarray(S, dtype=float))
    if np.any(d <= 0):
        raise DegenerateMoment(f"moments {np.flatnonzero(d <= 0).tolist()} have zero variance")
    return np.diag(1.0 / d)


def bootstrap_moment_variance(model, data, theta, B=500, seed=0):
    """``n`` times the bootstrap variance of the mean moment vector.

    Rows (observations) are resampled with replacement; replication ``b`` draws
    its indices from its own keyed stream, so the result only depends on
    ``seed``.
    """
    if B < 2:
        raise ValueError("B must be at least 2")
    F = _checked_moments(model, data, theta)
    n = F.shape[0]
    means = np.empty((B, F.shape[1]))
    for b in range(B):
        gen = np.random.Generator(np.random.Philox(key=[int(seed), b]))
        means[b] = F[gen.integers(0, n, n)].mean(axis=0)
    var = means.var(axis=0, ddof=1) * n
    scale = np.max(np.abs(F), axis=0)
    bad = np.flatnonzero(var <= (1e-12 * scale) ** 2)
    if bad.size:
        raise DegenerateMoment(f"moments {bad.tolist()} have zero bootstrap variance")
    return var


def _jitter(theta, gen):
    width = np.maximum(0.1 * np.abs(theta), 0.1)
    return theta + gen.uniform(-1.0, 1.0, theta.shape) * width


def gmm_estimate(
    model,
    data,
    W,
    theta_start,
    budget=1,
    seed=0,
    scheme=None,
    simplex_step=0.1,
    maxfev=None,
):
    """Minimize ``g(theta)' W g(theta)`` by Nelder-Mead with jittered restarts.

    The first run starts at ``theta_start``; ``budget - 1`` more start from
    points jittered by ``+-max(10%, 0.1)`` per component. The best local
    minimum is returned along with ``(G, S, W)`` evaluated there.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    W = np.asarray(W, dtype=float)
    theta_start = check_theta(theta_start, model.P)
    gen = np.random.Generator(np.random.Philox(key=[int(seed), 0x6E6D]))
    n_evals = 0

    def crit(theta):
        nonlocal n_evals
        n_evals += 1
        return criterion(model, data, W, theta)

    f_start = crit(theta_start)
    best_x, best_f = theta_start, f_start
    P = model.P
    for run in range(budget):
        x0 = theta_start if run == 0 else _jitter(theta_start, gen)
        simplex = np.vstack([x0] + [x0 + simplex_step * max(1.0, abs(x0[j])) * np.eye(P)[j] for j in range(P)])
        res = minimize(
            crit,
            x0,
            method="Nelder-Mead",
            options={
                "initial_simplex": simplex,
                "xatol": 1e-8,
                "fatol": 1e-12,
                "maxfev": maxfev or 400 * P,
                "adaptive": P > 3,
            },
        )
        if res.fun < best_f:
            best_x, best_f = np.asarray(res.x, dtype=float), float(res.fun)
    if best_f > f_start:
        raise NoImprovement(f"best criterion {best_f:.6g} exceeds start value {f_start:.6g}")
    ing = ingredients_at(model, data, best_x, W, scheme)
    return EstimateResult(best_x, best_f, ing, n_evals, f_start)


def ingredients_at(model, data, theta, W, scheme=None):
    G = numerical_jacobian(model, data, theta, scheme)
    S = moment_covariance(model, data, theta)
    return GmmIngredients(G, S, W)


def resolve_weight(weighting, S):
    if isinstance(weighting, str):
        if weighting == "optimal":
            return inverse_moment_covariance(S)
        if weighting == "diagonal":
            return diagonal_weight(S)
        if weighting == "identity":
            return np.eye(S.shape[0])
        raise ValueError(f"unknown weighting {weighting!r}")
    return np.asarray(weighting, dtype=float)


class GMMEstimator(BaseEstimator):
    """Fit a :class:`MomentModel` by GMM and collect its asymptotic ingredients.

    Parameters
    ----------
    model : MomentModel
    weighting : {"diagonal", "optimal", "identity"} or ndarray, default="diagonal"
        String choices are built from ``S`` at ``theta_start``.
    theta_start : array-like, optional
        Defaults to ``model.theta0``.
    optimize : bool, default=True
        If False, ``theta_`` is ``theta_start`` and only ``G``, ``S`` and ``W``
        are evaluated there (how the tables for the simulated examples are built).
    n_restarts : int, default=1
        Total Nelder-Mead runs (the first from ``theta_start``).
    jacobian_scheme : {"smooth", "simulated"}, optional
        Defaults to the model's own scheme.
    random_state : int, default=0
        Seed for restart jitter.

    Attributes
    ----------
    theta_, criterion_, ingredients_, covariance_, standard_errors_, n_evals_
    """

    def __init__(
        self,
        model=None,
        weighting="diagonal",
        theta_start=None,
        optimize=True,
        n_restarts=1,
        jacobian_scheme=None,
        random_state=0,
    ):
        self.model = model
        self.weighting = weighting
        self.theta_start = theta_start
        self.optimize = optimize
        self.n_restarts = n_restarts
        self.jacobian_scheme = jacobian_scheme
        self.random_state = random_state

    def _start(self):
        start = self.theta_start
        if start is None:
            start = getattr(self.model, "theta0", None)
        if start is None:
            raise ValueError("theta_start is required when the model has no theta0")
        return check_theta(start, self.model.P)

    def fit(self, X, y=None):
        start = self._start()
        if isinstance(self.weighting, str):
            W = resolve_weight(self.weighting, moment_covariance(self.model, X, start))
        else:
            W = np.asarray(self.weighting, dtype=float)
        if self.optimize:
            res = gmm_estimate(
                self.model, X, W, start, budget=self.n_restarts, seed=self.random_state, scheme=self.jacobian_scheme
            )
        else:
            ing = ingredients_at(self.model, X, start, W, self.jacobian_scheme)
            res = EstimateResult(start, criterion(self.model, X, W, start), ing, 1)
        n = len(X)
        self.result_ = res
        self.theta_ = res.theta_hat
        self.criterion_ = res.criterion_value
        self.ingredients_ = res.ingredients
        self.n_evals_ = res.n_evals
        self.n_obs_ = n
        self.asymptotic_covariance_ = asymptotic_covariance(res.ingredients).sigma
        self.covariance_ = self.asymptotic_covariance_ / n
        self.standard_errors_ = np.sqrt(np.diag(self.covariance_))
        return self

    def transform(self, X):
        """Per-observation moment contributions at ``theta_``."""
        return self.model.moments(X, self.theta_)

    def score(self, X, y=None):
        return -criterion(self.model, X, self.ingredients_.W, self.theta_)

    def sensitivity(self):
        return full_report(self.ingredients_, self.model.param_names, self.model.moment_names)
