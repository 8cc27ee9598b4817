"""Joint retirement planning of couples, estimated by indirect inference.

Each spouse values retirement in year ``t`` over working by a flow

    U_j(t) = x_j'beta_j + delta_j(t) + gamma 1{C_j(t) >= C_other(r_other)} + eps_j

(the wife also gets ``alpha 1{t >= SPA_w}``), where ``C_j(t) = cohort_j + t``
is calendar time. A plan ``(r_h, r_w)`` on the integer grid 50..70 is worth
``V_h + V_w`` with ``V_j = sum_{t=r_j}^{T_max} rho^(t - age_j) U_j(t)``, and the
household picks the best plan by exhaustive search.

The fast path precomputes, per household, every plan's value as
``base[r_h, r_w] + eps_h e_h[r_h] + eps_w e_w[r_w]`` and leaves only the
argmax to a compiled loop. :func:`flow_utility`, :func:`plan_value` and
:func:`optimal_plan` are direct scalar transcriptions kept as a reference.
"""

import configparser
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import pandas as pd
from numba import njit

from ..estimation import GMMEstimator, MomentModel, bootstrap_moment_variance
from ..exceptions import MomentSensError, OmegaNotPD
from ..rng import normal_rows
from ..sensitivity import full_report

AGE_MIN, AGE_MAX = 40, 59
GRID = np.arange(50, 71)
INTERVIEW_YEAR = 2001

#: own covariates, in regression order
OWN = ("high_skilled", "gp10", "worse_health", "income", "ppp", "eps", "birth_year")
#: utility covariates: own plus the spouse's income and pension status
UTILITY_X = OWN + ("spouse_income", "spouse_ppp", "spouse_eps")
DELTA_TERMS = ("const", "trend", "age55", "age60", "age65")

AGE_GROUPS = ((50, 54), (55, 55), (56, 59), (60, 60), (61, 64), (65, 65))

# Bernoulli means (husband, wife) and log-normal income targets, in £1,000
DUMMY_MEANS = {
    "high_skilled": (0.157, 0.139),
    "gp10": (0.039, 0.080),
    "worse_health": (0.182, 0.115),
    "ppp": (0.280, 0.134),
    "eps": (0.514, 0.466),
}
INCOME_MEAN = (25.248, 13.815)
INCOME_SD = (17.12, 10.78)
AGE_GAP_MEAN, AGE_GAP_SD = 1.5, 3.0


def _regression_names():
    xs = ["const"] + [f"{v}_h" for v in OWN] + [f"{v}_w" for v in OWN] + ["cohort_w_1951_1954", "cohort_w_1955plus"]
    return [f"reg_{j}:{x}" for j in ("h", "w") for x in xs]


def _group_label(lo, hi):
    return f"{lo}" if lo == hi else f"{lo}-{hi}"


MOMENT_NAMES = tuple(
    _regression_names()
    + [f"share_{j}:{_group_label(*g)}" for j in ("h", "w") for g in AGE_GROUPS]
    + ["var(e_h)", "var(e_w)", "cov(e_h,e_w)", "diff[-2,-1]", "diff[1,2]", "joint"]
)
N_MOMENTS = len(MOMENT_NAMES)
JOINT = MOMENT_NAMES.index("joint")


# ---------------------------------------------------------------- parameters


@dataclass(frozen=True)
class RetirementParams:
    gamma: float
    alpha_spa: float
    beta_h: tuple
    beta_w: tuple
    delta_h: tuple
    delta_w: tuple
    sigma_w2: float
    sigma_hw: float

    def __post_init__(self):
        for name, size in (("beta_h", 10), ("beta_w", 10), ("delta_h", 5), ("delta_w", 5)):
            val = tuple(float(v) for v in np.ravel(getattr(self, name)))
            if len(val) != size:
                raise ValueError(f"{name} needs {size} entries, got {len(val)}")
            object.__setattr__(self, name, val)

    @property
    def omega(self):
        return np.array([[1.0, self.sigma_hw], [self.sigma_hw, self.sigma_w2]])

    def omega_cholesky(self):
        """Lower Cholesky factor of ``Omega``; raises :class:`OmegaNotPD`."""
        try:
            L = np.linalg.cholesky(self.omega)
        except np.linalg.LinAlgError:
            L = None
        if L is None or not np.all(np.isfinite(L)) or L[1, 1] <= 1e-12:
            raise OmegaNotPD(f"Omega is not positive definite (sigma_w2={self.sigma_w2}, sigma_hw={self.sigma_hw})")
        return L

    def as_array(self):
        return np.concatenate(
            [[self.gamma, self.alpha_spa], self.beta_h, self.beta_w, self.delta_h, self.delta_w, [self.sigma_w2, self.sigma_hw]]
        )

    @classmethod
    def from_array(cls, theta):
        t = np.asarray(theta, dtype=float)
        if t.shape != (len(PARAM_NAMES),):
            raise ValueError(f"expected {len(PARAM_NAMES)} parameters, got shape {t.shape}")
        return cls(t[0], t[1], t[2:12], t[12:22], t[22:27], t[27:32], t[32], t[33])

    def replace(self, **changes):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return RetirementParams(**d)


PARAM_NAMES = tuple(
    ["gamma", "alpha_spa"]
    + [f"beta_h:{v}" for v in UTILITY_X]
    + [f"beta_w:{v}" for v in UTILITY_X]
    + [f"delta_h:{v}" for v in DELTA_TERMS]
    + [f"delta_w:{v}" for v in DELTA_TERMS]
    + ["sigma_w2", "sigma_hw"]
)

#: magnitudes of the published estimates, used as the synthetic truth
THETA_STAR = RetirementParams(
    gamma=0.026,
    alpha_spa=0.105,
    beta_h=(-0.129, 0.315, 0.091, 0.006, 0.194, 0.610, 0.005, 0.005, 0.074, 0.171),
    beta_w=(-0.148, 0.152, 0.001, 0.011, -0.005, -0.044, -0.005, 0.003, -0.005, 0.013),
    delta_h=(-2.413, 0.036, 0.632, 0.867, 1.978),
    delta_w=(-1.667, 0.020, 0.729, 1.323, 1.452),
    sigma_w2=0.917,
    sigma_hw=0.359,
)


def delta_design(t):
    """Rows ``(1, t - 25, 1{t>=55}, 1{t>=60}, 1{t>=65})``."""
    t = np.asarray(t, dtype=float)
    return np.stack([np.ones_like(t), t - 25, t >= 55, t >= 60, t >= 65], axis=-1).astype(float)


def state_pension_age(cohort_w):
    """Wife's SPA: 60 before the 1950 cohort, 65 from 1955, linear in between."""
    return np.clip(60.0 + (np.asarray(cohort_w, dtype=float) - 1950.0), 60.0, 65.0)


# ---------------------------------------------------------------- households


@dataclass(frozen=True)
class Household:
    x_h: np.ndarray
    x_w: np.ndarray
    age_h: int
    age_w: int
    cohort_h: int
    cohort_w: int
    spa_w: float = None

    def __post_init__(self):
        for name in ("x_h", "x_w"):
            x = np.asarray(getattr(self, name), dtype=float)
            if x.shape != (10,):
                raise ValueError(f"{name} needs 10 covariates")
            object.__setattr__(self, name, x)
        if self.spa_w is None:
            object.__setattr__(self, "spa_w", float(state_pension_age(self.cohort_w)))


def covariate_columns(member):
    return [f"{member}_{v}" for v in UTILITY_X]


HOUSEHOLD_COLUMNS = ["cohort_h", "cohort_w", "age_h", "age_w"] + covariate_columns("h") + covariate_columns("w") + ["spa_w"]


def _lognormal_params(mean, sd):
    s2 = np.log1p((sd / mean) ** 2)
    return np.log(mean) - s2 / 2, np.sqrt(s2)


def synthetic_population(n, seed, interview_year=INTERVIEW_YEAR):
    """Draw ``n`` households with independent covariates matched to target marginals.

    Ages are uniform on 40..59 for the wife; the husband is older by a rounded
    normal gap (mean 1.5), redrawn until his age is also in range.
    """
    if n < 1:
        raise ValueError("n must be positive")
    gen = np.random.Generator(np.random.Philox(key=[int(seed), 0x686F75736568]))
    age_w = np.empty(n, dtype=int)
    age_h = np.empty(n, dtype=int)
    todo = np.arange(n)
    while todo.size:
        aw = gen.integers(AGE_MIN, AGE_MAX + 1, todo.size)
        ah = aw + np.rint(gen.normal(AGE_GAP_MEAN, AGE_GAP_SD, todo.size)).astype(int)
        ok = (ah >= AGE_MIN) & (ah <= AGE_MAX)
        age_w[todo[ok]] = aw[ok]
        age_h[todo[ok]] = ah[ok]
        todo = todo[~ok]
    out = {"cohort_h": interview_year - age_h, "cohort_w": interview_year - age_w, "age_h": age_h, "age_w": age_w}
    own = {}
    for m, member in enumerate(("h", "w")):
        for v in OWN:
            if v == "income":
                mu, sig = _lognormal_params(INCOME_MEAN[m], INCOME_SD[m])
                own[member, v] = gen.lognormal(mu, sig, n)
            elif v == "birth_year":
                own[member, v] = (out[f"cohort_{member}"] - 1955).astype(float)
            else:
                own[member, v] = (gen.random(n) < DUMMY_MEANS[v][m]).astype(float)
    for member, spouse in (("h", "w"), ("w", "h")):
        for v in OWN:
            out[f"{member}_{v}"] = own[member, v]
        for v in ("income", "ppp", "eps"):
            out[f"{member}_spouse_{v}"] = own[spouse, v]
    out["spa_w"] = state_pension_age(out["cohort_w"])
    return pd.DataFrame(out)[HOUSEHOLD_COLUMNS]


def validate_households(df):
    """Check a household table, filling ``spa_w`` from the cohort if absent."""
    missing = [c for c in HOUSEHOLD_COLUMNS if c != "spa_w" and c not in df.columns]
    if missing:
        raise ValueError(f"household table is missing columns: {', '.join(missing)}")
    df = df.copy()
    if "spa_w" not in df.columns:
        df["spa_w"] = state_pension_age(df["cohort_w"])
    for c in ("age_h", "age_w"):
        if ((df[c] < AGE_MIN) | (df[c] > AGE_MAX)).any():
            raise ValueError(f"{c} outside [{AGE_MIN}, {AGE_MAX}]")
    for c in ("R_h", "R_w"):
        if c in df.columns and (~df[c].isin(GRID)).any():
            raise ValueError(f"{c} outside the retirement grid 50..70")
    return df


def households_from_frame(df):
    df = validate_households(df)
    xh = df[covariate_columns("h")].to_numpy(float)
    xw = df[covariate_columns("w")].to_numpy(float)
    return [
        Household(xh[i], xw[i], int(r.age_h), int(r.age_w), int(r.cohort_h), int(r.cohort_w), float(r.spa_w))
        for i, r in enumerate(df.itertuples(index=False))
    ]


# ---------------------------------------------------------------- reference model


def flow_utility(member, t, partner_retire_calendar, hh, eps, params):
    """Utility of being retired rather than working at own age ``t``."""
    if member == "h":
        x, beta, delta, cohort = hh.x_h, params.beta_h, params.delta_h, hh.cohort_h
    elif member == "w":
        x, beta, delta, cohort = hh.x_w, params.beta_w, params.delta_w, hh.cohort_w
    else:
        raise ValueError("member is 'h' or 'w'")
    u = float(x @ np.asarray(beta)) + float(delta_design(t) @ np.asarray(delta)) + eps
    if cohort + t >= partner_retire_calendar:
        u += params.gamma
    if member == "w" and t >= hh.spa_w:
        u += params.alpha_spa
    return u


def plan_value(member, r_own, r_partner, hh, eps, params, rho=0.96, t_max=80):
    """Discounted sum of flows from ``r_own`` to ``t_max``."""
    if member == "h":
        age, partner_cal = hh.age_h, hh.cohort_w + r_partner
    else:
        age, partner_cal = hh.age_w, hh.cohort_h + r_partner
    return sum(rho ** (t - age) * flow_utility(member, t, partner_cal, hh, eps, params) for t in range(r_own, t_max + 1))


def optimal_plan(hh, eps_pair, params, rho=0.96, t_max=80):
    """Brute-force argmax of ``V_h + V_w`` over the grid; first maximum wins."""
    best, plan = -np.inf, None
    for rh in GRID:
        for rw in GRID:
            v = plan_value("h", rh, rw, hh, eps_pair[0], params, rho, t_max) + plan_value(
                "w", rw, rh, hh, eps_pair[1], params, rho, t_max
            )
            if v > best:
                best, plan = v, (int(rh), int(rw))
    return plan


# ---------------------------------------------------------------- fast kernel


@njit(cache=True)
def _argmax_plans(base, e_h, e_w, eps, out_h, out_w):
    n, n_draws = eps.shape[0], eps.shape[1]
    m = base.shape[1]
    for i in range(n):
        for s in range(n_draws):
            eh = eps[i, s, 0]
            ew = eps[i, s, 1]
            best = -np.inf
            bh = 0
            bw = 0
            for a in range(m):
                vh = eh * e_h[i, a]
                for b in range(m):
                    v = base[i, a, b] + vh + ew * e_w[i, b]
                    if v > best:
                        best = v
                        bh = a
                        bw = b
            out_h[i, s] = bh
            out_w[i, s] = bw


def _tail_sums(a):
    """``out[:, r] = sum_{t >= r} a[:, t]`` with a trailing zero column."""
    out = np.zeros((a.shape[0], a.shape[1] + 1))
    out[:, :-1] = np.cumsum(a[:, ::-1], axis=1)[:, ::-1]
    return out


class PlanSolver:
    """Per-household quantities that do not depend on the parameters."""

    def __init__(self, households, rho=0.96, t_max=80):
        if not 0 < rho:
            raise ValueError("rho must be positive")
        if t_max < GRID[-1]:
            raise ValueError(f"t_max must be at least {GRID[-1]}")
        df = validate_households(households)
        self.rho, self.t_max = float(rho), int(t_max)
        self.n = len(df)
        ts = np.arange(GRID[0], t_max + 1)
        self.ts = ts
        self.x_h = df[covariate_columns("h")].to_numpy(float)
        self.x_w = df[covariate_columns("w")].to_numpy(float)
        self.cohort_h = df["cohort_h"].to_numpy(float)
        self.cohort_w = df["cohort_w"].to_numpy(float)
        age_h = df["age_h"].to_numpy(float)
        age_w = df["age_w"].to_numpy(float)
        self.disc_h = rho ** (ts[None, :] - age_h[:, None])
        self.disc_w = rho ** (ts[None, :] - age_w[:, None])
        self.tail_h = _tail_sums(self.disc_h)
        self.tail_w = _tail_sums(self.disc_w)
        m = len(GRID)
        self.e_h = np.ascontiguousarray(self.tail_h[:, :m])
        self.e_w = np.ascontiguousarray(self.tail_w[:, :m])
        self.d_t = delta_design(ts)
        self.after_spa = (ts[None, :] >= df["spa_w"].to_numpy(float)[:, None]).astype(float)
        self.spa_tail = _tail_sums(self.disc_w * self.after_spa)[:, :m]
        # gamma term: each spouse collects it from max(own retirement, partner's retirement in own age terms)
        L = len(ts)
        a = np.arange(m)
        gap = (self.cohort_w - self.cohort_h).astype(int)
        start_h = np.maximum(a[None, :, None], a[None, None, :] + gap[:, None, None])
        start_w = np.maximum(a[None, None, :], a[None, :, None] - gap[:, None, None])
        rows = np.arange(self.n)[:, None, None]
        self.joint = self.tail_h[rows, np.clip(start_h, 0, L)] + self.tail_w[rows, np.clip(start_w, 0, L)]

    def base(self, params):
        """Deterministic value of every plan, ``(n, 21, 21)``, indexed ``[r_h, r_w]``."""
        m = len(GRID)
        u_h = (self.x_h @ np.asarray(params.beta_h))[:, None] + (self.d_t @ np.asarray(params.delta_h))[None, :]
        u_w = (self.x_w @ np.asarray(params.beta_w))[:, None] + (self.d_t @ np.asarray(params.delta_w))[None, :]
        a_h = _tail_sums(self.disc_h * u_h)[:, :m]
        a_w = _tail_sums(self.disc_w * u_w)[:, :m] + params.alpha_spa * self.spa_tail
        return a_h[:, :, None] + a_w[:, None, :] + params.gamma * self.joint

    def solve(self, params, eps):
        """Optimal plans for shocks ``eps`` of shape ``(n, S, 2)``; returns ages."""
        eps = np.ascontiguousarray(eps, dtype=float)
        if eps.ndim != 3 or eps.shape[0] != self.n or eps.shape[2] != 2:
            raise ValueError(f"eps must have shape ({self.n}, S, 2)")
        out_h = np.empty(eps.shape[:2], dtype=np.int64)
        out_w = np.empty(eps.shape[:2], dtype=np.int64)
        _argmax_plans(np.ascontiguousarray(self.base(params)), self.e_h, self.e_w, eps, out_h, out_w)
        return out_h + GRID[0], out_w + GRID[0]


def taste_shocks(params, z):
    """Map standard normals ``z[..., 2]`` to ``N(0, Omega)`` draws."""
    return z @ params.omega_cholesky().T


def standard_draws(seed, n, s_sim, stream=3):
    """Common random numbers ``(n, S, 2)``; draw ``(i, s)`` is keyed on ``(seed, i * S + s)``."""
    return normal_rows(seed, n * s_sim, 2, stream=stream).reshape(n, s_sim, 2)


def simulate_plans(households, params, seed, rho=0.96, t_max=80):
    """Attach one simulated plan per household as columns ``R_h, R_w``."""
    df = validate_households(households)
    solver = PlanSolver(df, rho, t_max)
    eps = taste_shocks(params, standard_draws(seed, len(df), 1, stream=11))
    r_h, r_w = solver.solve(params, eps)
    df["R_h"] = r_h[:, 0]
    df["R_w"] = r_w[:, 0]
    return df


def ordered_probit_shares(households, params, member="h"):
    """Closed-form plan-age distribution when ``gamma = 0`` and ``delta`` increases.

    The member retires at the first age with a positive flow, so with
    ``c = x'beta + eps``: 50 if ``c > -delta(50)``, ``r`` if
    ``-delta(r) < c <= -delta(r-1)``, and 70 if ``c <= -delta(69)``.
    """
    from scipy.special import ndtr

    df = validate_households(households)
    if member == "h":
        xb = df[covariate_columns("h")].to_numpy(float) @ np.asarray(params.beta_h)
        delta, sd = np.asarray(params.delta_h), 1.0
        thresholds = np.tile(delta_design(GRID[:-1]) @ delta, (len(df), 1))
    else:
        xb = df[covariate_columns("w")].to_numpy(float) @ np.asarray(params.beta_w)
        delta, sd = np.asarray(params.delta_w), np.sqrt(params.sigma_w2)
        spa = df["spa_w"].to_numpy(float)
        thresholds = (delta_design(GRID[:-1]) @ delta)[None, :] + params.alpha_spa * (GRID[None, :-1] >= spa[:, None])
    # P(R <= r) = P(c + delta(r) > 0) for r < 70
    cdf = ndtr((xb[:, None] + thresholds) / sd)
    cdf = np.column_stack([cdf, np.ones(len(df))])
    probs = np.diff(cdf, axis=1, prepend=0.0)
    return probs.mean(axis=0)


# ---------------------------------------------------------------- moments


def regressors(df):
    """``(1, own_h, own_w, 1{1950<c_w<=1954}, 1{c_w>=1955})``, ``n x 17``."""
    c_w = df["cohort_w"].to_numpy(float)
    cols = [np.ones(len(df))]
    cols += [df[f"h_{v}"].to_numpy(float) for v in OWN]
    cols += [df[f"w_{v}"].to_numpy(float) for v in OWN]
    cols += [((c_w > 1950) & (c_w <= 1954)).astype(float), (c_w >= 1955).astype(float)]
    return np.column_stack(cols)


def _group_dummies(ages):
    ages = np.asarray(ages)
    return np.stack([(ages >= lo) & (ages <= hi) for lo, hi in AGE_GROUPS], axis=-1).astype(float)


def _diff_dummies(diff):
    diff = np.asarray(diff)
    return np.stack([(diff == -2) | (diff == -1), (diff == 1) | (diff == 2), diff == 0], axis=-1).astype(float)


@dataclass
class RetirementData:
    """Households with observed plans, plus every parameter-free statistic."""

    frame: pd.DataFrame
    solver: PlanSolver
    z: np.ndarray
    X: np.ndarray
    beta_ols: np.ndarray
    fitted: np.ndarray
    resid: np.ndarray
    data_rows: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.frame)


def prepare_data(households, s_sim, seed, rho=0.96, t_max=80):
    """Precompute the data-side statistics and the common random numbers."""
    df = validate_households(households)
    if not {"R_h", "R_w"} <= set(df.columns):
        raise ValueError("household table needs observed plans R_h and R_w")
    if s_sim < 1:
        raise ValueError("s_sim must be positive")
    X = regressors(df)
    R = df[["R_h", "R_w"]].to_numpy(float)
    beta_ols, *_ = np.linalg.lstsq(X, R, rcond=None)
    fitted = X @ beta_ols
    resid = R - fitted
    cal = df[["cohort_h", "cohort_w"]].to_numpy(float) + R
    data_rows = np.column_stack(
        [
            _group_dummies(R[:, 0]),
            _group_dummies(R[:, 1]),
            resid[:, 0] ** 2,
            resid[:, 1] ** 2,
            resid[:, 0] * resid[:, 1],
            _diff_dummies(cal[:, 0] - cal[:, 1]),
        ]
    )
    return RetirementData(
        frame=df,
        solver=PlanSolver(df, rho, t_max),
        z=standard_draws(seed, len(df), s_sim),
        X=X,
        beta_ols=beta_ols,
        fitted=fitted,
        resid=resid,
        data_rows=data_rows,
    )


def moment_rows(prep, params):
    """Per-household contributions to the 52 moments, ``n x 52``.

    The regression block uses ``X_i (mean_s R_i^(s) - R_i)``: its column means
    equal ``mean_i X_i mean_s e_i^(s)`` exactly (OLS residuals are orthogonal
    to ``X``) while its rows carry the sampling noise of the data. The other
    blocks are data minus simulated.
    """
    r_h, r_w = prep.solver.solve(params, taste_shocks(params, prep.z))
    df = prep.frame
    R = df[["R_h", "R_w"]].to_numpy(float)
    e_h = r_h - prep.fitted[:, :1]
    e_w = r_w - prep.fitted[:, 1:]
    diff = (df["cohort_h"].to_numpy()[:, None] + r_h) - (df["cohort_w"].to_numpy()[:, None] + r_w)
    sim = np.column_stack(
        [
            _group_dummies(r_h).mean(axis=1),
            _group_dummies(r_w).mean(axis=1),
            (e_h**2).mean(axis=1),
            (e_w**2).mean(axis=1),
            (e_h * e_w).mean(axis=1),
            _diff_dummies(diff).mean(axis=1),
        ]
    )
    reg_h = prep.X * (r_h.mean(axis=1) - R[:, 0])[:, None]
    reg_w = prep.X * (r_w.mean(axis=1) - R[:, 1])[:, None]
    return np.column_stack([reg_h, reg_w, prep.data_rows - sim])


class RetirementModel(MomentModel):
    """The 52 auxiliary moments as a :class:`MomentModel`.

    Parameters
    ----------
    s_sim : int
        Simulation draws per household.
    seed : int
        Key of the common random numbers.
    rho, t_max : float, int
        Discount factor and planning horizon.
    free : sequence of str, optional
        Names of the parameters to estimate; the others stay at ``fixed``.
        Defaults to all 34.
    fixed : RetirementParams, optional
        Values of the non-free parameters (default :data:`THETA_STAR`).
    """

    moment_names = MOMENT_NAMES
    jacobian_scheme = "simulated"

    def __init__(self, s_sim=200, seed=0, rho=0.96, t_max=80, free=None, fixed=None):
        self.s_sim = int(s_sim)
        self.seed = int(seed)
        self.rho = float(rho)
        self.t_max = int(t_max)
        self.fixed = fixed or THETA_STAR
        names = PARAM_NAMES if free is None else tuple(free)
        unknown = set(names) - set(PARAM_NAMES)
        if unknown:
            raise ValueError(f"unknown parameters: {sorted(unknown)}")
        self.free_index = np.array([PARAM_NAMES.index(n) for n in names], dtype=int)
        self.param_names = tuple(PARAM_NAMES[i] for i in self.free_index)
        self.theta0 = self.fixed.as_array()[self.free_index]

    def full_params(self, theta):
        full = self.fixed.as_array()
        full[self.free_index] = np.asarray(theta, dtype=float)
        return RetirementParams.from_array(full)

    def prepare(self, households):
        return prepare_data(households, self.s_sim, self.seed, self.rho, self.t_max)

    def moments(self, data, theta):
        if not isinstance(data, RetirementData):
            data = self.prepare(data)
        return moment_rows(data, self.full_params(theta))

    def simulate(self, n, seed, params=None):
        pop = synthetic_population(n, seed)
        return simulate_plans(pop, params or self.fixed, seed, self.rho, self.t_max)


def bootstrap_weight(model, data, theta, B=200, seed=0):
    """Diagonal weighting from bootstrapped moment variances."""
    return np.diag(1.0 / bootstrap_moment_variance(model, data, theta, B=B, seed=seed))


def estimate(model, data, theta_start=None, B=200, n_restarts=1, seed=0, final_s_sim=None):
    """Indirect-inference fit with bootstrap diagonal weighting.

    Returns a fitted :class:`GMMEstimator`. With ``final_s_sim`` set, the
    search is repeated from the optimum with that many simulation draws and
    the reported ingredients use them.
    """
    if not isinstance(data, RetirementData):
        data = model.prepare(data)
    start = model.theta0 if theta_start is None else np.asarray(theta_start, dtype=float)
    W = bootstrap_weight(model, data, start, B=B, seed=seed)
    est = GMMEstimator(model, weighting=W, theta_start=start, n_restarts=n_restarts, random_state=seed).fit(data)
    if final_s_sim and final_s_sim != model.s_sim:
        fine = RetirementModel(final_s_sim, model.seed, model.rho, model.t_max, model.param_names, model.fixed)
        fine_data = fine.prepare(data.frame)
        est = GMMEstimator(fine, weighting=W, theta_start=est.theta_, random_state=seed).fit(fine_data)
    return est


def gamma_sensitivity(ingredients_or_estimator, param_names=PARAM_NAMES):
    """The ``gamma`` row of the sensitivity report, one line per moment (1-52)."""
    ing = getattr(ingredients_or_estimator, "ingredients_", ingredients_or_estimator)
    names = getattr(getattr(ingredients_or_estimator, "model", None), "param_names", param_names)
    report = full_report(ing, names, MOMENT_NAMES)
    table = report.row("gamma")
    flags = pd.DataFrame({m: report.flags(m)[report.param_names.index("gamma")] for m in ("E4", "E5")})
    table.insert(0, "number", np.arange(1, N_MOMENTS + 1))
    table["not_identified_E4"] = flags["E4"].to_numpy()
    table["not_identified_E5"] = flags["E5"].to_numpy()
    return table


# ---------------------------------------------------------------- configuration


class ConfigError(MomentSensError):
    """Malformed experiment configuration; the message names the field."""


@dataclass(frozen=True)
class RetirementConfig:
    n: int
    seed: int = 0
    rho: float = 0.96
    t_max: int = 80
    s_sim: int = 200
    bootstrap_b: int = 200
    interview_year: int = INTERVIEW_YEAR
    theta_star: RetirementParams = THETA_STAR

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("retire.n: must be at least 1")
        if self.s_sim < 1:
            raise ConfigError("retire.s_sim: must be at least 1")
        if self.bootstrap_b < 2:
            raise ConfigError("retire.bootstrap_b: must be at least 2")
        if not self.rho > 0:
            raise ConfigError("retire.rho: must be positive")
        if self.t_max < GRID[-1]:
            raise ConfigError(f"retire.t_max: must be at least {GRID[-1]}")

    def to_dict(self):
        d = asdict(self)
        d["theta_star"] = dict(zip(PARAM_NAMES, self.theta_star.as_array().tolist()))
        return d

    @classmethod
    def from_ini(cls, path):
        """Read ``[retire]`` scalars and an optional ``[theta_star]`` table.

        Vector entries in ``[theta_star]`` are comma separated.
        """
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        if not cp.read(path):
            raise ConfigError(f"config: cannot read {path}")
        if "retire" not in cp:
            raise ConfigError("retire: missing section")
        sec = cp["retire"]
        kinds = {"n": int, "seed": int, "rho": float, "t_max": int, "s_sim": int, "bootstrap_b": int, "interview_year": int}
        if "n" not in sec:
            raise ConfigError("retire.n: missing required field")
        kwargs = {}
        for key, kind in kinds.items():
            if key in sec:
                try:
                    kwargs[key] = kind(sec[key])
                except ValueError:
                    raise ConfigError(f"retire.{key}: cannot parse {sec[key]!r} as {kind.__name__}") from None
        if "theta_star" in cp:
            base = asdict(THETA_STAR)
            for key, raw in cp["theta_star"].items():
                if key not in base:
                    raise ConfigError(f"theta_star.{key}: unknown parameter")
                try:
                    vals = [float(v) for v in raw.split(",")]
                except ValueError:
                    raise ConfigError(f"theta_star.{key}: cannot parse {raw!r}") from None
                base[key] = vals[0] if np.ndim(base[key]) == 0 else tuple(vals)
            try:
                kwargs["theta_star"] = RetirementParams(**base)
            except ValueError as exc:
                raise ConfigError(f"theta_star: {exc}") from None
        return cls(**kwargs)
