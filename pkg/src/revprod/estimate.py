"""Proxy-variable GMM for quantity production functions and the revenue analogue.

The quantity route is the identified benchmark: project out the ex-post shock
with a flexible polynomial first stage, recover the productivity series
implied by a candidate parameter vector, and form moments on the innovation
of its first-order Markov process against predetermined instruments.

The revenue route runs the same machinery with log revenue in place of log
quantity and the parametric revenue predictor in place of the production
function.  Its parameter vector deliberately carries the coordinates that the
revenue predictor never reads (the capital exponent for Cobb-Douglas, returns
to scale for CES) so that downstream diagnostics can exhibit the resulting
flat directions; the residual provably never touches them, which makes the
flatness bit-exact rather than approximate.

The Markov conditional mean g(.) is a polynomial of configurable degree whose
coefficients are concentrated out by least squares inside every residual
evaluation, so the GMM search space contains only technology parameters.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .panel_io import Panel, PanelFormatError

__all__ = [
    "EstimationError",
    "FirstStage",
    "MomentSystem",
    "EstimateResult",
    "first_stage_project",
    "estimate_cal_e",
    "build_quantity_moments",
    "build_revenue_moments",
    "gmm_minimize",
    "DEFAULT_INSTRUMENTS",
    "DEFAULT_BOUNDS",
]

logger = logging.getLogger(__name__)

# The basic conditioning-set instruments alone leave the CES curvature
# directions too weak to recover at desk scale (asymptotic sd on sigma well
# above 1 at N=500, T=10); the default set therefore adds current input-price
# logs, which the generating processes make independent of the productivity
# innovation, plus squares that carry the substitution curvature.
BASIC_INSTRUMENTS = ("const", "k_t", "l_lag", "m_lag", "pl_lag", "pm_lag")
DEFAULT_INSTRUMENTS = BASIC_INSTRUMENTS + ("pl_t", "pm_t", "prel2_t", "k2_t", "pl2_t", "pm2_t")

DEFAULT_BOUNDS = {
    ("CD", "quantity"): {"beta_K": (0.01, 0.9), "beta_L": (0.02, 0.9), "beta_M": (0.02, 0.9)},
    ("CD", "revenue"): {"beta_K": (0.01, 0.9), "beta_L": (0.02, 0.9), "beta_M": (0.02, 0.9)},
    ("CES", "quantity"): {"sigma": (0.05, 0.9), "beta_L": (0.05, 0.6), "beta_M": (0.05, 0.6), "v": (0.5, 1.3)},
    ("CES", "revenue"): {"sigma": (0.05, 0.9), "beta_L": (0.05, 0.6), "beta_M": (0.05, 0.6), "v": (0.5, 1.3)},
}

_MIN_CAPITAL_SHARE = 5e-3


class EstimationError(RuntimeError):
    """Raised when every restart of the GMM search fails; carries the trace."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace or []


# ---------------------------------------------------------------------------
# First stage
# ---------------------------------------------------------------------------


def _poly_dim(k: int, degree: int) -> int:
    return sum(math.comb(k + d - 1, d) for d in range(degree + 1))


def _poly_design(X: np.ndarray, degree: int) -> np.ndarray:
    """Full polynomial basis (with interactions) in the columns of X."""
    n, k = X.shape
    cols = [np.ones(n)]
    for d in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(k), d):
            col = np.ones(n)
            for j in combo:
                col = col * X[:, j]
            cols.append(col)
    return np.column_stack(cols)


@dataclass
class FirstStage:
    """Polynomial projection of log output (or log revenue) on observables."""

    mode: str
    degree: int
    fitted: np.ndarray
    residuals: np.ndarray
    r_squared: float

    @property
    def cal_e_hat(self) -> float:
        """Ex-ante shock expectation implied by the projection residuals."""
        return math.exp(0.5 * float(np.var(self.residuals)))


def first_stage_project(panel: Panel, mode: str = "quantity", degree: int = 3) -> FirstStage:
    """Regress log Q (quantity mode) or log R (revenue mode) on a polynomial
    in log inputs and log input prices; returns fitted values and residuals.

    An underdetermined fit (fewer rows than polynomial columns) triggers
    degree reduction with a warning; the structural collinearity that cost
    minimization imposes on the observables is handled by the minimum-norm
    projection instead.
    """
    if mode not in ("quantity", "revenue"):
        raise ValueError(f"mode must be 'quantity' or 'revenue', got {mode!r}")
    if degree < 1:
        raise ValueError("polynomial degree must be >= 1")
    if mode == "quantity":
        if not panel.has("Q"):
            raise PanelFormatError("quantity mode requires the Q column (quantities unobserved)")
        y = np.log(panel.col("Q"))
    else:
        y = np.log(panel.col("R"))
    logs = np.column_stack(
        [np.log(panel.col(c)) for c in ("K", "L", "M", "pL", "pM")]
    )
    # Standardize regressors before expansion; the fitted span is unchanged.
    mu = logs.mean(axis=0)
    sd = logs.std(axis=0)
    sd[sd == 0.0] = 1.0
    Xs = (logs - mu) / sd

    # Cost minimization puts the observables on a lower-dimensional manifold
    # (input and price logs obey an exact linear relation), so the expanded
    # design is rank-deficient by construction; the minimum-norm projection
    # is still the right fitted value.  Only genuinely underdetermined fits
    # (more columns than rows) trigger degree reduction.
    used = degree
    while used > 1 and _poly_dim(Xs.shape[1], used) > Xs.shape[0]:
        logger.warning(
            "first stage degree %d needs %d columns but only %d rows; reducing degree",
            used,
            _poly_dim(Xs.shape[1], used),
            Xs.shape[0],
        )
        used -= 1
    design = _poly_design(Xs, used)
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < design.shape[1]:
        logger.debug(
            "first stage design spans %d of %d columns (collinear observables); using minimum-norm projection",
            rank,
            design.shape[1],
        )
    fitted = design @ coef
    resid = y - fitted
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / tss if tss > 0 else 1.0
    return FirstStage(mode=mode, degree=used, fitted=fitted, residuals=resid, r_squared=r2)


def estimate_cal_e(first_stage: FirstStage) -> float:
    return first_stage.cal_e_hat


# ---------------------------------------------------------------------------
# Moment systems
# ---------------------------------------------------------------------------


@dataclass
class MomentSystem:
    """Conditional-moment system on the Markov innovation of recovered productivity.

    residual(theta) returns the innovation series; moments(theta) its
    instrument cross-products.  The Markov polynomial is re-fit by least
    squares at every theta, so g's coefficients never enter theta.

    Revenue systems additionally carry level moments on the revenue-equation
    residual itself.  Productivity cancels out of the revenue equation, so
    (unlike the quantity case, where the recovered series has a free mean)
    its level is informative: without these moments the Cobb-Douglas revenue
    equation, whose entire parameter content on cost-minimizing data is an
    intercept, would be invisible to the Markov block.
    """

    mode: str
    tech_kind: str
    param_names: tuple
    bounds: tuple
    g_degree: int
    Z: np.ndarray
    instrument_names: tuple
    n_obs: int
    _predict: callable = field(repr=False)
    _y_t: np.ndarray = field(repr=False)
    _y_lag: np.ndarray = field(repr=False)
    level_Z: Optional[np.ndarray] = field(default=None, repr=False)
    level_instrument_names: tuple = ()

    def omega_series(self, theta: np.ndarray):
        pred_t, pred_lag, penalty = self._predict(np.asarray(theta, float))
        return self._y_t - pred_t, self._y_lag - pred_lag, penalty

    def g_coefficients(self, theta) -> np.ndarray:
        w_t, w_lag, _ = self.omega_series(theta)
        X = np.column_stack([w_lag**d for d in range(self.g_degree + 1)])
        coef, *_ = np.linalg.lstsq(X, w_t, rcond=None)
        return coef

    def residual(self, theta) -> np.ndarray:
        w_t, w_lag, _ = self.omega_series(theta)
        X = np.column_stack([w_lag**d for d in range(self.g_degree + 1)])
        coef, *_ = np.linalg.lstsq(X, w_t, rcond=None)
        return w_t - X @ coef

    @property
    def n_moments(self) -> int:
        extra = 0 if self.level_Z is None else self.level_Z.shape[1]
        return self.Z.shape[1] + extra

    def moments(self, theta) -> np.ndarray:
        m = self.Z.T @ self.residual(theta) / self.n_obs
        if self.level_Z is None:
            return m
        w_t, _, _ = self.omega_series(theta)
        return np.concatenate([m, self.level_Z.T @ w_t / self.n_obs])

    def _per_obs_moments(self, theta) -> np.ndarray:
        xi = self.residual(theta)
        G = self.Z * xi[:, None]
        if self.level_Z is not None:
            w_t, _, _ = self.omega_series(theta)
            G = np.column_stack([G, self.level_Z * w_t[:, None]])
        return G

    def moment_covariance(self, theta) -> np.ndarray:
        G = self._per_obs_moments(theta)
        return G.T @ G / self.n_obs

    def objective(self, theta, weight: Optional[np.ndarray] = None) -> float:
        """GMM quadratic form in the conventional n-scaled (J-statistic) units."""
        _, _, penalty = self.omega_series(theta)
        m = self.moments(theta)
        if weight is None:
            val = float(m @ m)
        else:
            val = float(m @ weight @ m)
        return self.n_obs * (val + penalty)


def _lag_bundle(panel: Panel):
    cur, lag = panel.lag_index()
    if cur.size == 0:
        raise PanelFormatError("panel has no consecutive firm-periods; lags unavailable")
    cols = {}
    for name in ("K", "L", "M", "pL", "pM", "sL_star", "sM_star"):
        v = np.log(panel.col(name))
        cols[name + "_t"] = v[cur]
        cols[name + "_lag"] = v[lag]
    return cur, lag, cols


def _instrument_matrix(panel: Panel, cur, lag, names: Sequence[str]) -> np.ndarray:
    logcol = lambda c: np.log(panel.col(c))
    tokens = {
        "const": lambda: np.ones(cur.size),
        "k_t": lambda: logcol("K")[cur],
        "k_lag": lambda: logcol("K")[lag],
        "l_t": lambda: logcol("L")[cur],
        "l_lag": lambda: logcol("L")[lag],
        "m_t": lambda: logcol("M")[cur],
        "m_lag": lambda: logcol("M")[lag],
        "pl_t": lambda: logcol("pL")[cur],
        "pl_lag": lambda: logcol("pL")[lag],
        "pm_t": lambda: logcol("pM")[cur],
        "pm_lag": lambda: logcol("pM")[lag],
        "k2_t": lambda: logcol("K")[cur] ** 2,
        "pl2_t": lambda: logcol("pL")[cur] ** 2,
        "pm2_t": lambda: logcol("pM")[cur] ** 2,
        "prel2_t": lambda: (logcol("pL")[cur] - logcol("pM")[cur]) ** 2,
        "prel2_lag": lambda: (logcol("pL")[lag] - logcol("pM")[lag]) ** 2,
    }
    bad = [n for n in names if n not in tokens]
    if bad:
        raise ValueError(f"unknown instrument tokens {bad}; known: {sorted(tokens)}")
    return np.column_stack([tokens[n]() for n in names])


def _quantity_predictor(tech_kind: str, cols):
    k_t, l_t, m_t = cols["K_t"], cols["L_t"], cols["M_t"]
    k_g, l_g, m_g = cols["K_lag"], cols["L_lag"], cols["M_lag"]

    if tech_kind == "CD":

        def predict(theta):
            bK, bL, bM = theta
            return (
                bK * k_t + bL * l_t + bM * m_t,
                bK * k_g + bL * l_g + bM * m_g,
                0.0,
            )

        return predict, ("beta_K", "beta_L", "beta_M")

    def predict(theta):
        sg, bL, bM, v = theta
        bK = 1.0 - bL - bM
        penalty = 0.0
        if bK < _MIN_CAPITAL_SHARE:
            penalty = 1e4 * (_MIN_CAPITAL_SHARE - bK) ** 2
            bK = _MIN_CAPITAL_SHARE
        q_t = (v / sg) * np.log(bK * np.exp(sg * k_t) + bL * np.exp(sg * l_t) + bM * np.exp(sg * m_t))
        q_g = (v / sg) * np.log(bK * np.exp(sg * k_g) + bL * np.exp(sg * l_g) + bM * np.exp(sg * m_g))
        return q_t, q_g, penalty

    return predict, ("sigma", "beta_L", "beta_M", "v")


def _revenue_predictor(tech_kind: str, cols, which_v: str, log_cal_e: float):
    l_t, m_t = cols["L_t"], cols["M_t"]
    l_g, m_g = cols["L_lag"], cols["M_lag"]
    pl_t, pm_t = cols["pL_t"], cols["pM_t"]
    pl_g, pm_g = cols["pL_lag"], cols["pM_lag"]
    share = "sL_star" if which_v == "L" else "sM_star"
    s_t, s_g = cols[share + "_t"], cols[share + "_lag"]

    if tech_kind == "CD":
        # beta_K occupies a slot in theta but is never read below; the ratio
        # a = beta_L/(beta_L+beta_M) is the only flexible-block content.
        def predict(theta):
            _, bL, bM = theta
            a = bL / (bL + bM)
            w_v = a if which_v == "L" else 1.0 - a
            theta0 = np.log(w_v) - a * np.log(a) - (1.0 - a) * np.log(1.0 - a)
            lin_t = a * (l_t + pl_t) + (1.0 - a) * (m_t + pm_t)
            lin_g = a * (l_g + pl_g) + (1.0 - a) * (m_g + pm_g)
            return (
                theta0 + lin_t - s_t - log_cal_e,
                theta0 + lin_g - s_g - log_cal_e,
                0.0,
            )

        return predict, ("beta_K", "beta_L", "beta_M")

    v_t = l_t if which_v == "L" else m_t
    v_g = l_g if which_v == "L" else m_g

    def predict(theta):
        sg, bL, bM, _ = theta  # v never read
        bV = bL if which_v == "L" else bM
        e = sg / (sg - 1.0)
        agg_t = np.log(bL * np.exp(sg * l_t) + bM * np.exp(sg * m_t))
        agg_g = np.log(bL * np.exp(sg * l_g) + bM * np.exp(sg * m_g))
        B_t = np.log(np.exp(e * pl_t) * bL ** (-1.0 / (sg - 1.0)) + np.exp(e * pm_t) * bM ** (-1.0 / (sg - 1.0)))
        B_g = np.log(np.exp(e * pl_g) * bL ** (-1.0 / (sg - 1.0)) + np.exp(e * pm_g) * bM ** (-1.0 / (sg - 1.0)))
        r_t = np.log(bV) + sg * v_t + (1.0 - sg) / sg * agg_t + (sg - 1.0) / sg * B_t - s_t - log_cal_e
        r_g = np.log(bV) + sg * v_g + (1.0 - sg) / sg * agg_g + (sg - 1.0) / sg * B_g - s_g - log_cal_e
        return r_t, r_g, 0.0

    return predict, ("sigma", "beta_L", "beta_M", "v")


def _bounds_tuple(tech_kind: str, mode: str, names, overrides=None):
    table = dict(DEFAULT_BOUNDS[(tech_kind, mode)])
    if overrides:
        table.update(overrides)
    return tuple(table[n] for n in names)


def build_quantity_moments(
    tech_kind: str,
    fitted_qstar,
    panel: Panel,
    g_degree: int = 1,
    instruments: Sequence[str] = DEFAULT_INSTRUMENTS,
    bounds=None,
) -> MomentSystem:
    """Moment system on the quantity production function (identified benchmark)."""
    if g_degree < 1:
        raise ValueError("g_degree must be >= 1")
    fitted = fitted_qstar.fitted if isinstance(fitted_qstar, FirstStage) else np.asarray(fitted_qstar, float)
    cur, lag, cols = _lag_bundle(panel)
    predict, names = _quantity_predictor(tech_kind, cols)
    Z = _instrument_matrix(panel, cur, lag, instruments)
    return MomentSystem(
        mode="quantity",
        tech_kind=tech_kind,
        param_names=names,
        bounds=_bounds_tuple(tech_kind, "quantity", names, bounds),
        g_degree=g_degree,
        Z=Z,
        instrument_names=tuple(instruments),
        n_obs=cur.size,
        _predict=predict,
        _y_t=fitted[cur],
        _y_lag=fitted[lag],
    )


DEFAULT_LEVEL_INSTRUMENTS = ("const", "k_t", "pl_t", "pm_t", "prel2_t")


def build_revenue_moments(
    tech_kind: str,
    fitted_rstar,
    panel: Panel,
    g_degree: int = 1,
    cal_e: Optional[float] = None,
    which_v: str = "M",
    instruments: Sequence[str] = DEFAULT_INSTRUMENTS,
    level_instruments: Sequence[str] = DEFAULT_LEVEL_INSTRUMENTS,
    bounds=None,
) -> MomentSystem:
    """Revenue analogue of the quantity system.

    cal_e defaults to the value implied by the first-stage residuals when a
    FirstStage object is passed; which_v selects the flexible input whose
    revenue equation is used.  level_instruments multiply the revenue-equation
    residual itself (pass an empty sequence to drop the level block and run
    the bare Markov analogue).
    """
    if g_degree < 1:
        raise ValueError("g_degree must be >= 1")
    if which_v not in ("L", "M"):
        raise ValueError(f"which_v must be 'L' or 'M', got {which_v!r}")
    if isinstance(fitted_rstar, FirstStage):
        if cal_e is None:
            cal_e = fitted_rstar.cal_e_hat
        fitted = fitted_rstar.fitted
    else:
        fitted = np.asarray(fitted_rstar, float)
        if cal_e is None:
            raise ValueError("cal_e is required when fitted values are passed as a raw array")
    cur, lag, cols = _lag_bundle(panel)
    predict, names = _revenue_predictor(tech_kind, cols, which_v, math.log(cal_e))
    Z = _instrument_matrix(panel, cur, lag, instruments)
    level_Z = None
    if level_instruments:
        level_Z = _instrument_matrix(panel, cur, lag, level_instruments)
    return MomentSystem(
        mode="revenue",
        tech_kind=tech_kind,
        param_names=names,
        bounds=_bounds_tuple(tech_kind, "revenue", names, bounds),
        g_degree=g_degree,
        Z=Z,
        instrument_names=tuple(instruments),
        n_obs=cur.size,
        _predict=predict,
        _y_t=fitted[cur],
        _y_lag=fitted[lag],
        level_Z=level_Z,
        level_instrument_names=tuple(level_instruments),
    )


# ---------------------------------------------------------------------------
# GMM minimization
# ---------------------------------------------------------------------------


@dataclass
class EstimateResult:
    """Point estimates plus the full set of local minima found by multi-start."""

    mode: str
    tech_kind: str
    param_names: tuple
    estimates: dict
    objective: float
    weighting: str
    moment_cov: np.ndarray
    minima: list
    g_coefficients: list
    diagnostics: dict
    seed: int

    @property
    def theta(self) -> np.ndarray:
        return np.array([self.estimates[n] for n in self.param_names])

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "tech_kind": self.tech_kind,
            "param_names": list(self.param_names),
            "estimates": {k: float(v) for k, v in self.estimates.items()},
            "objective": float(self.objective),
            "weighting": self.weighting,
            "moment_cov": [[float(x) for x in row] for row in np.asarray(self.moment_cov)],
            "minima": self.minima,
            "g_coefficients": [float(c) for c in self.g_coefficients],
            "diagnostics": self.diagnostics,
            "seed": self.seed,
        }


def _draw_starts(ms: MomentSystem, start, restarts: int, seed: int, screen: int = 0) -> np.ndarray:
    """Starting points for the local searches.

    Draws a seeded uniform cloud in the bounds box; when screen > restarts,
    evaluates the identity-weight objective on the whole cloud and keeps the
    best points, one per cloud draw, so narrow basins are still found.  The
    kept points preserve the cloud's spread along flat directions (screening
    cannot rank what the objective cannot see).
    """
    lo = np.array([b[0] for b in ms.bounds])
    hi = np.array([b[1] for b in ms.bounds])
    rng = np.random.default_rng(seed)
    n_draw = max(screen, restarts, 1)
    u = rng.uniform(0.05, 0.95, size=(n_draw, lo.size))
    cloud = lo + u * (hi - lo)
    if ms.tech_kind == "CES":
        # keep CES starting shares jointly feasible for the quantity route
        j = [ms.param_names.index("beta_L"), ms.param_names.index("beta_M")]
        tot = cloud[:, j].sum(axis=1)
        for row in np.nonzero(tot > 0.85)[0]:
            cloud[row, j] *= 0.85 / tot[row]
    if n_draw > restarts:
        vals = np.array([ms.objective(x) for x in cloud])
        keep = np.argsort(vals, kind="stable")[:restarts]
        starts = cloud[np.sort(keep)]
    else:
        starts = cloud
    if start is not None:
        starts = np.vstack([np.asarray(start, float), starts[: max(restarts - 1, 0)]])
    return starts


def regularized_inverse(cov: np.ndarray, ridge: float = 1e-6) -> np.ndarray:
    """Symmetric positive-definite inverse of a possibly singular covariance.

    Cost minimization makes some instruments exactly collinear on generated
    panels, so the moment covariance is structurally rank-deficient; a ridge
    proportional to the largest eigenvalue keeps the implied weights bounded.
    """
    cov = 0.5 * (cov + cov.T)
    scale = float(np.max(np.linalg.eigvalsh(cov)))
    if scale <= 0.0:
        return np.eye(cov.shape[0])
    return np.linalg.inv(cov + ridge * scale * np.eye(cov.shape[0]))


def gmm_minimize(
    ms: MomentSystem,
    weighting: str = "two-step",
    start=None,
    restarts: int = 20,
    seed: int = 7,
    screen: int = 256,
    threads: int = 1,
) -> EstimateResult:
    """Multi-start minimization of the GMM quadratic form.

    weighting 'identity' runs a single stage; 'two-step' reweights every
    stage-one minimum by the (regularized) inverse moment covariance at the
    stage-one argmin and re-minimizes.  All local minima are reported, not
    just the best: with flat directions the set is the diagnostic object.
    Restarts can run on a thread pool; results are merged by restart index,
    so the outcome does not depend on the worker count.
    """
    if weighting not in ("identity", "two-step"):
        raise ValueError("weighting must be 'identity' or 'two-step'")
    starts = _draw_starts(ms, start, restarts, seed, screen=screen)

    def solve_one(idx_x0):
        idx, x0 = idx_x0
        fun = lambda th: ms.objective(th, solve_one.W)
        res = minimize(
            fun,
            x0,
            method="L-BFGS-B",
            bounds=ms.bounds,
            options={"maxiter": 300, "ftol": 1e-14, "gtol": 1e-10},
        )
        converged = bool(res.success)
        x, f, nit = res.x, res.fun, int(res.nit)
        if not converged and np.all(np.isfinite(x)):
            # the line search can abort on bit-flat directions even at the
            # minimum; a derivative-free polish certifies (or improves) it
            lo = np.array([b[0] for b in ms.bounds])
            hi = np.array([b[1] for b in ms.bounds])
            nm = minimize(
                lambda th: fun(np.clip(th, lo, hi)),
                x,
                method="Nelder-Mead",
                options={"maxiter": 400, "xatol": 1e-10, "fatol": 1e-12},
            )
            if np.all(np.isfinite(nm.x)) and nm.fun <= f + 1e-12 * max(1.0, abs(f)):
                x, f = np.clip(nm.x, lo, hi), min(f, nm.fun)
                nit += int(nm.nit)
                converged = bool(nm.success)
        if not np.all(np.isfinite(x)):
            return {"start_index": int(idx), "failed": True, "message": str(res.message)}
        return {
            "start_index": int(idx),
            "theta": [float(v) for v in x],
            "objective": float(f),
            "converged": converged,
            "n_iter": nit,
        }

    def run_stage(W, theta_starts):
        solve_one.W = W
        tasks = list(enumerate(theta_starts))
        if threads > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=threads) as pool:
                outcomes = list(pool.map(solve_one, tasks))
        else:
            outcomes = [solve_one(t) for t in tasks]
        found = [o for o in outcomes if not o.get("failed")]
        failures = [o for o in outcomes if o.get("failed")]
        if not found:
            raise EstimationError("all GMM restarts failed to converge", trace=failures)
        return found

    minima = run_stage(None, starts)
    best = min(minima, key=lambda m: m["objective"])
    theta1 = np.array(best["theta"])

    if weighting == "two-step":
        cov = ms.moment_covariance(theta1)
        W = regularized_inverse(cov)
        stage2_starts = np.array([m["theta"] for m in minima])
        minima = run_stage(W, stage2_starts)
        best = min(minima, key=lambda m: m["objective"])

    theta_hat = np.array(best["theta"])
    cov_final = ms.moment_covariance(theta_hat)
    n_converged = sum(1 for m in minima if m["converged"])
    if n_converged == 0:
        logger.warning("no restart reported clean convergence; returning best iterate")
    result = EstimateResult(
        mode=ms.mode,
        tech_kind=ms.tech_kind,
        param_names=ms.param_names,
        estimates={n: float(v) for n, v in zip(ms.param_names, theta_hat)},
        objective=float(best["objective"]),
        weighting=weighting,
        moment_cov=cov_final,
        minima=minima,
        g_coefficients=list(ms.g_coefficients(theta_hat)),
        diagnostics={
            "n_obs": int(ms.n_obs),
            "n_moments": int(ms.n_moments),
            "n_restarts": int(len(starts)),
            "n_converged": int(n_converged),
            "instruments": list(ms.instrument_names),
            "level_instruments": list(ms.level_instrument_names),
            "g_degree": int(ms.g_degree),
        },
        seed=seed,
    )
    return result
