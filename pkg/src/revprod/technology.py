"""Parametric production technologies and their revenue-side counterparts.

Both supported technologies (Cobb-Douglas and CES) share the weakly separable
composite form

    Q = F(K, h(L, M)) * exp(omega) * exp(eps),

where K is the dynamic input, (L, M) are the flexible inputs, omega is
log Hicks-neutral productivity and eps is an ex-post log output shock.  The
flexible-input aggregate h is stored homogeneous of degree one; the degree of
returns is absorbed into the outer function F.  That normalization makes the
unit aggregate cost (the minimum flexible-input expenditure needed to reach
h = 1) a well-defined object, which in turn makes the revenue-side formulas
below purely a composition of h and that unit cost.

The revenue predictors in this module deliberately never read the capital
exponent (Cobb-Douglas), the returns-to-scale parameter (CES), or omega:
they are built only from h and the unit aggregate cost, so equality of
predictions across those parameters is structural, not numerical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

__all__ = [
    "ParameterError",
    "DomainError",
    "CobbDouglas",
    "CES",
    "Technology",
    "ShockConfig",
    "DemandConfig",
    "ValidityReport",
    "evaluate_quantity",
    "h_separable",
    "output_elasticity",
    "markup_production_approach",
    "price_from_markup",
    "revenue_pf_reduced_form",
    "log_revenue_cd",
    "log_revenue_ces",
    "validate_technology",
]


class ParameterError(ValueError):
    """Raised when technology or configuration parameters violate an invariant."""


class DomainError(ValueError):
    """Raised when an operation is evaluated outside its economic domain."""


def _check_positive(**named) -> None:
    for name, value in named.items():
        arr = np.asarray(value, dtype=float)
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
            raise DomainError(f"{name} must be finite and strictly positive")


def _const_like(value: float, *refs):
    """Broadcast a constant to the common shape of the reference arrays."""
    shape = np.broadcast(*[np.asarray(r) for r in refs]).shape
    if shape == ():
        return float(value)
    return np.full(shape, float(value))


@dataclass(frozen=True)
class CobbDouglas:
    """Cobb-Douglas technology Q = K^beta_K * L^beta_L * M^beta_M * e^omega * e^eps.

    Stored in separable form with h(L, M) = L^a * M^(1-a), a = beta_L/(beta_L+beta_M)
    (degree one) and F(K, y) = K^beta_K * y^(beta_L+beta_M).
    """

    beta_K: float
    beta_L: float
    beta_M: float

    kind = "CD"

    def __post_init__(self):
        if not (self.beta_L > 0.0 and self.beta_M > 0.0):
            raise ParameterError("beta_L and beta_M must be strictly positive")
        if self.beta_K < 0.0:
            raise ParameterError("beta_K must be nonnegative")

    @property
    def variable_scale(self) -> float:
        """Short-run returns in the flexible inputs, beta_L + beta_M."""
        return self.beta_L + self.beta_M

    @property
    def labor_weight(self) -> float:
        """Weight of labor inside the degree-one aggregate, beta_L/(beta_L+beta_M)."""
        return self.beta_L / self.variable_scale

    # -- primal objects -------------------------------------------------

    def h(self, L, M):
        a = self.labor_weight
        return np.asarray(L, float) ** a * np.asarray(M, float) ** (1.0 - a)

    def h_dlog(self, L, M, which: str):
        """Derivative of h with respect to the log of one flexible input."""
        a = self.labor_weight
        w = {"L": a, "M": 1.0 - a}[which]
        return w * self.h(L, M)

    def h_dlevel(self, L, M, which: str):
        V = {"L": L, "M": M}[which]
        return self.h_dlog(L, M, which) / np.asarray(V, float)

    def F(self, K, y):
        return np.asarray(K, float) ** self.beta_K * np.asarray(y, float) ** self.variable_scale

    def F_dy(self, K, y):
        s = self.variable_scale
        return s * np.asarray(K, float) ** self.beta_K * np.asarray(y, float) ** (s - 1.0)

    def F_inverse(self, K, z):
        """Aggregate level y with F(K, y) = z."""
        return (np.asarray(z, float) * np.asarray(K, float) ** (-self.beta_K)) ** (1.0 / self.variable_scale)

    def output(self, K, L, M):
        return self.F(K, self.h(L, M))

    def elasticity(self, K, L, M, which: str):
        beta = {"K": self.beta_K, "L": self.beta_L, "M": self.beta_M}[which]
        return _const_like(beta, K, L, M)

    # -- dual objects (self-dual family, closed forms) -------------------

    def unit_cost(self, pL, pM):
        """Minimum flexible-input expenditure subject to h >= 1."""
        a = self.labor_weight
        return (np.asarray(pL, float) / a) ** a * (np.asarray(pM, float) / (1.0 - a)) ** (1.0 - a)

    def unit_demand(self, pL, pM):
        """Cost-minimizing (L, M) at h = 1, by differentiating the unit cost."""
        a = self.labor_weight
        c2 = self.unit_cost(pL, pM)
        return a * c2 / np.asarray(pL, float), (1.0 - a) * c2 / np.asarray(pM, float)


@dataclass(frozen=True)
class CES:
    """CES technology Q = ((1-bL-bM) K^sigma + bL L^sigma + bM M^sigma)^(v/sigma) * e^omega * e^eps.

    Separable form: h(L, M) = (bL L^sigma + bM M^sigma)^(1/sigma) (degree one) and
    F(K, y) = ((1-bL-bM) K^sigma + y^sigma)^(v/sigma).  Requires sigma < 1 and
    sigma != 0; the Cobb-Douglas limit is a separate class, not sigma -> 0.
    """

    beta_L: float
    beta_M: float
    sigma: float
    v: float

    kind = "CES"

    def __post_init__(self):
        if not (self.beta_L > 0.0 and self.beta_M > 0.0):
            raise ParameterError("beta_L and beta_M must be strictly positive")
        if not self.beta_L + self.beta_M < 1.0:
            raise ParameterError("beta_L + beta_M must be < 1 (positive capital share)")
        if self.sigma == 0.0 or self.sigma >= 1.0:
            raise ParameterError("sigma must satisfy sigma < 1, sigma != 0")
        if not self.v > 0.0:
            raise ParameterError("returns-to-scale v must be strictly positive")

    @property
    def beta_K(self) -> float:
        return 1.0 - self.beta_L - self.beta_M

    # -- primal objects -------------------------------------------------

    def h(self, L, M):
        s = self.sigma
        base = self.beta_L * np.asarray(L, float) ** s + self.beta_M * np.asarray(M, float) ** s
        return base ** (1.0 / s)

    def h_dlog(self, L, M, which: str):
        s = self.sigma
        bV = {"L": self.beta_L, "M": self.beta_M}[which]
        V = np.asarray({"L": L, "M": M}[which], float)
        return bV * V ** s * self.h(L, M) ** (1.0 - s)

    def h_dlevel(self, L, M, which: str):
        V = np.asarray({"L": L, "M": M}[which], float)
        return self.h_dlog(L, M, which) / V

    def F(self, K, y):
        s = self.sigma
        base = self.beta_K * np.asarray(K, float) ** s + np.asarray(y, float) ** s
        return base ** (self.v / s)

    def F_dy(self, K, y):
        s = self.sigma
        base = self.beta_K * np.asarray(K, float) ** s + np.asarray(y, float) ** s
        return self.v * base ** (self.v / s - 1.0) * np.asarray(y, float) ** (s - 1.0)

    def F_inverse(self, K, z):
        s = self.sigma
        base = np.asarray(z, float) ** (s / self.v) - self.beta_K * np.asarray(K, float) ** s
        if np.any(base <= 0.0):
            raise DomainError("output level not attainable with the given capital stock")
        return base ** (1.0 / s)

    def output(self, K, L, M):
        s = self.sigma
        den = (
            self.beta_K * np.asarray(K, float) ** s
            + self.beta_L * np.asarray(L, float) ** s
            + self.beta_M * np.asarray(M, float) ** s
        )
        return den ** (self.v / s)

    def elasticity(self, K, L, M, which: str):
        s = self.sigma
        bV = {"K": self.beta_K, "L": self.beta_L, "M": self.beta_M}[which]
        V = np.asarray({"K": K, "L": L, "M": M}[which], float)
        den = (
            self.beta_K * np.asarray(K, float) ** s
            + self.beta_L * np.asarray(L, float) ** s
            + self.beta_M * np.asarray(M, float) ** s
        )
        return self.v * bV * V ** s / den

    # -- dual objects -----------------------------------------------------

    def price_index(self, pL, pM):
        """Dual price aggregate for the flexible-input bundle."""
        s = self.sigma
        e = s / (s - 1.0)
        return (
            np.asarray(pL, float) ** e * self.beta_L ** (-1.0 / (s - 1.0))
            + np.asarray(pM, float) ** e * self.beta_M ** (-1.0 / (s - 1.0))
        )

    def unit_cost(self, pL, pM):
        s = self.sigma
        return self.price_index(pL, pM) ** ((s - 1.0) / s)

    def unit_demand(self, pL, pM):
        s = self.sigma
        B = self.price_index(pL, pM)
        L1 = B ** (-1.0 / s) * (np.asarray(pL, float) / self.beta_L) ** (1.0 / (s - 1.0))
        M1 = B ** (-1.0 / s) * (np.asarray(pM, float) / self.beta_M) ** (1.0 / (s - 1.0))
        return L1, M1


Technology = Union[CobbDouglas, CES]


@dataclass(frozen=True)
class ShockConfig:
    """Ex-post output shock: eps ~ N(0, sigma_eps^2), independent of everything.

    cal_e is the ex-ante expectation of exp(eps) given the firm's information
    set, a known constant under the Gaussian design.
    """

    sigma_eps: float = 0.1
    cal_e: float = field(init=False)

    def __post_init__(self):
        if self.sigma_eps < 0.0:
            raise ParameterError("sigma_eps must be nonnegative")
        object.__setattr__(self, "cal_e", math.exp(0.5 * self.sigma_eps**2))


@dataclass(frozen=True)
class DemandConfig:
    """Constant-elasticity demand Q = scale * P^(-eta), implying markup eta/(eta-1).

    eta_dispersion > 0 draws a firm-specific elasticity around eta (log-spread),
    giving heterogeneous but still time-constant markups.  Disabled by default.
    """

    eta: float = 4.0
    scale: float = 2.0
    eta_dispersion: float = 0.0

    def __post_init__(self):
        if not self.eta > 1.0:
            raise ParameterError("demand elasticity eta must exceed 1")
        if self.eta_dispersion < 0.0:
            raise ParameterError("eta_dispersion must be nonnegative")

    @property
    def mu(self) -> float:
        return self.eta / (self.eta - 1.0)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def evaluate_quantity(tech: Technology, K, L, M, omega, eps):
    """Realized output F(K, h(L, M)) * exp(omega) * exp(eps)."""
    _check_positive(K=K, L=L, M=M)
    return tech.output(K, L, M) * np.exp(np.asarray(omega, float)) * np.exp(np.asarray(eps, float))


def h_separable(tech: Technology, K, L, M):
    """Degree-one flexible-input aggregate.

    K is accepted for signature uniformity with the composite form; neither
    parametric family uses it inside h.
    """
    _check_positive(L=L, M=M)
    return tech.h(L, M)


def output_elasticity(tech: Technology, K, L, M, which: str):
    """Elasticity of output with respect to one input (log-derivative of output)."""
    if which not in ("K", "L", "M"):
        raise ValueError(f"unknown input name {which!r}; expected 'K', 'L' or 'M'")
    _check_positive(K=K, L=L, M=M)
    return tech.elasticity(K, L, M, which)


def markup_production_approach(elasticity, revenue_share):
    """Markup as the ratio of a flexible input's output elasticity to its revenue share."""
    _check_positive(elasticity=elasticity, revenue_share=revenue_share)
    return np.asarray(elasticity, float) / np.asarray(revenue_share, float)


def price_from_markup(mu, marginal_cost):
    """Output price as markup times marginal cost."""
    _check_positive(mu=mu, marginal_cost=marginal_cost)
    return np.asarray(mu, float) * np.asarray(marginal_cost, float)


def revenue_pf_reduced_form(tech: Technology, K, L, M, pL, pM, s_star, cal_e, which_v: str):
    """Predicted target revenue P * Q~ built only from h and the unit aggregate cost.

    s_star is the level target revenue share of the chosen flexible input and
    cal_e the ex-ante expectation of exp(eps).  The computation touches only
    the flexible-input block (unit cost and h), so it cannot depend on the
    capital exponent, returns to scale, or productivity.
    """
    if which_v not in ("L", "M"):
        raise ValueError(f"which_v must be 'L' or 'M', got {which_v!r}")
    _check_positive(K=K, L=L, M=M, pL=pL, pM=pM, s_star=s_star, cal_e=cal_e)
    c2 = tech.unit_cost(pL, pM)
    return c2 * tech.h_dlog(L, M, which_v) / (np.asarray(s_star, float) * np.asarray(cal_e, float))


def log_revenue_cd(params: CobbDouglas, l, m, pl, pm, s_star_log, cal_e, which_v: str):
    """Log target revenue for the Cobb-Douglas case.

    Arguments are logs (inputs, input prices, and the log target revenue
    share); the realized shock is excluded and added by the caller.  The
    intercept is written in terms of the aggregate weight a = beta_L/(beta_L+beta_M)
    only, which is the entire content of the flexible block:

        theta0 = log(weight of V) - a*log(a) - (1-a)*log(1-a)

    so the prediction is invariant to beta_K and to common rescaling of
    (beta_L, beta_M).
    """
    if which_v not in ("L", "M"):
        raise ValueError(f"which_v must be 'L' or 'M', got {which_v!r}")
    if params.beta_L + params.beta_M <= 0.0:
        raise DomainError("beta_L + beta_M must be positive")
    a = params.labor_weight
    w_v = a if which_v == "L" else 1.0 - a
    theta0 = math.log(w_v) - a * math.log(a) - (1.0 - a) * math.log(1.0 - a)
    return (
        theta0
        + a * (np.asarray(l, float) + np.asarray(pl, float))
        + (1.0 - a) * (np.asarray(m, float) + np.asarray(pm, float))
        - np.asarray(s_star_log, float)
        - np.log(np.asarray(cal_e, float))
    )


def log_revenue_ces(params: CES, l, m, pl, pm, s_star_log, cal_e, which_v: str):
    """Log target revenue for the CES case; invariant to v and omega by construction."""
    if which_v not in ("L", "M"):
        raise ValueError(f"which_v must be 'L' or 'M', got {which_v!r}")
    s = params.sigma
    if s == 0.0 or s == 1.0:
        raise ParameterError("sigma in {0, 1} is not supported")
    bV = params.beta_L if which_v == "L" else params.beta_M
    v_log = np.asarray(l if which_v == "L" else m, float)
    l = np.asarray(l, float)
    m = np.asarray(m, float)
    agg = params.beta_L * np.exp(s * l) + params.beta_M * np.exp(s * m)
    B = params.price_index(np.exp(np.asarray(pl, float)), np.exp(np.asarray(pm, float)))
    return (
        math.log(bV)
        + s * v_log
        + (1.0 - s) / s * np.log(agg)
        + (s - 1.0) / s * np.log(B)
        - np.asarray(s_star_log, float)
        - np.log(np.asarray(cal_e, float))
    )


# ---------------------------------------------------------------------------
# Production-set validity checks
# ---------------------------------------------------------------------------


@dataclass
class ValidityReport:
    """Grid-based check of monotonicity, weak essentiality and quasi-concavity."""

    monotone: bool
    essential: bool
    quasiconcave: bool
    monotone_violations: list
    quasiconcave_violations: list
    n_points: int

    @property
    def passed(self) -> bool:
        return self.monotone and self.essential and self.quasiconcave


def validate_technology(tech: Technology, grid: np.ndarray, rel_tol: float = 1e-10) -> ValidityReport:
    """Check production-set properties on a sample of strictly positive input points.

    grid has shape (n, 3) with columns (K, L, M).  Monotonicity and
    quasi-concavity are tested pairwise on the grid; weak essentiality is
    tested by shrinking every point toward the origin and requiring output
    to decay toward zero.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 2 or grid.shape[1] != 3 or grid.shape[0] == 0:
        raise ValueError("grid must be a nonempty (n, 3) array of (K, L, M) points")
    _check_positive(grid=grid)

    n = grid.shape[0]
    f = tech.output(grid[:, 0], grid[:, 1], grid[:, 2])

    mono_viol = []
    qc_viol = []
    # Pairwise dominance test: x' >= x componentwise must not lower output.
    dominates = np.all(grid[:, None, :] >= grid[None, :, :], axis=2)
    for i in range(n):
        for j in range(n):
            if i != j and dominates[i, j] and f[i] < f[j] * (1.0 - rel_tol):
                mono_viol.append((tuple(grid[j]), tuple(grid[i]), float(f[j]), float(f[i])))

    # Quasi-concavity via midpoints: F(midpoint) >= min of the endpoints.
    for i in range(n):
        mid = 0.5 * (grid[i] + grid[i + 1 :])
        if mid.size == 0:
            continue
        fm = tech.output(mid[:, 0], mid[:, 1], mid[:, 2])
        floor = np.minimum(f[i], f[i + 1 :]) * (1.0 - rel_tol)
        bad = np.nonzero(fm < floor)[0]
        for b in bad:
            qc_viol.append((tuple(grid[i]), tuple(grid[i + 1 + b]), float(fm[b])))

    # Weak essentiality: output decays monotonically as all inputs shrink.
    essential = True
    scales = (1e-2, 1e-6, 1e-12, 1e-30)
    prev = f.copy()
    for t in scales:
        ft = tech.output(t * grid[:, 0], t * grid[:, 1], t * grid[:, 2])
        if np.any(ft > prev * (1.0 + rel_tol)):
            essential = False
            break
        prev = ft
    if essential and np.any(prev > 1e-2 * f):
        essential = False

    return ValidityReport(
        monotone=not mono_viol,
        essential=essential,
        quasiconcave=not qc_viol,
        monotone_violations=mono_viol,
        quasiconcave_violations=qc_viol,
        n_points=n,
    )
