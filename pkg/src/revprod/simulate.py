"""Seeded firm-panel generator satisfying every maintained model assumption.

Per firm-period, in order: productivity follows a stationary AR(1); capital
is set with period t-1 information through a log-linear policy; input prices
follow firm-specific log-AR(1) processes known before input choices; the firm
picks planned output where price (a constant markup over marginal cost)
clears a constant-elasticity demand curve; flexible inputs minimize cost for
that plan; an independent ex-post shock then scales realized output.

The resulting panel satisfies, observation by observation and up to float
roundoff: revenue share times markup equals the output elasticity, price
equals markup times marginal cost, the input-price first-order conditions,
and the reduced-form revenue identity.  verify_panel re-derives those
identities from the recorded columns.

Target revenue is ex-ante expected revenue P * Qstar * cal_e (the mean of
realized revenue given the information set), so target shares are
pV * V / (P * Qstar * cal_e).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import costmin
from .panel_io import COLUMNS, Panel
from .technology import CobbDouglas, DemandConfig, ParameterError, ShockConfig, Technology

__all__ = [
    "SimulationError",
    "ProductivityProcess",
    "CapitalPolicy",
    "PriceProcess",
    "SimConfig",
    "simulate_panel",
    "verify_panel",
    "PanelCheckReport",
]

BURN_IN_DEFAULT = 50


class SimulationError(RuntimeError):
    """Raised when panel generation fails; identifies the offending firm-periods."""


@dataclass(frozen=True)
class ProductivityProcess:
    """Stationary AR(1) for log Hicks-neutral productivity: w' = c0 + rho*w + xi."""

    rho: float = 0.7
    c0: float = 0.0
    sigma_xi: float = 0.3

    def __post_init__(self):
        if not abs(self.rho) < 1.0:
            raise ParameterError("productivity process must be stationary (|rho| < 1)")
        if self.sigma_xi < 0.0:
            raise ParameterError("sigma_xi must be nonnegative")

    @property
    def mean(self) -> float:
        return self.c0 / (1.0 - self.rho)


@dataclass(frozen=True)
class CapitalPolicy:
    """Log-linear capital rule using period t-1 information.

    log K_t = kappa0 + kappa_k * log K_{t-1} + kappa_w * omega_{t-1} + noise.
    """

    kappa0: float = 0.0
    kappa_k: float = 0.75
    kappa_w: float = 0.4
    sigma_k: float = 0.25

    def __post_init__(self):
        if not abs(self.kappa_k) < 1.0:
            raise ParameterError("capital policy must be stable (|kappa_k| < 1)")
        if self.sigma_k < 0.0:
            raise ParameterError("sigma_k must be nonnegative")


@dataclass(frozen=True)
class PriceProcess:
    """Firm-specific log-AR(1) input prices, in the information set at choice time.

    Each price follows its own AR(1) around a firm-specific long-run mean
    drawn once per firm (dispersion 0 disables the cross-sectional spread).
    The two flexible-input prices deliberately carry different persistence
    and dispersion: with identical temporal signatures, any linear mix of
    the two prices is indistinguishable from a single first-order process,
    which opens a spurious zero of the proxy-GMM moment conditions.  The
    capital rental price is generated the same way but enters no equation.
    """

    mean_log_pL: float = 0.0
    mean_log_pM: float = 0.0
    mean_log_pK: float = 0.0
    rho_pL: float = 0.85
    rho_pM: float = 0.20
    rho_pK: float = 0.50
    sigma_pL: float = 0.15
    sigma_pM: float = 0.35
    sigma_pK: float = 0.15
    dispersion_pL: float = 0.25
    dispersion_pM: float = 0.60
    dispersion_pK: float = 0.10

    def __post_init__(self):
        for r in (self.rho_pL, self.rho_pM, self.rho_pK):
            if not abs(r) < 1.0:
                raise ParameterError("price processes must be stationary (|rho| < 1)")
        for s in (
            self.sigma_pL,
            self.sigma_pM,
            self.sigma_pK,
            self.dispersion_pL,
            self.dispersion_pM,
            self.dispersion_pK,
        ):
            if s < 0.0:
                raise ParameterError("price volatilities must be nonnegative")


@dataclass(frozen=True)
class SimConfig:
    tech: Technology
    demand: DemandConfig = field(default_factory=DemandConfig)
    prod: ProductivityProcess = field(default_factory=ProductivityProcess)
    capital: CapitalPolicy = field(default_factory=CapitalPolicy)
    prices: PriceProcess = field(default_factory=PriceProcess)
    shocks: ShockConfig = field(default_factory=ShockConfig)
    n_firms: int = 500
    n_periods: int = 10
    burn_in: int = BURN_IN_DEFAULT
    seed: int = 0
    input_solver: str = "closed_form"  # or "numeric": route every observation
    # through the scalar KKT solver instead of the closed-form demands

    def __post_init__(self):
        if self.n_firms < 0 or self.n_periods < 1 or self.burn_in < 0:
            raise ParameterError("need n_firms >= 0, n_periods >= 1, burn_in >= 0")
        if self.input_solver not in ("closed_form", "numeric"):
            raise ParameterError("input_solver must be 'closed_form' or 'numeric'")
        scale = (
            self.tech.variable_scale if isinstance(self.tech, CobbDouglas) else self.tech.v
        )
        if scale >= self.demand.mu and self.demand.eta_dispersion == 0.0:
            raise ParameterError(
                "pricing fixed point needs short-run scale below the markup "
                f"(scale {scale:g} >= mu {self.demand.mu:g})"
            )


def _draw_firm_shocks(cfg: SimConfig):
    """Independent per-firm substreams; each firm draws a fixed-length plan."""
    n, horizon = cfg.n_firms, cfg.burn_in + cfg.n_periods
    streams = np.random.SeedSequence(cfg.seed).spawn(n)
    xi = np.empty((n, horizon))
    u_k = np.empty((n, horizon))
    e_pl = np.empty((n, horizon))
    e_pm = np.empty((n, horizon))
    e_pk = np.empty((n, horizon))
    eps = np.empty((n, cfg.n_periods))
    shifts = np.empty((n, 3))
    eta_shift = np.empty(n)
    for i, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        shifts[i] = rng.normal(0.0, 1.0, 3)
        xi[i] = rng.normal(0.0, cfg.prod.sigma_xi, horizon)
        u_k[i] = rng.normal(0.0, cfg.capital.sigma_k, horizon)
        e_pl[i] = rng.normal(0.0, cfg.prices.sigma_pL, horizon)
        e_pm[i] = rng.normal(0.0, cfg.prices.sigma_pM, horizon)
        e_pk[i] = rng.normal(0.0, cfg.prices.sigma_pK, horizon)
        eps[i] = rng.normal(0.0, cfg.shocks.sigma_eps, cfg.n_periods)
        eta_shift[i] = rng.normal(0.0, 1.0)
    return xi, u_k, e_pl, e_pm, e_pk, eps, shifts, eta_shift


def _pricing_root(tech: Technology, K, omega, pL, pM, mu, eta, scale, cal_e):
    """Solve the pricing fixed point for every observation (vectorized Newton).

    Finds the flexible-aggregate level y where planned output and the price
    P = mu * marginal cost jointly clear the demand curve Qstar = scale * P^(-eta).
    The residual in x = log y is strictly increasing whenever the short-run
    returns stay below the markup, so Newton from x = 0 with step clipping
    converges for every row at once.
    """
    c2 = tech.unit_cost(pL, pM)
    log_mu_c2 = np.log(mu) + np.log(c2)
    omega = np.asarray(omega, float)
    log_scale = math.log(scale)
    log_cal_e = math.log(cal_e)

    def resid_and_slope(x):
        y = np.exp(x)
        F = tech.F(K, y)
        Fy = tech.F_dy(K, y)
        log_qtilde = np.log(F) + omega
        log_lam = log_mu_c2 - np.log(Fy) - omega - log_cal_e
        g = log_qtilde - log_scale + np.asarray(eta) * log_lam
        if isinstance(tech, CobbDouglas):
            s = tech.variable_scale
            slope = s + np.asarray(eta) * (1.0 - s)
            slope = np.broadcast_to(slope, np.shape(g))
        else:
            sg = tech.sigma
            w = y**sg / (tech.beta_K * K**sg + y**sg)
            slope = tech.v * w + np.asarray(eta) * ((1.0 - sg) - (tech.v - sg) * w)
        return g, slope

    x = np.zeros(np.broadcast(K, omega, pL, pM).shape)
    for _ in range(80):
        g, slope = resid_and_slope(x)
        step = np.clip(-g / slope, -4.0, 4.0)
        x = x + step
        if np.max(np.abs(g)) < 1e-13:
            break
    else:
        bad = np.nonzero(np.abs(g) > 1e-10)[0]
        raise SimulationError(f"pricing fixed point failed to converge at rows {bad[:10].tolist()}")
    return np.exp(x)


def simulate_panel(cfg: SimConfig) -> Panel:
    """Generate a reproducible panel under the full assumption set."""
    tech, demand, shocks = cfg.tech, cfg.demand, cfg.shocks
    n, T, burn = cfg.n_firms, cfg.n_periods, cfg.burn_in
    if n == 0:
        data = {c: np.asarray([], dtype=np.int64 if c in ("firm_id", "t") else float) for c in COLUMNS}
        return Panel(data=data, config=cfg, seed=cfg.seed)

    xi, u_k, e_pl, e_pm, e_pk, eps, shifts, eta_shift = _draw_firm_shocks(cfg)
    horizon = burn + T

    # Firm-level permanent heterogeneity.
    m_pl = cfg.prices.mean_log_pL + cfg.prices.dispersion_pL * shifts[:, 0]
    m_pm = cfg.prices.mean_log_pM + cfg.prices.dispersion_pM * shifts[:, 1]
    m_pk = cfg.prices.mean_log_pK + cfg.prices.dispersion_pK * shifts[:, 2]
    if demand.eta_dispersion > 0.0:
        eta_i = 1.0 + (demand.eta - 1.0) * np.exp(demand.eta_dispersion * eta_shift)
    else:
        eta_i = np.full(n, demand.eta)
    mu_i = eta_i / (eta_i - 1.0)
    scale_sr = tech.variable_scale if isinstance(tech, CobbDouglas) else tech.v
    if np.any(mu_i <= scale_sr):
        bad = np.nonzero(mu_i <= scale_sr)[0]
        raise SimulationError(
            f"drawn demand elasticities leave no pricing fixed point for firms {bad[:10].tolist()}"
        )

    # Time recursions, vectorized across firms.
    omega = np.empty((n, horizon))
    logK = np.empty((n, horizon))
    lpl = np.empty((n, horizon))
    lpm = np.empty((n, horizon))
    lpk = np.empty((n, horizon))
    w_prev = np.full(n, cfg.prod.mean)
    k_prev = np.full(n, (cfg.capital.kappa0 + cfg.capital.kappa_w * cfg.prod.mean) / (1.0 - cfg.capital.kappa_k))
    pl_prev, pm_prev, pk_prev = m_pl.copy(), m_pm.copy(), m_pk.copy()
    for s in range(horizon):
        logK[:, s] = cfg.capital.kappa0 + cfg.capital.kappa_k * k_prev + cfg.capital.kappa_w * w_prev + u_k[:, s]
        omega[:, s] = cfg.prod.c0 + cfg.prod.rho * w_prev + xi[:, s]
        lpl[:, s] = m_pl + cfg.prices.rho_pL * (pl_prev - m_pl) + e_pl[:, s]
        lpm[:, s] = m_pm + cfg.prices.rho_pM * (pm_prev - m_pm) + e_pm[:, s]
        lpk[:, s] = m_pk + cfg.prices.rho_pK * (pk_prev - m_pk) + e_pk[:, s]
        w_prev, k_prev = omega[:, s], logK[:, s]
        pl_prev, pm_prev, pk_prev = lpl[:, s], lpm[:, s], lpk[:, s]

    keep = slice(burn, horizon)
    w = omega[:, keep].ravel()
    K = np.exp(logK[:, keep]).ravel()
    pL = np.exp(lpl[:, keep]).ravel()
    pM = np.exp(lpm[:, keep]).ravel()
    pK = np.exp(lpk[:, keep]).ravel()
    eps_flat = eps.ravel()
    mu = np.repeat(mu_i, T)
    eta = np.repeat(eta_i, T)

    y = _pricing_root(tech, K, w, pL, pM, mu, eta, demand.scale, shocks.cal_e)
    qtilde = tech.F(K, y) * np.exp(w)
    lam = tech.unit_cost(pL, pM) / (tech.F_dy(K, y) * np.exp(w) * shocks.cal_e)
    P = mu * lam

    if cfg.input_solver == "numeric":
        L = np.empty_like(y)
        M = np.empty_like(y)
        for i in range(y.size):
            sol = costmin.cost_min_numeric(tech, K[i], pL[i], pM[i], float(tech.F(K[i], y[i])))
            L[i], M[i] = sol.L_star, sol.M_star
    else:
        L1, M1 = tech.unit_demand(pL, pM)
        L, M = y * L1, y * M1

    Q = qtilde * np.exp(eps_flat)
    R = P * Q
    target_revenue = P * qtilde * shocks.cal_e
    sL = pL * L / target_revenue
    sM = pM * M / target_revenue

    data = {
        "firm_id": np.repeat(np.arange(1, n + 1, dtype=np.int64), T),
        "t": np.tile(np.arange(1, T + 1, dtype=np.int64), n),
        "K": K,
        "L": L,
        "M": M,
        "pL": pL,
        "pM": pM,
        "pK": pK,
        "omega": w,
        "eps": eps_flat,
        "Q": Q,
        "P": P,
        "R": R,
        "sL_star": sL,
        "sM_star": sM,
    }
    return Panel(data=data, config=cfg, seed=cfg.seed)


# ---------------------------------------------------------------------------
# Assumption checks on generated (or externally supplied) panels
# ---------------------------------------------------------------------------


@dataclass
class PanelCheckReport:
    """Per-observation identity checks; zero violations on a self-generated panel."""

    n_rows: int
    violations: dict
    first_bad_rows: dict

    @property
    def passed(self) -> bool:
        return all(v == 0 for v in self.violations.values())

    def total_violations(self) -> int:
        return sum(self.violations.values())


def verify_panel(panel: Panel, cfg: SimConfig, rtol_revenue: float = 1e-9, rtol_identity: float = 1e-7) -> PanelCheckReport:
    """Check the revenue identity, the reduced-form revenue equation, the
    first-order-condition input prices, and markup consistency on every row."""
    tech, cal_e = cfg.tech, cfg.shocks.cal_e
    n = len(panel)
    violations = {}
    first_bad = {}

    def record(name, bad_mask):
        idx = np.nonzero(bad_mask)[0]
        violations[name] = int(idx.size)
        if idx.size:
            first_bad[name] = idx[:10].tolist()

    if n == 0:
        for name in ("revenue_identity", "reduced_form_L", "reduced_form_M", "foc_price_L", "foc_price_M", "markup_consistency"):
            violations[name] = 0
        return PanelCheckReport(n_rows=0, violations=violations, first_bad_rows=first_bad)

    K, L, M = panel.col("K"), panel.col("L"), panel.col("M")
    pL, pM = panel.col("pL"), panel.col("pM")
    R = panel.col("R")

    if panel.has("Q") and panel.has("P"):
        record("revenue_identity", np.abs(R - panel.col("P") * panel.col("Q")) > rtol_revenue * R)
    else:
        violations["revenue_identity"] = 0

    if panel.has("eps"):
        rstar = panel.rstar
        from .technology import revenue_pf_reduced_form

        for v, share in (("L", panel.col("sL_star")), ("M", panel.col("sM_star"))):
            pred = revenue_pf_reduced_form(tech, K, L, M, pL, pM, share, cal_e, v)
            record(f"reduced_form_{v}", np.abs(pred - rstar) > rtol_identity * rstar)
    else:
        violations["reduced_form_L"] = violations["reduced_form_M"] = 0

    for v, price in (("L", pL), ("M", pM)):
        implied = costmin.foc_input_price(tech, K, L, M, pL, pM, cal_e, v)
        record(f"foc_price_{v}", np.abs(implied - price) > rtol_identity * price)

    if panel.has("P") and panel.has("omega"):
        lam = costmin.marginal_cost_closed_form(tech, K, L, M, pL, pM, panel.col("omega"), cal_e)
        mu_price = panel.col("P") / lam
        mu_share = tech.elasticity(K, L, M, "M") / panel.col("sM_star")
        record("markup_consistency", np.abs(mu_price - mu_share) > 1e-8 * mu_share)
    else:
        violations["markup_consistency"] = 0

    return PanelCheckReport(n_rows=n, violations=violations, first_bad_rows=first_bad)
