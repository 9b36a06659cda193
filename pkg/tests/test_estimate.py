import math

import numpy as np
import pytest

from revprod.estimate import (
    BASIC_INSTRUMENTS,
    build_quantity_moments,
    build_revenue_moments,
    first_stage_project,
    gmm_minimize,
    regularized_inverse,
)
from revprod.panel_io import COLUMNS, Panel, PanelFormatError
from revprod.simulate import SimConfig, simulate_panel
from revprod.technology import ShockConfig


def theta_true(cfg):
    tech = cfg.tech
    if tech.kind == "CD":
        return np.array([tech.beta_K, tech.beta_L, tech.beta_M])
    return np.array([tech.sigma, tech.beta_L, tech.beta_M, tech.v])


class TestFirstStage:
    def test_noise_free_panel_fits_exactly(self, cd_tech):
        cfg = SimConfig(tech=cd_tech, shocks=ShockConfig(sigma_eps=0.0), n_firms=60, n_periods=5, seed=3)
        panel = simulate_panel(cfg)
        fs = first_stage_project(panel, "quantity", 3)
        assert np.max(np.abs(fs.residuals)) < 1e-10
        assert np.allclose(fs.fitted, np.log(panel.col("Q")), atol=1e-10)

    def test_residual_mean_zero(self, ces_panel):
        fs = first_stage_project(ces_panel, "quantity", 3)
        assert abs(fs.residuals.mean()) < 1e-12

    def test_fitted_tracks_planned_output(self, ces_panel):
        fs = first_stage_project(ces_panel, "quantity", 3)
        corr = np.corrcoef(fs.fitted, np.log(ces_panel.qstar))[0, 1]
        assert corr >= 0.999

    def test_cal_e_estimate_close_to_truth(self, ces_panel, ces_config):
        fs = first_stage_project(ces_panel, "revenue", 3)
        assert fs.cal_e_hat == pytest.approx(ces_config.shocks.cal_e, abs=2e-3)

    def test_quantity_mode_requires_q(self, small_cd_panel):
        data = {c: small_cd_panel.col(c) for c in COLUMNS}
        data["Q"] = None
        panel = Panel(data=data)
        with pytest.raises(PanelFormatError, match="quantities unobserved"):
            first_stage_project(panel, "quantity", 3)

    def test_degree_reduced_when_underdetermined(self, cd_tech):
        cfg = SimConfig(tech=cd_tech, n_firms=5, n_periods=2, seed=3)
        panel = simulate_panel(cfg)
        fs = first_stage_project(panel, "quantity", 3)
        assert fs.degree < 3


class TestMomentSystems:
    def test_quantity_moments_small_at_truth(self, ces_panel, ces_config, cd_panel, cd_config):
        for panel, cfg in ((ces_panel, ces_config), (cd_panel, cd_config)):
            fs = first_stage_project(panel, "quantity", 3)
            ms = build_quantity_moments(cfg.tech.kind, fs, panel)
            m = ms.moments(theta_true(cfg.sim if hasattr(cfg, "sim") else cfg))
            assert np.max(np.abs(m)) < 4.0 / math.sqrt(ms.n_obs)

    def test_revenue_moments_small_at_truth_any_v(self, ces_panel, ces_config):
        fs = first_stage_project(ces_panel, "revenue", 3)
        ms = build_revenue_moments("CES", fs, ces_panel, cal_e=ces_config.shocks.cal_e)
        bound = 4.0 / math.sqrt(ms.n_obs)
        for v in (0.6, 0.9, 1.25):
            m = ms.moments(np.array([0.5, 0.3, 0.4, v]))
            assert np.max(np.abs(m)) < bound

    def test_revenue_moments_small_at_any_share_scale(self, ces_panel, ces_config):
        # only the ratio beta_L/beta_M is pinned; a common rescaling moves nothing
        fs = first_stage_project(ces_panel, "revenue", 3)
        ms = build_revenue_moments("CES", fs, ces_panel, cal_e=ces_config.shocks.cal_e)
        ref = ms.moments(np.array([0.5, 0.3, 0.4, 0.9]))
        for c in (0.5, 1.4):
            m = ms.moments(np.array([0.5, c * 0.3, c * 0.4, 0.9]))
            assert np.max(np.abs(m - ref)) < 1e-12

    def test_firm_order_irrelevant(self, small_ces_panel, small_ces_config):
        rng = np.random.default_rng(1)
        perm = rng.permutation(len(small_ces_panel))
        shuffled = Panel(data={c: (None if small_ces_panel.col(c) is None else small_ces_panel.col(c)[perm]) for c in COLUMNS})
        for panel in (small_ces_panel, shuffled):
            fs = first_stage_project(panel, "quantity", 3)
            ms = build_quantity_moments("CES", fs, panel)
            m = ms.moments(theta_true(small_ces_config))
            if panel is small_ces_panel:
                ref = m
        assert np.allclose(ref, m, atol=1e-12)

    def test_g_degree_one_recovers_ar1(self, ces_panel, ces_config):
        fs = first_stage_project(ces_panel, "quantity", 3)
        ms = build_quantity_moments("CES", fs, ces_panel, g_degree=1)
        g = ms.g_coefficients(theta_true(ces_config))
        assert g[0] == pytest.approx(ces_config.prod.c0, abs=0.03)
        assert g[1] == pytest.approx(ces_config.prod.rho, abs=0.05)

    def test_revenue_objective_flat_in_v_bitwise(self, ces_panel, ces_config):
        fs = first_stage_project(ces_panel, "revenue", 3)
        ms = build_revenue_moments("CES", fs, ces_panel, cal_e=ces_config.shocks.cal_e)
        a = ms.objective(np.array([0.5, 0.3, 0.4, 0.62]))
        b = ms.objective(np.array([0.5, 0.3, 0.4, 1.17]))
        assert a == b

    def test_revenue_objective_flat_in_beta_k_bitwise(self, cd_panel, cd_config):
        fs = first_stage_project(cd_panel, "revenue", 3)
        ms = build_revenue_moments("CD", fs, cd_panel, cal_e=cd_config.shocks.cal_e)
        a = ms.objective(np.array([0.05, 0.3, 0.4]))
        b = ms.objective(np.array([0.85, 0.3, 0.4]))
        assert a == b

    def test_sigma_direction_not_flat(self, ces_panel, ces_config):
        fs = first_stage_project(ces_panel, "revenue", 3)
        ms = build_revenue_moments("CES", fs, ces_panel, cal_e=ces_config.shocks.cal_e)
        at_truth = ms.objective(theta_true(ces_config))
        for d in (-0.1, 0.1):
            shifted = theta_true(ces_config) + np.array([d, 0, 0, 0])
            assert ms.objective(shifted) > 10.0 * max(at_truth, 1e-12)

    def test_basic_instrument_subset_supported(self, small_ces_panel, small_ces_config):
        fs = first_stage_project(small_ces_panel, "quantity", 3)
        ms = build_quantity_moments("CES", fs, small_ces_panel, instruments=BASIC_INSTRUMENTS)
        assert ms.Z.shape[1] == len(BASIC_INSTRUMENTS)
        m = ms.moments(theta_true(small_ces_config))
        assert np.max(np.abs(m)) < 4.0 / math.sqrt(ms.n_obs)

    def test_unknown_instrument_token(self, small_ces_panel):
        fs = first_stage_project(small_ces_panel, "quantity", 3)
        with pytest.raises(ValueError, match="unknown instrument"):
            build_quantity_moments("CES", fs, small_ces_panel, instruments=("const", "bogus"))


class TestGmmMinimize:
    def test_quantity_cd_recovers_truth(self, cd_panel, cd_config):
        fs = first_stage_project(cd_panel, "quantity", 3)
        ms = build_quantity_moments("CD", fs, cd_panel)
        res = gmm_minimize(ms, weighting="two-step", restarts=3, seed=5)
        for name, true in zip(res.param_names, theta_true(cd_config)):
            assert res.estimates[name] == pytest.approx(true, abs=0.08)

    def test_quantity_ces_recovers_truth(self, ces_panel, ces_config):
        fs = first_stage_project(ces_panel, "quantity", 3)
        ms = build_quantity_moments("CES", fs, ces_panel)
        res = gmm_minimize(ms, weighting="two-step", restarts=3, seed=5)
        for name, true in zip(res.param_names, theta_true(ces_config)):
            assert res.estimates[name] == pytest.approx(true, abs=0.12)

    def test_revenue_ces_minima_span_flat_direction(self, ces_panel, ces_config):
        fs = first_stage_project(ces_panel, "revenue", 3)
        ms = build_revenue_moments("CES", fs, ces_panel, cal_e=ces_config.shocks.cal_e)
        res = gmm_minimize(ms, weighting="identity", restarts=20, seed=5)
        objs = np.array([m["objective"] for m in res.minima])
        near_best = objs <= objs.min() * (1.0 + 1e-6) + 1e-15
        v_values = np.array([m["theta"][3] for m in res.minima])[near_best]
        assert v_values.max() - v_values.min() >= 0.4
        rel_spread = (objs[near_best].max() - objs[near_best].min()) / max(objs.min(), 1e-300)
        assert rel_spread < 1e-6

    def test_threaded_restarts_match_sequential(self, small_ces_panel, small_ces_config):
        fs = first_stage_project(small_ces_panel, "quantity", 3)
        ms = build_quantity_moments("CES", fs, small_ces_panel)
        a = gmm_minimize(ms, weighting="identity", restarts=4, seed=5, threads=1)
        b = gmm_minimize(ms, weighting="identity", restarts=4, seed=5, threads=3)
        assert a.estimates == b.estimates
        assert [m["objective"] for m in a.minima] == [m["objective"] for m in b.minima]

    def test_weight_matrix_symmetric_psd(self, small_ces_panel, small_ces_config):
        fs = first_stage_project(small_ces_panel, "quantity", 3)
        ms = build_quantity_moments("CES", fs, small_ces_panel)
        cov = ms.moment_covariance(theta_true(small_ces_config))
        W = regularized_inverse(cov)
        assert np.allclose(W, W.T)
        assert np.all(np.linalg.eigvalsh(W) > 0.0)

    def test_objective_nonnegative(self, small_ces_panel, small_ces_config):
        fs = first_stage_project(small_ces_panel, "quantity", 3)
        ms = build_quantity_moments("CES", fs, small_ces_panel)
        rng = np.random.default_rng(0)
        for _ in range(10):
            th = np.array([rng.uniform(lo, hi) for lo, hi in ms.bounds])
            assert ms.objective(th) >= 0.0

    def test_result_serializable(self, small_cd_panel, small_cd_config):
        fs = first_stage_project(small_cd_panel, "quantity", 3)
        ms = build_quantity_moments("CD", fs, small_cd_panel)
        res = gmm_minimize(ms, weighting="identity", restarts=2, seed=5, screen=32)
        import json

        payload = json.dumps(res.to_dict())
        assert "estimates" in json.loads(payload)


@pytest.mark.slow
class TestConsistency:
    def test_errors_shrink_with_n(self, ces_tech):
        # quantity-mode median absolute error falls as the cross-section grows
        def run(n, seed):
            cfg = SimConfig(tech=ces_tech, n_firms=n, n_periods=10, seed=seed)
            panel = simulate_panel(cfg)
            fs = first_stage_project(panel, "quantity", 3)
            ms = build_quantity_moments("CES", fs, panel)
            res = gmm_minimize(ms, weighting="two-step", restarts=3, seed=5)
            true = np.array([ces_tech.sigma, ces_tech.beta_L, ces_tech.beta_M, ces_tech.v])
            return np.abs(res.theta - true)

        errs_small = np.median([run(200, 100 + r) for r in range(4)], axis=0)
        errs_large = np.median([run(2000, 200 + r) for r in range(4)], axis=0)
        assert np.median(errs_large) < np.median(errs_small)
