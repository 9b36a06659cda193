import math

import numpy as np
import pytest

from revprod.technology import (
    CES,
    CobbDouglas,
    DomainError,
    ParameterError,
    evaluate_quantity,
    h_separable,
    log_revenue_cd,
    log_revenue_ces,
    markup_production_approach,
    output_elasticity,
    price_from_markup,
    revenue_pf_reduced_form,
    validate_technology,
)

from conftest import random_point, random_technology


class TestEvaluateQuantity:
    def test_cd_unit_inputs(self):
        tech = CobbDouglas(0.3, 0.3, 0.4)
        assert evaluate_quantity(tech, 1.0, 1.0, 1.0, 0.0, 0.0) == pytest.approx(1.0, abs=1e-14)

    def test_ces_unit_inputs_shares_sum_one(self):
        tech = CES(beta_L=1 / 3, beta_M=1 / 3, sigma=0.5, v=1.1)
        assert evaluate_quantity(tech, 1.0, 1.0, 1.0, 0.0, 0.0) == pytest.approx(1.0, abs=1e-14)

    def test_cd_log_linear_oracle(self):
        # independent evaluation in logs
        tech = CobbDouglas(0.3, 0.3, 0.4)
        got = evaluate_quantity(tech, 2.0, 1.0, 1.0, 0.1, 0.0)
        assert got == pytest.approx(math.exp(0.3 * math.log(2.0) + 0.1), rel=1e-12)

    def test_nonpositive_input_rejected(self):
        tech = CobbDouglas(0.3, 0.3, 0.4)
        with pytest.raises(DomainError):
            evaluate_quantity(tech, -1.0, 1.0, 1.0, 0.0, 0.0)
        with pytest.raises(DomainError):
            evaluate_quantity(tech, 1.0, 0.0, 1.0, 0.0, 0.0)

    def test_ces_sigma_zero_rejected_at_construction(self):
        with pytest.raises(ParameterError):
            CES(beta_L=0.3, beta_M=0.3, sigma=0.0, v=1.0)
        with pytest.raises(ParameterError):
            CES(beta_L=0.3, beta_M=0.3, sigma=1.0, v=1.0)


class TestAggregate:
    def test_cd_unit(self):
        tech = CobbDouglas(0.1, 0.3, 0.4)
        assert h_separable(tech, 1.0, 1.0, 1.0) == pytest.approx(1.0, abs=1e-14)

    def test_ces_value_two_paths(self):
        # direct evaluation and an independent log-space path
        tech = CES(beta_L=0.2, beta_M=0.3, sigma=0.5, v=1.0)
        direct = h_separable(tech, 1.0, 4.0, 1.0)
        assert direct == pytest.approx(0.49, abs=1e-12)
        log_path = math.exp((1 / 0.5) * math.log(0.2 * 4.0**0.5 + 0.3 * 1.0**0.5))
        assert direct == pytest.approx(log_path, rel=1e-14)

    @pytest.mark.parametrize("kind", ["CD", "CES"])
    def test_degree_one_homogeneity(self, kind):
        rng = np.random.default_rng(3)
        for _ in range(50):
            tech = random_technology(rng, kind)
            K, L, M, _, _ = random_point(rng)
            for t in (2.5, rng.uniform(0.2, 5.0)):
                h0 = h_separable(tech, K, L, M)
                ht = h_separable(tech, K, t * L, t * M)
                assert abs(ht - t * h0) <= 1e-10 * t * h0


class TestElasticities:
    def test_cd_constant(self):
        tech = CobbDouglas(0.3, 0.3, 0.4)
        assert output_elasticity(tech, 2.0, 0.5, 3.0, "M") == pytest.approx(0.4, abs=1e-14)

    def test_ces_unit_point(self):
        tech = CES(beta_L=1 / 3, beta_M=1 / 3, sigma=0.5, v=1.2)
        assert output_elasticity(tech, 1.0, 1.0, 1.0, "M") == pytest.approx(0.4, rel=1e-12)

    @pytest.mark.parametrize("kind", ["CD", "CES"])
    def test_finite_difference_oracle(self, kind):
        # analytic elasticity vs central difference of log output, step 1e-5
        rng = np.random.default_rng(7)
        step = 1e-5
        for _ in range(40):
            tech = random_technology(rng, kind)
            K, L, M, _, _ = random_point(rng)
            for which, args in (("K", (K, L, M)), ("L", (K, L, M)), ("M", (K, L, M))):
                analytic = output_elasticity(tech, K, L, M, which)

                def logq(scale):
                    KK, LL, MM = K, L, M
                    if which == "K":
                        KK = K * scale
                    elif which == "L":
                        LL = L * scale
                    else:
                        MM = M * scale
                    return math.log(evaluate_quantity(tech, KK, LL, MM, 0.0, 0.0))

                fd = (logq(math.exp(step)) - logq(math.exp(-step))) / (2 * step)
                if analytic == 0.0:
                    assert abs(fd) < 1e-9
                else:
                    assert abs(fd - analytic) <= 1e-6 * abs(analytic)

    def test_unknown_input_name(self):
        with pytest.raises(ValueError):
            output_elasticity(CobbDouglas(0.3, 0.3, 0.4), 1, 1, 1, "X")


class TestMarkupOps:
    def test_direct_ratio(self):
        assert markup_production_approach(0.4, 0.32) == pytest.approx(1.25, abs=1e-14)

    def test_unit_markup(self):
        assert markup_production_approach(0.37, 0.37) == pytest.approx(1.0, abs=1e-14)

    def test_share_domain_error(self):
        with pytest.raises(DomainError):
            markup_production_approach(0.4, 0.0)
        with pytest.raises(DomainError):
            markup_production_approach(0.4, -0.1)

    def test_price_from_markup(self):
        assert price_from_markup(1.0, 2.0) == pytest.approx(2.0)
        assert price_from_markup(4 / 3, 0.75) == pytest.approx(1.0, rel=1e-14)


class TestRevenuePredictors:
    def test_cd_capital_exponent_absent(self, small_cd_panel):
        p = small_cd_panel
        args = (p.col("K"), p.col("L"), p.col("M"), p.col("pL"), p.col("pM"), p.col("sM_star"), 1.005, "M")
        a = revenue_pf_reduced_form(CobbDouglas(0.2, 0.3, 0.4), *args)
        b = revenue_pf_reduced_form(CobbDouglas(0.4, 0.3, 0.4), *args)
        assert np.array_equal(a, b)

    def test_ces_returns_to_scale_absent(self, small_ces_panel):
        p = small_ces_panel
        args = (p.col("K"), p.col("L"), p.col("M"), p.col("pL"), p.col("pM"), p.col("sM_star"), 1.005, "M")
        a = revenue_pf_reduced_form(CES(0.3, 0.4, 0.5, 0.8), *args)
        b = revenue_pf_reduced_form(CES(0.3, 0.4, 0.5, 1.2), *args)
        assert np.array_equal(a, b)

    def test_log_revenue_cd_no_beta_k_path(self):
        l, m, pl, pm, s, cal = 0.2, -0.1, 0.05, 0.1, math.log(0.3), 1.005
        lo = log_revenue_cd(CobbDouglas(0.05, 0.3, 0.4), l, m, pl, pm, s, cal, "L")
        hi = log_revenue_cd(CobbDouglas(0.85, 0.3, 0.4), l, m, pl, pm, s, cal, "L")
        assert lo == hi

    def test_log_revenue_ces_no_v_path(self):
        l, m, pl, pm, s, cal = 0.2, -0.1, 0.05, 0.1, math.log(0.3), 1.005
        lo = log_revenue_ces(CES(0.3, 0.4, 0.5, 0.6), l, m, pl, pm, s, cal, "M")
        hi = log_revenue_ces(CES(0.3, 0.4, 0.5, 1.4), l, m, pl, pm, s, cal, "M")
        assert lo == hi

    def test_cd_symmetric_intercept(self):
        # with beta_L = beta_M the intercept vanishes entirely: the prediction
        # reduces to the expenditure average (the parametric and reduced-form
        # paths agree on this; the reduced form is the arbiter)
        tech = CobbDouglas(0.25, 0.35, 0.35)
        l, m, pl, pm, s, cal = 0.3, -0.2, 0.1, -0.1, math.log(0.3), 1.0
        got = log_revenue_cd(tech, l, m, pl, pm, s, cal, "L")
        assert got == pytest.approx(0.5 * (l + pl) + 0.5 * (m + pm) - s, rel=1e-14)

    @pytest.mark.parametrize("kind", ["CD", "CES"])
    @pytest.mark.parametrize("which_v", ["L", "M"])
    def test_parametric_matches_reduced_form(self, kind, which_v):
        rng = np.random.default_rng(11)
        for _ in range(40):
            tech = random_technology(rng, kind)
            K, L, M, pL, pM = random_point(rng)
            s_star = rng.uniform(0.1, 0.6)
            cal_e = math.exp(0.5 * rng.uniform(0.0, 0.3) ** 2)
            red = revenue_pf_reduced_form(tech, K, L, M, pL, pM, s_star, cal_e, which_v)
            fn = log_revenue_cd if kind == "CD" else log_revenue_ces
            par = fn(tech, math.log(L), math.log(M), math.log(pL), math.log(pM), math.log(s_star), cal_e, which_v)
            assert math.log(red) == pytest.approx(par, abs=1e-8)

    def test_ces_share_rescaling_is_invariant(self):
        # (beta_L, beta_M) -> (c beta_L, c beta_M) leaves the prediction
        # unchanged: only the ratio enters the revenue equation
        rng = np.random.default_rng(13)
        base = CES(0.25, 0.35, 0.5, 0.9)
        for c in (0.5, 1.5, 2.0):
            scaled = CES(c * 0.25, c * 0.35, 0.5, 0.9) if c * 0.6 < 1 else None
            if scaled is None:
                continue
            for _ in range(10):
                K, L, M, pL, pM = random_point(rng)
                s_star, cal_e = 0.3, 1.005
                a = log_revenue_ces(base, math.log(L), math.log(M), math.log(pL), math.log(pM), math.log(s_star), cal_e, "M")
                b = log_revenue_ces(scaled, math.log(L), math.log(M), math.log(pL), math.log(pM), math.log(s_star), cal_e, "M")
                assert a == pytest.approx(b, abs=1e-12)

    def test_two_input_consistency_on_panel(self, ces_panel, ces_config):
        # both flexible-input variants predict the same planned revenue
        p, tech, cal = ces_panel, ces_config.tech, ces_config.shocks.cal_e
        rl = revenue_pf_reduced_form(tech, p.col("K"), p.col("L"), p.col("M"), p.col("pL"), p.col("pM"), p.col("sL_star"), cal, "L")
        rm = revenue_pf_reduced_form(tech, p.col("K"), p.col("L"), p.col("M"), p.col("pL"), p.col("pM"), p.col("sM_star"), cal, "M")
        assert np.max(np.abs(rl - rm) / rm) < 1e-8

    def test_markup_consistency_on_panel(self, ces_panel, ces_config):
        p, tech = ces_panel, ces_config.tech
        mu_l = markup_production_approach(
            output_elasticity(tech, p.col("K"), p.col("L"), p.col("M"), "L"), p.col("sL_star")
        )
        mu_m = markup_production_approach(
            output_elasticity(tech, p.col("K"), p.col("L"), p.col("M"), "M"), p.col("sM_star")
        )
        assert np.max(np.abs(mu_l - mu_m)) < 1e-8


class TestValidateTechnology:
    def test_cd_log_grid_passes(self):
        tech = CobbDouglas(0.3, 0.3, 0.4)
        g = np.exp(np.linspace(-1, 1, 5))
        grid = np.array([(k, l, m) for k in g for l in g for m in g])
        report = validate_technology(tech, grid)
        assert report.passed
        assert report.n_points == 125

    def test_invalid_ces_rejected_before_validation(self):
        with pytest.raises(ParameterError):
            CES(beta_L=0.6, beta_M=0.4, sigma=0.5, v=1.0)

    @pytest.mark.parametrize("kind", ["CD", "CES"])
    def test_random_grids_no_counterexamples(self, kind):
        rng = np.random.default_rng(17)
        for _ in range(5):
            tech = random_technology(rng, kind)
            grid = np.exp(rng.normal(0.0, 0.6, size=(40, 3)))
            report = validate_technology(tech, grid)
            assert report.passed, (tech, report.monotone_violations[:2], report.quasiconcave_violations[:2])

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            validate_technology(CobbDouglas(0.3, 0.3, 0.4), np.empty((0, 3)))
