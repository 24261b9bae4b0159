"""NIG density/CDF/quantile/calibration tests against independent oracles."""

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from autocopula.nig import (
    IgParams,
    MomentSet,
    NigParams,
    fit_mle,
    fit_moment_matching,
    ig_pdf,
    log_likelihood,
    moments_from_params,
    nig_cdf,
    nig_inv_cdf,
    nig_logpdf,
    nig_pdf,
    params_from_moments,
    sample_moments,
)

STD = NigParams(mu=0.0, alpha=1.0, beta=0.0, delta=1.0)
# Heavy-tailed reference sets: alpha, beta near 1e-2 with delta ~ 2.4 put the
# standard deviation near 60 and the exponential tail rate near 9e-4, which
# stresses the quadrature panelling far more than unit-scale parameters.
HEAVY = NigParams(mu=0.0980, alpha=0.0131, beta=0.0122, delta=2.3799)
HEAVY_ALT = NigParams(mu=0.3244, alpha=0.0231, beta=0.0210, delta=2.7129)


def random_params(rng, n):
    out = []
    for _ in range(n):
        alpha = math.exp(rng.uniform(math.log(0.05), math.log(20.0)))
        out.append(NigParams(
            mu=rng.uniform(-5.0, 5.0),
            alpha=alpha,
            beta=rng.uniform(-0.9, 0.9) * alpha,
            delta=math.exp(rng.uniform(math.log(0.1), math.log(10.0))),
        ))
    return out


def support_halfwidth(p):
    # generous truncation for quad oracles: exponential tail rate alpha -+ beta
    return (80.0 + p.delta * p.gamma) / (p.alpha - abs(p.beta))


class TestIgPdf:
    def test_vanishes_at_origin(self):
        p = IgParams(alpha_ig=1.0, beta_ig=1.0)
        assert ig_pdf(p, 1e-12) == 0.0
        assert ig_pdf(p, 1e-4) < 1e-100

    def test_integrates_to_one(self):
        p = IgParams(alpha_ig=1.0, beta_ig=1.0)
        val, _ = quad(lambda y: ig_pdf(p, y), 1e-12, 60.0, limit=200)
        assert abs(val - 1.0) < 1e-8

    def test_mode_is_stationary_point(self):
        p = IgParams(alpha_ig=1.0, beta_ig=1.0)
        res = minimize_scalar(lambda y: -math.log(ig_pdf(p, y)),
                              bounds=(1e-6, 10.0), method="bounded",
                              options={"xatol": 1e-12})
        # stationary point of log f: beta*y^2 + 3y - alpha^2/beta = 0
        y_star = (-3.0 + math.sqrt(9.0 + 4.0 * p.alpha_ig**2)) / (2.0 * p.beta_ig)
        assert res.x == pytest.approx(y_star, abs=1e-8)

    def test_domain_error(self):
        p = IgParams(alpha_ig=1.0, beta_ig=1.0)
        with pytest.raises(ValueError):
            ig_pdf(p, 0.0)
        with pytest.raises(ValueError):
            ig_pdf(p, -1.0)


class TestNigPdf:
    def test_value_at_center_vs_bessel_oracle(self):
        # f(0) = e * K1(1) / pi for (mu=0, beta=0, alpha=1, delta=1)
        expected = float(mpmath.e * mpmath.besselk(1, 1) / mpmath.pi)
        assert nig_pdf(STD, 0.0) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.5208, abs=5e-5)

    def test_symmetric_when_beta_zero(self):
        s = np.linspace(0.1, 8.0, 25)
        np.testing.assert_allclose(nig_pdf(STD, STD.mu + s),
                                   nig_pdf(STD, STD.mu - s), rtol=1e-13)

    def test_heavy_tail_params_integrate_to_one(self):
        half = support_halfwidth(HEAVY)
        val, _ = quad(lambda x: nig_pdf(HEAVY, x),
                      HEAVY.mu - half, HEAVY.mu + half,
                      points=[HEAVY.mu], limit=400)
        assert abs(val - 1.0) < 1e-6

    def test_no_nan_far_out(self):
        vals = nig_pdf(HEAVY, np.array([-1e7, -1e3, 1e3, 1e7]))
        assert np.all(np.isfinite(vals)) and np.all(vals >= 0.0)
        logs = nig_logpdf(HEAVY, np.array([-1e7, 1e7]))
        assert np.all(np.isfinite(logs))

    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError):
            NigParams(mu=0.0, alpha=1.0, beta=1.0, delta=1.0)
        with pytest.raises(ValueError):
            NigParams(mu=0.0, alpha=1.0, beta=0.0, delta=0.0)


class TestNigCdf:
    def test_median_at_mu_when_symmetric(self):
        assert abs(nig_cdf(STD, 0.0) - 0.5) < 1e-8

    def test_monotone_on_grid(self):
        sd = math.sqrt(moments_from_params(HEAVY).variance)
        grid = np.linspace(HEAVY.mu - 8 * sd, HEAVY.mu + 8 * sd, 1000)
        vals = nig_cdf(HEAVY, grid)
        assert np.all(np.diff(vals) >= 0.0)

    def test_interval_mass_vs_quad_oracle(self):
        got = nig_cdf(STD, 1.0) - nig_cdf(STD, -1.0)
        want, _ = quad(lambda x: nig_pdf(STD, x), -1.0, 1.0, limit=200)
        assert abs(got - want) < 1e-7

    def test_differences_match_panel_quadrature(self):
        grid = np.linspace(-4.0, 4.0, 21)
        vals = nig_cdf(STD, grid)
        for a, b, da in zip(grid[:-1], grid[1:], np.diff(vals)):
            want, _ = quad(lambda x: nig_pdf(STD, x), a, b)
            assert abs(da - want) < 1e-7


class TestNigCdfHighPrecision:
    @pytest.mark.parametrize("p,xs", [
        (STD, (-2.0, -0.5, 0.0, 1.0, 3.0)),
        (HEAVY, (-30.0, 0.098, 50.0)),
    ])
    def test_cdf_matches_mpmath_quadrature(self, p, xs):
        # fully independent oracle: arbitrary-precision quadrature of the
        # density written directly in mpmath terms
        mpmath.mp.dps = 20
        mu, alpha, beta, delta = (mpmath.mpf(repr(v)) for v in
                                  (p.mu, p.alpha, p.beta, p.delta))
        gamma = mpmath.sqrt(alpha**2 - beta**2)

        def density(x):
            q = mpmath.sqrt(delta**2 + (x - mu) ** 2)
            return (delta * alpha * mpmath.exp(delta * gamma + beta * (x - mu))
                    * mpmath.besselk(1, alpha * q) / (mpmath.pi * q))

        lo = p.mu - (80.0 + p.delta * p.gamma) / (p.alpha + p.beta)
        for x in xs:
            want = float(mpmath.quad(density, [lo, p.mu, x] if x > p.mu
                                     else [lo, x]))
            assert abs(nig_cdf(p, x) - want) < 1e-8
        mpmath.mp.dps = 15


class TestNigInvCdf:
    def test_median(self):
        assert abs(nig_inv_cdf(STD, 0.5) - STD.mu) < 1e-6

    @pytest.mark.parametrize("p", [STD, HEAVY])
    def test_round_trip(self, p):
        for x in (p.mu - 3 * p.delta, p.mu, p.mu + 3 * p.delta):
            assert nig_inv_cdf(p, nig_cdf(p, x)) == pytest.approx(x, abs=1e-6)

    def test_extreme_quantile_vs_grid_inversion(self):
        q = 0.99
        x = nig_inv_cdf(HEAVY, q)
        assert abs(nig_cdf(HEAVY, x) - q) <= 1e-8
        # brute-force inversion of the quadrature CDF on a fine grid
        grid = np.linspace(HEAVY.mu, HEAVY.mu + 400.0, 200_001)
        cdf_grid = nig_cdf(HEAVY, grid)
        x_grid = float(np.interp(q, cdf_grid, grid))
        assert x == pytest.approx(x_grid, abs=2 * (grid[1] - grid[0]))

    def test_domain_and_clamping(self):
        with pytest.raises(ValueError):
            nig_inv_cdf(STD, 0.0)
        with pytest.raises(ValueError):
            nig_inv_cdf(STD, 1.0)
        assert nig_inv_cdf(STD, 1e-15) == nig_inv_cdf(STD, 1e-12)

    def test_pit_of_quantile_is_identity(self):
        qs = np.linspace(0.001, 0.999, 99)
        back = nig_cdf(STD, nig_inv_cdf(STD, qs))
        np.testing.assert_allclose(back, qs, atol=1e-6)


class TestMoments:
    def test_symmetric_case(self):
        m = moments_from_params(NigParams(mu=2.5, alpha=1.3, beta=0.0, delta=0.7))
        assert m.mean == 2.5
        assert m.skewness == 0.0

    def test_unit_variance_case(self):
        assert moments_from_params(STD).variance == 1.0

    def test_closed_form_matches_quadrature(self):
        rng = np.random.default_rng(11)
        for p in random_params(rng, 20):
            m = moments_from_params(p)
            half = support_halfwidth(p)
            lo, hi = p.mu - half, p.mu + half

            def central(k):
                val, _ = quad(lambda x: (x - m.mean) ** k * nig_pdf(p, x),
                              lo, hi, points=[p.mu], limit=400)
                return val

            var_q = central(2)
            skew_q = central(3) / var_q**1.5
            kurt_q = central(4) / var_q**2 - 3.0
            mean_q, _ = quad(lambda x: x * nig_pdf(p, x), lo, hi,
                             points=[p.mu], limit=400)
            scale = math.sqrt(m.variance)
            assert abs(mean_q - m.mean) < 1e-5 * max(abs(m.mean), scale)
            assert abs(var_q - m.variance) < 1e-5 * m.variance
            assert abs(skew_q - m.skewness) < 1e-5 * max(abs(m.skewness), 1.0)
            assert abs(kurt_q - m.excess_kurtosis) < 1e-5 * m.excess_kurtosis

    def test_round_trip_from_unit_params(self):
        p = params_from_moments(moments_from_params(STD))
        for name in ("mu", "alpha", "beta", "delta"):
            assert getattr(p, name) == pytest.approx(getattr(STD, name), abs=1e-12)

    def test_round_trip_heavy_tailed_row(self):
        m = moments_from_params(HEAVY_ALT)
        p = params_from_moments(m)
        for name in ("mu", "alpha", "beta", "delta"):
            assert getattr(p, name) == pytest.approx(getattr(HEAVY_ALT, name), rel=1e-9)

    def test_inadmissible_moments_rejected(self):
        with pytest.raises(ValueError, match="excess_kurtosis"):
            params_from_moments(MomentSet(mean=0.0, variance=1.0,
                                          skewness=1.0, excess_kurtosis=0.1))

    @settings(max_examples=150, deadline=None)
    @given(mu=st.floats(-10, 10),
           log_alpha=st.floats(math.log(0.05), math.log(20)),
           ratio=st.floats(-0.95, 0.95),
           log_delta=st.floats(math.log(0.05), math.log(20)))
    def test_param_moment_round_trip_property(self, mu, log_alpha, ratio, log_delta):
        p = NigParams(mu=mu, alpha=math.exp(log_alpha),
                      beta=ratio * math.exp(log_alpha), delta=math.exp(log_delta))
        back = params_from_moments(moments_from_params(p))
        for name in ("mu", "alpha", "beta", "delta"):
            want = getattr(p, name)
            assert getattr(back, name) == pytest.approx(want, rel=1e-9, abs=1e-9)


class TestLogLikelihood:
    def test_single_point_matches_bessel_oracle(self):
        expected = float(mpmath.log(mpmath.e * mpmath.besselk(1, 1) / mpmath.pi))
        assert log_likelihood(STD, [0.0]) == pytest.approx(expected, rel=1e-12)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(3)
        data = rng.normal(0.0, 2.0, 500)
        a = log_likelihood(HEAVY, data)
        b = log_likelihood(HEAVY, rng.permutation(data))
        assert a == pytest.approx(b, rel=1e-12)

    def test_equals_sum_of_log_pdf(self):
        data = np.linspace(-3, 3, 101)
        want = np.sum(np.log(nig_pdf(STD, data)))
        assert log_likelihood(STD, data) == pytest.approx(want, abs=1e-12)

    def test_empty_data_rejected(self):
        with pytest.raises(ValueError):
            log_likelihood(STD, [])


class TestFitMomentMatching:
    def test_synthetic_recovery(self):
        true = NigParams(mu=0.4, alpha=2.2, beta=0.15, delta=1.6)
        n = 100_000
        data = nig_inv_cdf(true, (np.arange(n) + 0.5) / n)
        got = fit_moment_matching(data)
        for name in ("alpha", "beta", "delta"):
            assert abs(getattr(got, name) - getattr(true, name)) \
                <= 0.10 * abs(getattr(true, name))
        mu_tol = 0.1 * math.sqrt(moments_from_params(true).variance / n) * 5
        assert abs(got.mu - true.mu) <= mu_tol

    def test_symmetric_sample_gives_zero_beta(self):
        # symmetric values with a spike at the centre keep the sample admissible
        data = np.array([-2.0] + [0.0] * 10 + [2.0])
        got = fit_moment_matching(data)
        assert got.beta == 0.0

    def test_two_point_sample_is_inadmissible(self):
        # {-a, +a} has excess kurtosis -2, outside the admissible region
        with pytest.raises(ValueError, match="inadmissible"):
            fit_moment_matching(np.array([-1.0, 1.0]))

    def test_permutation_invariant(self):
        rng = np.random.default_rng(5)
        data = nig_inv_cdf(STD, rng.uniform(0.001, 0.999, 2000))
        a = fit_moment_matching(data)
        b = fit_moment_matching(rng.permutation(data))
        assert a.alpha == pytest.approx(b.alpha, rel=1e-9)
        assert a.mu == pytest.approx(b.mu, abs=1e-9)


class TestFitMle:
    def test_synthetic_recovery_50k(self):
        true = NigParams(mu=0.4, alpha=2.2, beta=0.7, delta=1.6)
        n = 50_000
        rng = np.random.default_rng(77)
        u = (np.arange(n) + rng.uniform(0.0, 1.0, n)) / n
        data = nig_inv_cdf(true, np.clip(u, 1e-12, 1 - 1e-12))
        got = fit_mle(data, fit_moment_matching(data))
        for name in ("mu", "alpha", "beta", "delta"):
            assert abs(getattr(got, name) - getattr(true, name)) \
                <= 0.05 * abs(getattr(true, name))
        assert got.delta > 0 and abs(got.beta) < got.alpha

    def test_improves_on_init(self):
        rng = np.random.default_rng(13)
        init = NigParams(mu=0.0, alpha=1.5, beta=0.3, delta=0.8)
        data = nig_inv_cdf(init, np.clip(rng.uniform(0, 1, 4000), 1e-12, 1 - 1e-12))
        got = fit_mle(data, init)
        assert log_likelihood(got, data) >= log_likelihood(init, data)

    def test_improves_on_heavy_tailed_init(self):
        rng = np.random.default_rng(21)
        data = nig_inv_cdf(HEAVY,
                           np.clip(rng.uniform(0, 1, 3000), 1e-12, 1 - 1e-12))
        got = fit_mle(data, HEAVY_ALT)
        assert log_likelihood(got, data) >= log_likelihood(HEAVY_ALT, data)
        assert got.delta > 0 and abs(got.beta) < got.alpha

    def test_empty_data_rejected(self):
        with pytest.raises(ValueError):
            fit_mle([], STD)


class TestSerialization:
    def test_json_round_trip_without_gamma(self):
        import json

        s = HEAVY.to_json()
        payload = json.loads(s)
        assert set(payload) == {"mu", "alpha", "beta", "delta"}
        back = NigParams.from_json(s)
        assert back == HEAVY
        assert back.gamma == pytest.approx(math.sqrt(
            HEAVY.alpha**2 - HEAVY.beta**2), rel=1e-15)


class TestSampleMoments:
    def test_matches_biased_conventions(self):
        data = np.array([1.0, 2.0, 2.0, 5.0, 7.5])
        m = sample_moments(data)
        c = data - data.mean()
        assert m.variance == pytest.approx(np.mean(c**2))
        assert m.skewness == pytest.approx(np.mean(c**3) / np.mean(c**2) ** 1.5)
        assert m.excess_kurtosis == pytest.approx(np.mean(c**4) / np.mean(c**2) ** 2 - 3)
