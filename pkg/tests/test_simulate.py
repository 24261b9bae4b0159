"""Simulator tests: path algorithm, ensembles, AR(1) oracle, tail bands."""

import datetime as dt
import math
import time

import numpy as np
import pytest
from scipy.stats import kstest, ks_2samp, norm

from autocopula.copula import (
    RectPartition,
    build_joint_cdf,
    build_partition,
    copula_eval,
    default_target_per_rect,
)
from autocopula.nig import NigParams
from autocopula.seasonal import MonthlyDeltaSeries, NuArModel
from autocopula.simulate import (
    Ar1Spec,
    FrozenDeltaMarginals,
    SimulationConfig,
    SimulationEnsemble,
    ar1_gaussian_copula_oracle,
    read_ensemble_binary,
    simulate_ensemble,
    simulate_path,
    tail_dependence_bands,
    write_ensemble_binary,
    _simulate_v_chain,
)
from autocopula.streams import path_stream

INDEPENDENCE = build_joint_cdf(
    RectPartition(rectangles=((0.0, 1.0, 0.0, 1.0, 1000),), total_count=1000))

STD = NigParams(mu=0.0, alpha=1.5, beta=0.2, delta=1.0)


class ConstantMarginal:
    """Degenerate test double: every quantile is the same constant."""

    def __init__(self, c):
        self.c = c

    def cdf(self, x):
        return np.full_like(np.asarray(x, dtype=float), 0.5)

    def inv_cdf(self, q):
        return np.full_like(np.asarray(q, dtype=float), self.c)


def lag1_autocorr(x):
    c = x - x.mean()
    return float(np.dot(c[:-1], c[1:]) / np.dot(c, c))


def gaussian_copula_fit(rho, n, seed, target=None):
    rng = np.random.default_rng(seed)
    z1 = rng.standard_normal(n)
    z2 = rho * z1 + math.sqrt(1 - rho**2) * rng.standard_normal(n)
    pairs = np.column_stack([norm.cdf(z1), norm.cdf(z2)])
    return build_joint_cdf(build_partition(pairs, target or default_target_per_rect(n)))


class TestAr1Oracle:
    @pytest.mark.parametrize("alpha", [0.0, 0.4, 0.8])
    def test_framework_matches_direct(self, alpha):
        spec = Ar1Spec(alpha_ar=alpha, beta_ar=0.5, sigma_ar=1.0)
        n = 100_000
        direct, frame = ar1_gaussian_copula_oracle(spec, n, seed=5)
        ac_d, ac_f = lag1_autocorr(direct), lag1_autocorr(frame)
        assert abs(ac_d - alpha) <= 0.02
        assert abs(ac_f - alpha) <= 0.02
        assert abs(ac_d - ac_f) <= 0.02
        mean, var = spec.stationary_mean(), spec.stationary_var()
        se_mean = math.sqrt(var) * math.sqrt((1 + alpha) / (1 - alpha)) / math.sqrt(n)
        se_var = var * math.sqrt(2.0 * (1 + alpha**2) / (n * (1 - alpha**2)))
        assert abs(frame.mean() - mean) <= 3 * se_mean
        assert abs(frame.var() - var) <= 3 * se_var

    def test_alpha_zero_is_iid_ks(self):
        spec = Ar1Spec(alpha_ar=0.0, beta_ar=0.2, sigma_ar=0.7)
        direct, frame = ar1_gaussian_copula_oracle(spec, 100_000, seed=6)
        assert ks_2samp(direct, frame).pvalue > 0.01

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            Ar1Spec(alpha_ar=1.0, beta_ar=0.0, sigma_ar=1.0)
        with pytest.raises(ValueError):
            Ar1Spec(alpha_ar=0.5, beta_ar=0.0, sigma_ar=0.0)


class TestSimulatePath:
    def test_independence_gives_iid_marginal_draws(self):
        dates = [dt.date(2020, 1, 1) + dt.timedelta(days=i) for i in range(100_000)]
        x = simulate_path(INDEPENDENCE, lambda d: STD, dates, x0=0.0,
                          rng=path_stream(1, 0))
        assert abs(lag1_autocorr(x)) <= 0.01

    def test_pooled_pit_uniform_under_independence(self):
        v = _simulate_v_chain(INDEPENDENCE, 0.5, 50_000, path_stream(2, 0),
                              "cumulative")
        assert kstest(v[1:], "uniform").pvalue > 0.01

    def test_deterministic_given_stream(self):
        cop = gaussian_copula_fit(0.5, 4000, seed=3)
        dates = [dt.date(2021, 1, 1) + dt.timedelta(days=i) for i in range(500)]
        a = simulate_path(cop, lambda d: STD, dates, 0.1, path_stream(9, 4))
        b = simulate_path(cop, lambda d: STD, dates, 0.1, path_stream(9, 4))
        np.testing.assert_array_equal(a, b)

    def test_x0_is_respected(self):
        dates = [dt.date(2021, 1, 1) + dt.timedelta(days=i) for i in range(10)]
        x = simulate_path(INDEPENDENCE, lambda d: STD, dates, x0=3.25,
                          rng=path_stream(0, 0))
        assert x[0] == 3.25


class TestSelfConsistency:
    def test_partial_conditioning_reproduces_copula(self):
        gen = gaussian_copula_fit(0.6, 20_000, seed=30)
        v = _simulate_v_chain(gen, 0.5, 100_000, path_stream(7, 0), "partial")
        re_cop = build_joint_cdf(build_partition(
            np.column_stack([v[:-1], v[1:]]), default_target_per_rect(100_000)))
        g = np.linspace(0, 1, 21)
        u1, u2 = np.meshgrid(g, g)
        dev = np.abs(copula_eval(re_cop, u1.ravel(), u2.ravel())
                     - copula_eval(gen, u1.ravel(), u2.ravel()))
        assert dev.max() <= 0.03

    def test_cumulative_conditioning_diagnostic(self):
        # the as-written kernel biases the stationary copula; report, don't assert
        gen = gaussian_copula_fit(0.6, 20_000, seed=30)
        v = _simulate_v_chain(gen, 0.5, 50_000, path_stream(8, 0), "cumulative")
        re_cop = build_joint_cdf(build_partition(
            np.column_stack([v[:-1], v[1:]]), default_target_per_rect(50_000)))
        g = np.linspace(0, 1, 21)
        u1, u2 = np.meshgrid(g, g)
        dev = np.abs(copula_eval(re_cop, u1.ravel(), u2.ravel())
                     - copula_eval(gen, u1.ravel(), u2.ravel()))
        print(f"cumulative-conditioning copula deviation: {dev.max():.4f}")
        assert dev.max() < 0.2  # loose sanity bound only


def make_monthly(deltas, start=(2020, 1)):
    y0, m0 = start
    return MonthlyDeltaSeries(entries=tuple(
        ((y0 * 12 + m0 - 1 + j) // 12, (y0 * 12 + m0 - 1 + j) % 12 + 1, d)
        for j, d in enumerate(deltas)))


class TestSimulateEnsemble:
    def test_single_path_percentiles_are_order_statistics(self):
        cfg = SimulationConfig(horizon=90, path_count=1, seed=12,
                               start=dt.date(2022, 1, 1))
        ens = simulate_ensemble(cfg, INDEPENDENCE, lambda d: STD)
        month_cols = {}
        for j, d in enumerate(ens.dates):
            month_cols.setdefault(f"{d.year:04d}-{d.month:02d}", []).append(j)
        for key, level, value in ens.monthly_percentiles:
            want = np.percentile(ens.paths[0, month_cols[key]], level)
            assert value == pytest.approx(want, rel=1e-12)

    def test_constant_marginal_degenerate(self):
        cfg = SimulationConfig(horizon=60, path_count=5, seed=1,
                               start=dt.date(2022, 1, 1))
        ens = simulate_ensemble(cfg, INDEPENDENCE, lambda d: ConstantMarginal(7.5))
        assert np.all(ens.paths == 7.5)
        assert all(v == 7.5 for _, _, v in ens.monthly_percentiles)

    def test_reproducible_bit_identical(self):
        cop = gaussian_copula_fit(0.4, 4000, seed=14)
        monthly = make_monthly([1.0, 2.0, 1.5, 0.7, 1.1, 0.9] * 8)
        marg = FrozenDeltaMarginals(STD, monthly)
        cfg = SimulationConfig(horizon=120, path_count=8, seed=99,
                               start=dt.date(2020, 3, 1))
        a = simulate_ensemble(cfg, cop, marg)
        b = simulate_ensemble(cfg, cop, marg)
        np.testing.assert_array_equal(a.paths, b.paths)
        assert a.monthly_percentiles == b.monthly_percentiles

    def test_percentiles_nondecreasing_in_level(self):
        cop = gaussian_copula_fit(0.4, 4000, seed=15)
        cfg = SimulationConfig(horizon=200, path_count=10, seed=4,
                               start=dt.date(2021, 6, 1))
        ens = simulate_ensemble(cfg, cop, lambda d: STD)
        by_month = {}
        for key, level, value in ens.monthly_percentiles:
            by_month.setdefault(key, []).append(value)
        for vals in by_month.values():
            assert np.all(np.diff(vals) >= 0)

    def test_sampled_delta_mode(self):
        cop = gaussian_copula_fit(0.4, 4000, seed=16)
        monthly = make_monthly([1.0, 2.0, 1.5, 0.7, 1.1, 0.9] * 8, start=(2019, 1))
        marg = FrozenDeltaMarginals(STD, monthly)
        model = NuArModel(a=0.5, b_coeffs=(0.6,) + (0.0,) * 8,
                          sigma_coeffs=(0.05**2,) + (0.0,) * 8, sigma_floor=1e-6)
        cfg = SimulationConfig(horizon=90, path_count=4, seed=7,
                               start=dt.date(2023, 1, 1), delta_mode="sampled")
        a = simulate_ensemble(cfg, cop, marg, delta_model=model,
                              monthly_delta=monthly)
        b = simulate_ensemble(cfg, cop, marg, delta_model=model,
                              monthly_delta=monthly)
        np.testing.assert_array_equal(a.paths, b.paths)
        # paths see different deltas, so they are genuinely distinct
        assert not np.allclose(a.paths[0], a.paths[1])

    def test_sampled_mode_requires_models(self):
        cfg = SimulationConfig(horizon=10, path_count=2, seed=0,
                               start=dt.date(2023, 1, 1), delta_mode="sampled")
        with pytest.raises(ValueError, match="sampled"):
            simulate_ensemble(cfg, INDEPENDENCE, lambda d: STD)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SimulationConfig(horizon=0, path_count=1, seed=0,
                             start=dt.date(2020, 1, 1))
        with pytest.raises(ValueError):
            SimulationConfig(horizon=1, path_count=1, seed=0,
                             start=dt.date(2020, 1, 1), conditioning="bogus")


class TestTailBands:
    def test_identical_paths_zero_width(self):
        dates = tuple(dt.date(2020, 1, 1) + dt.timedelta(days=i) for i in range(400))
        rng = np.random.default_rng(17)
        one = rng.normal(0, 1, 400)
        ens = SimulationEnsemble(dates=dates, paths=np.tile(one, (25, 1)),
                                 levels=(50.0,), monthly_percentiles=())
        bands = tail_dependence_bands(ens, lambda d: STD, np.linspace(0.1, 0.9, 9))
        np.testing.assert_allclose(bands.lower_lo, bands.lower_hi, atol=1e-15)
        np.testing.assert_allclose(bands.upper_lo, bands.upper_hi, atol=1e-15)

    def test_independence_bands_bracket_closed_forms(self):
        cfg = SimulationConfig(horizon=1500, path_count=40, seed=21,
                               start=dt.date(2020, 1, 1))
        ens = simulate_ensemble(cfg, INDEPENDENCE, lambda d: STD)
        grid = np.linspace(0.1, 0.9, 17)
        bands = tail_dependence_bands(ens, lambda d: STD, grid)
        lower_ok = (bands.lower_lo <= grid) & (grid <= bands.lower_hi)
        upper_ok = (bands.upper_lo <= 1 - grid) & (1 - grid <= bands.upper_hi)
        assert lower_ok.mean() >= 0.9
        assert upper_ok.mean() >= 0.9

    def test_min_paths_enforced(self):
        dates = tuple(dt.date(2020, 1, 1) + dt.timedelta(days=i) for i in range(50))
        ens = SimulationEnsemble(dates=dates, paths=np.zeros((3, 50)),
                                 levels=(50.0,), monthly_percentiles=())
        with pytest.raises(ValueError, match="paths"):
            tail_dependence_bands(ens, lambda d: STD, np.array([0.5]))


class TestEnsembleBinary:
    def test_round_trip(self, tmp_path):
        cfg = SimulationConfig(horizon=45, path_count=3, seed=2,
                               start=dt.date(2022, 5, 1))
        ens = simulate_ensemble(cfg, INDEPENDENCE, lambda d: STD)
        f = tmp_path / "ens.bin"
        write_ensemble_binary(ens, f, "# provenance test")
        dates, paths, prov = read_ensemble_binary(f)
        assert dates == ens.dates
        assert prov == "# provenance test"
        np.testing.assert_array_equal(paths, ens.paths)

    def test_rejects_foreign_file(self, tmp_path):
        f = tmp_path / "bogus.bin"
        f.write_bytes(b"NOPE" + b"\x00" * 40)
        with pytest.raises(ValueError, match="ensemble"):
            read_ensemble_binary(f)


def test_desk_scale_benchmark_700_paths_12_years():
    cop = gaussian_copula_fit(0.5, 20_000, seed=22)
    monthly = make_monthly([1.0, 1.8, 2.5, 1.9, 1.2, 0.8, 0.6, 0.7, 0.9,
                            1.3, 1.7, 1.1] * 4, start=(2000, 1))
    marg = FrozenDeltaMarginals(STD, monthly)
    cfg = SimulationConfig(horizon=12 * 365, path_count=700, seed=1234,
                           start=dt.date(2020, 1, 1))
    t0 = time.monotonic()
    ens = simulate_ensemble(cfg, cop, marg)
    elapsed = time.monotonic() - t0
    assert ens.paths.shape == (700, 4380)
    assert np.all(np.isfinite(ens.paths))
    assert elapsed < 600.0
