import math

import numpy as np
import pytest
from scipy import integrate, stats

from odtmarket.rate_analysis import (
    NoSignChange, RateParams, crossover, crossover_gap, mc_rate_oracle, nearest_neighbor_pdf, p_ignore,
    p_overtime_derived, p_overtime_paper, p_overtime_quadrature, q_function, request_times, tradeoff_table,
)
from odtmarket.rate_analysis import _nearest_distances


class TestGaussianTail:
    def test_values(self):
        assert q_function(0.0) == 0.5
        assert q_function(-8.0) == pytest.approx(1.0, abs=1e-14)
        assert q_function(1.96) == pytest.approx(0.0249979, abs=1e-7)

    def test_against_quadrature(self):
        tail, _ = integrate.quad(lambda t: math.exp(-t * t / 2) / math.sqrt(2 * math.pi), 1.3, np.inf)
        assert q_function(1.3) == pytest.approx(tail, rel=1e-10)


class TestNearestNeighbour:
    @pytest.mark.parametrize("zeta", [0.3, 1.0, 4.0])
    def test_density_integrates_to_one(self, zeta):
        total, _ = integrate.quad(lambda z: nearest_neighbor_pdf(zeta, z), 0, np.inf)
        assert total == pytest.approx(1.0, abs=1e-10)

    def test_negative_distance_rejected(self):
        with pytest.raises(ValueError):
            nearest_neighbor_pdf(1.0, -0.1)

    def test_sampled_median(self):
        zeta = 2.0
        z = _nearest_distances(zeta, 200_000, np.random.default_rng(0))
        assert np.median(z) == pytest.approx(math.sqrt(math.log(2) / (math.pi * zeta)), rel=1e-2)
        cdf = lambda x: 1 - np.exp(-math.pi * zeta * np.asarray(x) ** 2)
        assert stats.kstest(z[:50_000], cdf).pvalue > 0.01


class TestIgnore:
    def test_limits(self):
        assert p_ignore(RateParams(1e-9, 1.0, 1.0)) == pytest.approx(0.0, abs=1e-8)
        assert p_ignore(RateParams(1e6, 1.0, 1.0)) == pytest.approx(1.0, abs=1e-5)
        # 1 - (1 - e^-1) = e^-1
        assert p_ignore(RateParams(1.0, 1.0, 1.0)) == pytest.approx(math.exp(-1))

    def test_increasing_in_interval(self):
        vals = [p_ignore(RateParams(T, 0.1, 1.0)) for T in np.linspace(0.1, 100, 200)]
        assert np.all(np.diff(vals) > 0)

    @pytest.mark.parametrize("lam_T", [0.25, 4.0])
    def test_monte_carlo(self, lam_T):
        params = RateParams(lam_T / 0.1, 0.1, 1.0)
        ign, _ = mc_rate_oracle(params, 200_000, np.random.default_rng(1))
        assert ign.covers(p_ignore(params))


class TestOvertime:
    def test_limits(self):
        assert p_overtime_derived(RateParams(1e-9, 0.1, 1.0)) == pytest.approx(1.0, abs=1e-9)
        big = RateParams(1e4, 0.1, 1.0)
        assert p_overtime_derived(big) == pytest.approx(0.5 / (big.reach_km * math.sqrt(big.zeta)), rel=1e-9)

    def test_series_branch_is_continuous(self):
        zeta = 1.0
        # reach where the argument equals the series switch point
        d = 1e-6 / math.sqrt(2 * math.pi * zeta)
        T = d / (20.0 / 60.0)
        below, above = RateParams(T * 0.999, 0.1, zeta), RateParams(T * 1.001, 0.1, zeta)
        assert p_overtime_derived(below) == pytest.approx(p_overtime_derived(above), abs=1e-10)

    @pytest.mark.parametrize("T", np.linspace(0.5, 30, 10))
    def test_derived_matches_quadrature(self, T):
        params = RateParams(float(T), 0.1, 1.0)
        assert p_overtime_derived(params) == pytest.approx(p_overtime_quadrature(params), abs=1e-10)

    def test_decreasing_in_interval(self):
        vals = [p_overtime_derived(RateParams(T, 0.1, 1.0)) for T in np.linspace(0.1, 100, 200)]
        assert np.all(np.diff(vals) < 0)

    def test_printed_form_can_leave_unit_interval(self):
        assert p_overtime_paper(RateParams(2.0, 0.1, 1.0)) < 0

    @pytest.mark.parametrize("zeta", [0.5, 2.0])
    def test_monte_carlo(self, zeta):
        params = RateParams(3.0, 0.1, zeta)
        _, ovt = mc_rate_oracle(params, 200_000, np.random.default_rng(2))
        assert ovt.covers(p_overtime_derived(params))

    def test_minimum_samples(self):
        with pytest.raises(ValueError):
            mc_rate_oracle(RateParams(1.0, 0.1, 1.0), 100, np.random.default_rng(0))


class TestCrossover:
    def test_root(self):
        base = RateParams(1.0, 0.1, 1.0)
        t = crossover(base)
        assert abs(crossover_gap(base, t)) < 1e-6
        assert crossover_gap(base, t / 2) < 0 < crossover_gap(base, 2 * t)

    def test_no_sign_change(self):
        with pytest.raises(NoSignChange):
            crossover(RateParams(1.0, 0.1, 1.0), bracket=(100, 200))
        with pytest.raises(NoSignChange):
            crossover(RateParams(1.0, 0.1, 1.0), bracket=(5, 1))

    @pytest.mark.parametrize("lam, zeta", [(0.1, 1.0), (0.05, 0.5), (0.2, 3.0)])
    def test_monotone_in_rates(self, lam, zeta):
        base = crossover(RateParams(1.0, lam, zeta))
        assert crossover(RateParams(1.0, 2 * lam, zeta)) < base
        assert crossover(RateParams(1.0, lam, 2 * zeta)) < base


def test_params_validation():
    for bad in (dict(T=0), dict(lam=-1), dict(zeta=float("nan"))):
        kw = dict(T=1.0, lam=0.1, zeta=1.0) | bad
        with pytest.raises(ValueError):
            RateParams(**kw)


def test_request_phase_is_uniform():
    params = RateParams(7.0, 0.1, 1.0, kappa=2.0)
    times = request_times(params, 20_000.0, np.random.default_rng(5))
    phase = np.mod(times, params.T) / params.T
    assert stats.kstest(phase, "uniform").pvalue > 0.01


def test_tradeoff_table_rows():
    rows = tradeoff_table(0.1, 1.0, 20.0, 1.0, 10.0, 4, mc_samples=10_000, rng=np.random.default_rng(0))
    assert [r["T"] for r in rows] == [1.0, 4.0, 7.0, 10.0]
    assert set(rows[0]) >= {"p_ignore", "p_overtime_derived", "p_overtime_paper", "mc_ignore", "mc_overtime"}
    with pytest.raises(ValueError):
        tradeoff_table(0.1, 1.0, 20.0, 1.0, 10.0, 1)
