"""Tests for rate functions, exact tails, the change-of-measure bound and Monte Carlo tails."""

import math

import numpy as np
import pytest

from conc_lab.costs import CostSpec
from conc_lab.errors import EventEmpty, Infeasible, InvalidArgument, SupportTooLarge
from conc_lab.measures import make_measure, point_mass, uniform_measure
from conc_lab.rates import (
    RateMethod,
    best_constant,
    best_constant_tilts,
    default_thresholds,
    ds_lower_bound_check,
    empirical_mean_convergence,
    exact_mean,
    exact_tail,
    extrapolate_rate,
    max_statistic,
    mc_tail,
    project_floored_simplex,
    random_ds_configs,
    rate_curve,
    rate_function,
    rate_function_oracle,
    sample_statistics,
    sanov_battery,
    tail_estimate,
    wilson_interval,
)
from conc_lab.streams import StreamId

W1 = CostSpec.power(1.0)
# H((0.7, 0.3) | (0.5, 0.5))
RATE_AT_POINT_TWO = 0.7 * math.log(1.4) + 0.3 * math.log(0.6)


class TestRateFunction:
    def test_two_point_closed_form(self, two_point):
        assert RATE_AT_POINT_TWO == pytest.approx(0.08228, abs=1e-5)
        point = rate_function(two_point, W1, 0.2, stream=1)
        assert point.value == pytest.approx(RATE_AT_POINT_TWO, abs=1e-4)
        assert point.statistic >= 0.2 + 1e-9
        assert point.attained

    def test_oracle_two_point(self, two_point):
        point = rate_function(two_point, W1, 0.2, RateMethod.GRID_ORACLE)
        assert point.value == pytest.approx(RATE_AT_POINT_TWO, abs=1e-4)
        assert point.bound is not None

    def test_optimizer_against_oracle(self, three_point):
        cost = CostSpec.quadratic()
        oracle = rate_function_oracle(three_point, cost, 0.1)
        point = rate_function(three_point, cost, 0.1, stream=2)
        assert point.value <= oracle.value + 1e-3
        assert point.value >= oracle.value - oracle.bound

    def test_zero_threshold(self, two_point):
        point = rate_function(two_point, W1, 0.0)
        assert point.value == 0.0
        assert not point.attained

    def test_infeasible(self, two_point):
        assert max_statistic(two_point, W1) == pytest.approx(0.5)
        with pytest.raises(Infeasible):
            rate_function(two_point, W1, 0.5)

    def test_negative_threshold(self, two_point):
        with pytest.raises(InvalidArgument):
            rate_function(two_point, W1, -0.1)

    def test_oracle_support_limit(self):
        mu = uniform_measure(np.arange(5.0))
        with pytest.raises(SupportTooLarge):
            rate_function_oracle(mu, W1, 0.1)

    def test_floored_projection(self, gen):
        for _ in range(10):
            q = project_floored_simplex(gen.normal(size=4) * 3.0)
            assert q.sum() == pytest.approx(1.0)
            assert np.all(q >= 1e-12 - 1e-18)


class TestRateCurve:
    def test_nondecreasing_with_infeasible_tail(self, two_point):
        curve = rate_curve(two_point, W1, [0.3, 0.1, 0.2, 0.6], stream=4)
        np.testing.assert_allclose(curve.thresholds, [0.1, 0.2, 0.3, 0.6])
        finite = curve.rates[:3]
        assert np.all(np.diff(finite) >= 0)
        assert curve.rates[3] == math.inf
        assert curve.minimizers[3] is None

    def test_gap_to_oracle(self, two_point):
        curve = rate_curve(two_point, W1, [0.1, 0.2], stream=4, with_oracle=True)
        assert np.all(curve.gap_to_oracle <= 1e-4)

    def test_quadratic_rates_nondecreasing(self, three_point):
        curve = rate_curve(three_point, CostSpec.quadratic(), [0.9, 0.05, 0.4, 0.2, 0.6], stream=7)
        assert np.all(np.isfinite(curve.rates))
        assert curve.rates[0] > 0
        assert np.all(np.diff(curve.rates) >= 0)

    def test_default_thresholds(self, two_point):
        ts = default_thresholds(two_point, W1, count=5)
        assert ts[0] == pytest.approx(0.5e-3)
        assert ts[-1] == pytest.approx(0.475)


class TestBestConstant:
    def test_pinsker_for_symmetric_bernoulli(self, two_point):
        curve = rate_curve(two_point, W1, [0.05, 0.1, 0.2, 0.3], stream=5)
        C = best_constant(two_point, W1, curve)
        assert 0.45 <= C <= 0.5 + 1e-9

    def test_point_mass(self):
        assert best_constant(point_mass(0.0), W1) == 0.0

    def test_tilts_respect_pinsker(self, two_point):
        C = best_constant_tilts(two_point, W1, 50, 6)
        assert 0.0 < C <= 0.5 + 1e-9

    def test_tilts_agree_with_minimizer_family(self, two_point):
        certified = best_constant(two_point, W1, stream=5)
        tilts = best_constant_tilts(two_point, W1, 200, 6)
        assert tilts == pytest.approx(certified, rel=0.05)


class TestExactTail:
    def test_two_draws(self, two_point):
        (tail,) = exact_tail(two_point, W1, 2, [0.2])
        assert tail.probability == pytest.approx(0.5)
        assert tail.rate == pytest.approx(math.log(2.0) / 2)

    def test_empty_event(self, two_point):
        (tail,) = exact_tail(two_point, W1, 3, [0.6])
        assert tail.probability == 0.0
        assert tail.rate is None

    def test_exact_mean(self, two_point):
        assert exact_mean(two_point, W1, 2) == pytest.approx(0.25)

    def test_rates_approach_the_rate_function(self, two_point):
        rates = [exact_tail(two_point, W1, n, [0.2])[0].rate for n in (10, 20, 40, 80)]
        assert rates[0] == pytest.approx(0.2213, abs=1e-3)
        assert rates[1] == pytest.approx(0.1592, abs=1e-3)
        assert np.all(np.diff(rates) < 0)
        assert min(rates) >= RATE_AT_POINT_TWO - 1e-9
        assert rates[-1] <= 1.4 * RATE_AT_POINT_TWO

    def test_closed_event_keeps_the_lattice_point(self, two_point):
        (open_tail,) = exact_tail(two_point, W1, 10, [0.1])
        (closed_tail,) = exact_tail(two_point, W1, 10, [0.1], closed=True)
        assert open_tail.probability == pytest.approx(352 / 1024)
        assert closed_tail.probability == pytest.approx(772 / 1024)

    def test_extrapolation_recovers_synthetic_rate(self):
        n = np.array([10.0, 20.0, 40.0, 80.0])
        rates = 0.1 + np.log(n) / (2 * n) + 0.3 / n + 2.0 / n**2
        r_inf, c = extrapolate_rate(n, rates)
        assert r_inf == pytest.approx(0.1)
        assert c == pytest.approx(0.3)

    def test_extrapolation_with_three_sizes(self):
        n = np.array([10.0, 20.0, 40.0])
        r_inf, c = extrapolate_rate(n, 0.2 + np.log(n) / (2 * n) - 0.5 / n)
        assert r_inf == pytest.approx(0.2)
        assert c == pytest.approx(-0.5)
        with pytest.raises(InvalidArgument):
            extrapolate_rate([10.0], [0.3])

    def test_extrapolated_two_point_rate(self, two_point):
        # lattice-aligned level, closed tails: the n^-2 term absorbs the small-n bias
        n = [10, 20, 40, 80]
        rates = [exact_tail(two_point, W1, k, [0.1], closed=True)[0].rate for k in n]
        r_inf, _ = extrapolate_rate(n, rates)
        exact = 0.6 * math.log(1.2) + 0.4 * math.log(0.8)
        assert r_inf == pytest.approx(exact, rel=0.25)


class TestChangeOfMeasureBound:
    def test_nu_equal_mu(self, two_point):
        check = ds_lower_bound_check(two_point, two_point, 6, 0.2, W1)
        assert check.entropy == 0.0
        assert check.slack == pytest.approx(1.0 / (6 * math.e * check.mu_event))
        assert check.passed

    def test_tilted_nu(self, three_point):
        nu = three_point.with_weights([0.1, 0.3, 0.6])
        check = ds_lower_bound_check(three_point, nu, 5, 0.3, CostSpec.quadratic())
        assert check.entropy > 0
        assert check.passed

    def test_nu_outside_support(self, two_point):
        with pytest.raises(InvalidArgument):
            ds_lower_bound_check(two_point, point_mass(3.0), 3, 0.1, W1)

    def test_event_empty(self, three_point):
        # nu^n only produces the point mass at 1, whose distance to mu is 2/3
        nu = three_point.with_weights([0.0, 1.0, 0.0])
        with pytest.raises(EventEmpty):
            ds_lower_bound_check(three_point, nu, 3, 0.8, W1)

    def test_event_without_mu_mass(self):
        # nu sits on an atom mu gives weight zero, so only nu charges the event
        mu = make_measure([0.0, 1.0, 2.0], [0.5, 0.5, 0.0])
        nu = mu.with_weights([0.0, 0.0, 1.0])
        with pytest.raises(EventEmpty, match=r"mu\^n"):
            ds_lower_bound_check(mu, nu, 2, 1.0, W1)

    def test_battery(self):
        report = sanov_battery(count=20, stream=1, max_n=5)
        assert len(report.checks) == 20
        assert report.passed
        assert report.failures == 0
        assert report.worst_slack >= -1e-12

    def test_configs_are_deterministic(self):
        a = random_ds_configs(5, 11)
        b = random_ds_configs(5, 11)
        assert [c["n"] for c in a] == [c["n"] for c in b]
        assert [c["t"] for c in a] == [c["t"] for c in b]
        assert all(1 <= c["n"] <= 8 for c in a)


class TestMonteCarlo:
    def test_wilson(self):
        low, high = wilson_interval(0, 10)
        assert low == pytest.approx(0.0, abs=1e-12)
        assert 0.0 < high < 0.4
        assert wilson_interval(5, 0) == (0.0, 1.0)

    def test_censored_estimate(self):
        estimate = tail_estimate(10, 0.3, 0, 1000)
        assert estimate.censored
        assert estimate.rate_hat == pytest.approx(math.log(1000) / 10)

    def test_mc_tail_against_exact(self, two_point):
        exact = exact_tail(two_point, W1, 10, [0.2])[0].probability
        assert exact == pytest.approx(112 / 1024)
        (estimate,), median, mean = mc_tail(two_point, W1, 10, [0.2], 20_000, 8)
        assert abs(estimate.p_hat - exact) <= 5 * math.sqrt(exact * (1 - exact) / 20_000)
        assert estimate.hits == round(estimate.p_hat * 20_000)
        assert 0.0 <= median <= 0.5

    def test_tails_nonincreasing_in_n(self, two_point):
        n_list = [10, 20, 40, 80]
        exact = [exact_tail(two_point, W1, n, [0.15])[0].probability for n in n_list]
        assert np.all(np.diff(exact) < 0)
        estimates = [mc_tail(two_point, W1, n, [0.15], 4000, 30 + i)[0][0] for i, n in enumerate(n_list)]
        for smaller, larger in zip(estimates, estimates[1:]):
            assert larger.ci_low <= smaller.ci_high
            assert larger.p_hat <= smaller.p_hat

    def test_mc_tail_needs_trials(self, two_point):
        with pytest.raises(InvalidArgument):
            mc_tail(two_point, W1, 10, [0.2], 0, 8)

    def test_sample_statistics_deterministic(self, three_point):
        a = sample_statistics(three_point, W1, 7, 2500, StreamId(3), block=1000)
        b = sample_statistics(three_point, W1, 7, 2500, StreamId(3), block=1000)
        assert a.shape == (2500,)
        np.testing.assert_array_equal(a, b)

    def test_mean_convergence(self, two_point):
        rows = empirical_mean_convergence(two_point, W1, [4, 16, 64], 4000, 9)
        assert [row.n for row in rows] == [4, 16, 64]
        for row in rows:
            assert row.exact is not None
            assert abs(row.mean - row.exact) <= 5 * row.std_error + 1e-12
        assert rows[0].exact > rows[1].exact > rows[2].exact
