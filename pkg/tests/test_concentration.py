"""Tests for concentration profiles, Marton bounds and the equivalence experiments."""

import math

import numpy as np
import pytest

from conc_lab.bootstrap import reset_settings
from conc_lab.costs import CostSpec
from conc_lab.errors import ConfigInvalid, InvalidArgument, SizeCapExceeded
from conc_lab.concentration import (
    Enlargement,
    SetFamily,
    equivalence_experiment,
    exact_product_concentration,
    fit_concentration_rate,
    lipschitz_battery,
    marton_profile,
    mc_concentration_profile,
    product_distances,
    profile_bound,
    random_half_sets,
    subgradient_battery,
    sublevel_sets,
    transport_functional,
    two_level_experiment,
)
from conc_lab.measures import ProductSpec, make_measure, point_mass
from conc_lab.models import EquivalenceConfig, ProfileConstants


class TestMartonProfile:
    def test_constants(self):
        constants = marton_profile(2.0)
        assert constants.a == pytest.approx(0.5)
        assert constants.b == 1.0
        assert constants.r0 == pytest.approx(1.17741, abs=1e-5)

    def test_positive_constant(self):
        with pytest.raises(InvalidArgument):
            marton_profile(0.0)

    def test_profile_bound(self):
        r0 = math.sqrt(2 * math.log(2.0))
        bound = profile_bound([0.0, r0, r0 + 1.0, 50.0], 0.5, 1.0, r0)
        np.testing.assert_allclose(bound, [0.0, 0.0, 1.0 - math.exp(-0.5), 1.0])


class TestProductDistances:
    def test_rho2(self, two_point):
        table, weights, D = product_distances(two_point, 2, Enlargement.RHO2)
        assert table.shape == (4, 2)
        assert weights.sum() == pytest.approx(1.0)
        np.testing.assert_allclose(np.diag(D), 0.0)
        np.testing.assert_allclose(D, D.T)
        far = [i for i, row in enumerate(table) if tuple(row) == (1, 1)][0]
        near = [i for i, row in enumerate(table) if tuple(row) == (0, 0)][0]
        assert D[near, far] == pytest.approx(math.sqrt(2.0))

    def test_hamming(self, two_point):
        table, _, D = product_distances(two_point, 3, Enlargement.RHO_P, p=1.0)
        hamming = (table[:, None, :] != table[None, :, :]).sum(axis=2)
        np.testing.assert_allclose(D, hamming)

    def test_minkowski(self, two_point):
        _, _, D = product_distances(two_point, 1, Enlargement.MINKOWSKI, p=1.0)
        expected = ((math.sqrt(5.0) - 1.0) / 2.0) ** 2
        np.testing.assert_allclose(D, [[0.0, expected], [expected, 0.0]], atol=1e-9)

    def test_cost_cap(self, two_point, monkeypatch):
        monkeypatch.setenv("CONC_LAB_COST_CAP", "10")
        reset_settings()
        with pytest.raises(SizeCapExceeded):
            product_distances(two_point, 2, Enlargement.RHO2)


class TestSetFamilies:
    def test_random_half_sets_are_minimal(self, gen):
        weights = np.full(16, 1 / 16)
        masks = random_half_sets(weights, 20, gen)
        assert masks.shape == (20, 16)
        np.testing.assert_allclose(masks.sum(axis=1), 8)

    def test_transport_functional(self, two_point):
        table, _ = ProductSpec(two_point, 2).materialize()
        F = transport_functional(two_point, table)
        for row, value in zip(table, F):
            expected = 0.0 if row[0] != row[1] else math.sqrt(0.5)
            assert value == pytest.approx(expected)

    def test_sublevel_sets_reach_their_levels(self, three_point):
        table, weights = ProductSpec(three_point, 3).materialize()
        masks = sublevel_sets(three_point, table, weights)
        assert masks.shape[0] == 5
        masses = np.array([weights[m].sum() for m in masks])
        assert np.all(masses >= np.array([0.5, 0.6, 0.7, 0.8, 0.9]) - 1e-12)
        assert np.all(np.diff(masses) >= 0)


class TestExactConcentration:
    def test_marton_bound_on_hamming_cube(self, two_point):
        n = 6
        # W_1 constant 1/2 on {0, 1} tensorizes to n / 2 on the l1 product metric
        constants = marton_profile(n * 0.5)
        r = np.arange(0.0, 7.0)
        profile = exact_product_concentration(
            two_point, n, Enlargement.RHO_P, SetFamily.RANDOM_HALF, r,
            constants=constants, count=200, stream=1, p=1.0,
        )
        assert profile.method == "exact"
        assert profile.sets_tested == 200
        assert profile.passed
        assert profile.observed[0] >= 0.5 - 1e-12
        assert np.all(np.diff(profile.observed) >= 0)
        assert profile.observed[-1] == pytest.approx(1.0)

    def test_without_constants_nothing_is_guaranteed(self, two_point):
        profile = exact_product_concentration(
            two_point, 3, Enlargement.SG, SetFamily.SUBLEVEL_FN, [0.0, 1.0], count=10
        )
        assert profile.guaranteed == [0.0, 0.0]
        assert profile.passed

    def test_violation_detected(self, two_point):
        # a profile claiming full mass immediately cannot hold
        constants = ProfileConstants(a=100.0, b=1.0, r0=0.0, exponent=2.0)
        profile = exact_product_concentration(
            two_point, 3, Enlargement.RHO2, SetFamily.RANDOM_HALF, [0.5],
            constants=constants, count=5, stream=2,
        )
        assert not profile.passed
        assert profile.violations == 5


class TestFitConcentrationRate:
    def test_recovers_synthetic_profile(self):
        r = np.linspace(0.0, 3.0, 13)
        tail = 1.5 * np.exp(-0.8 * r**2)
        fitted = fit_concentration_rate(r, tail, np.full(r.size, 1000))
        assert fitted.a == pytest.approx(0.8, rel=1e-6)
        assert fitted.b == pytest.approx(1.5, rel=1e-6)
        assert fitted.r0 == 0.0

    def test_too_few_points(self):
        assert fit_concentration_rate([0.0, 1.0], [0.5, 0.0], [10, 0]) is None


class TestMonteCarloProfile:
    def test_profile_shape(self, two_point):
        W1 = CostSpec.power(1.0)
        profile = mc_concentration_profile(two_point, 20, W1, [0.0, 0.5, 1.0, 1.5], 5000, 3)
        assert profile.method == "monte_carlo"
        assert profile.passed
        assert len(profile.tails) == 4
        assert np.all(np.diff(profile.observed) >= 0)
        assert all(lo <= hi for lo, hi in zip(profile.ci_low, profile.ci_high))

    @pytest.mark.parametrize("trials", [0, 999])
    def test_needs_a_thousand_trials(self, two_point, trials):
        with pytest.raises(ConfigInvalid):
            mc_concentration_profile(two_point, 20, CostSpec.power(1.0), [0.0], trials, 3)

    def test_invariant_under_isometry(self):
        W1 = CostSpec.power(1.0)
        mu = make_measure([0.0, 1.0, 3.0], [0.2, 0.5, 0.3])
        # x -> 5 - x keeps the atom order, so the same stream draws the same types
        mirrored = make_measure([5.0, 4.0, 2.0], [0.2, 0.5, 0.3])
        r_list = [0.0, 0.5, 1.0, 2.0]
        a = mc_concentration_profile(mu, 15, W1, r_list, 2000, 21)
        b = mc_concentration_profile(mirrored, 15, W1, r_list, 2000, 21)
        assert a.median == pytest.approx(b.median, abs=1e-12)
        assert [e.hits for e in a.tails] == [e.hits for e in b.tails]
        np.testing.assert_allclose(a.observed, b.observed, atol=1e-12)


class TestBatteries:
    def test_lipschitz(self):
        report = lipschitz_battery(24, 1, n_list=(2, 5), d_list=(1, 2), atoms=10)
        assert report.pairs == 24
        assert report.worst_ratio <= 1.0 + 1e-9
        assert report.worst_convexity_excess <= 1e-12
        assert report.passed

    def test_lipschitz_atom_count(self):
        with pytest.raises(InvalidArgument):
            lipschitz_battery(4, 1, n_list=(3,), atoms=10)

    def test_subgradient(self):
        report = subgradient_battery(12, 2, n_list=(2, 5), atoms=10)
        assert report.points == 12
        assert report.passed


class TestEquivalence:
    def test_point_mass_is_trivial(self):
        report = equivalence_experiment(point_mass(0.0), "both")
        assert report.transport_constant == 0.0
        assert report.concentration_constant == 0.0
        assert report.passed

    def test_unknown_direction(self, two_point):
        with pytest.raises(InvalidArgument):
            equivalence_experiment(two_point, "sideways")

    def test_config_grid(self):
        config = EquivalenceConfig(r_min=0.0, r_max=1.0, r_step=0.25)
        np.testing.assert_allclose(config.r_grid(), [0.0, 0.25, 0.5, 0.75, 1.0])

    def test_two_level_exponent_range(self, two_point):
        with pytest.raises(InvalidArgument):
            two_level_experiment(two_point, 2.5, 10, [0.0], 100)
