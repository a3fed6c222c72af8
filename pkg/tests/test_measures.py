"""Tests for discrete measures, products, types and random streams."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conc_lab.bootstrap import reset_settings
from conc_lab.errors import (
    DimensionMismatch,
    EmptySupport,
    EnumerationCapExceeded,
    GridTooLarge,
    InvalidArgument,
    InvalidPoints,
    NegativeWeight,
    WeightSumMismatch,
)
from conc_lab.measures import (
    ProductSpec,
    align_weights,
    compositions,
    discretize_gaussian,
    empirical,
    enumerate_types,
    make_measure,
    omega,
    point_mass,
    product_measure,
    pushforward_omega,
    sample_counts,
    sample_empirical,
    sample_indices,
    tilt,
    translate,
    type_log_probabilities,
    uniform_measure,
)
from conc_lab.streams import StreamId, as_stream


# --- make_measure ---

class TestMakeMeasure:
    def test_scalar_points_become_column(self):
        mu = make_measure([0.0, 1.0], [0.5, 0.5])
        assert mu.points.shape == (2, 1)
        assert mu.dim == 1
        assert mu.size == 2

    def test_multidimensional_points(self):
        mu = make_measure([[0.0, 0.0], [1.0, 2.0], [3.0, 1.0]], [0.2, 0.3, 0.5])
        assert mu.dim == 2
        np.testing.assert_allclose(mu.mean(), [1.8, 1.1])

    def test_duplicates_merge_in_first_occurrence_order(self):
        mu = make_measure([1.0, 0.0, 1.0], [0.25, 0.5, 0.25])
        np.testing.assert_array_equal(mu.points[:, 0], [1.0, 0.0])
        np.testing.assert_allclose(mu.weights, [0.5, 0.5])

    def test_signed_zero_merges(self):
        mu = make_measure([0.0, -0.0], [0.5, 0.5])
        assert mu.size == 1
        assert mu.weights[0] == 1.0

    def test_zero_weights_keep_support(self):
        mu = make_measure([0.0, 1.0, 2.0], [0.5, 0.0, 0.5])
        assert mu.size == 3

    def test_small_sum_drift_renormalized(self):
        mu = make_measure([0.0, 1.0], [0.5, 0.5 + 1e-12])
        assert math.isclose(mu.weights.sum(), 1.0, abs_tol=1e-15)

    def test_arrays_are_frozen(self, two_point):
        with pytest.raises(ValueError):
            two_point.weights[0] = 0.9
        with pytest.raises(ValueError):
            two_point.points[0, 0] = 5.0

    def test_empty(self):
        with pytest.raises(EmptySupport):
            make_measure(np.zeros((0, 1)), [])

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatch):
            make_measure([0.0, 1.0], [1.0])

    def test_negative_weight(self):
        with pytest.raises(NegativeWeight):
            make_measure([0.0, 1.0], [1.5, -0.5])

    def test_weight_sum(self):
        with pytest.raises(WeightSumMismatch):
            make_measure([0.0, 1.0], [0.5, 0.4])

    def test_non_finite_point(self):
        with pytest.raises(InvalidPoints):
            make_measure([0.0, float("nan")], [0.5, 0.5])

    def test_errors_are_value_errors(self):
        with pytest.raises(ValueError):
            make_measure([0.0], [2.0])


class TestMeasureHelpers:
    def test_point_mass(self):
        mu = point_mass([1.0, 2.0])
        assert mu.size == 1
        assert mu.dim == 2

    def test_uniform(self):
        mu = uniform_measure([0.0, 1.0, 2.0, 3.0])
        np.testing.assert_allclose(mu.weights, 0.25)

    def test_expectation(self, two_point):
        assert two_point.expectation([0.0, 4.0]) == pytest.approx(2.0)

    def test_sorted(self):
        mu = make_measure([2.0, 0.0, 1.0], [0.5, 0.25, 0.25]).sorted()
        np.testing.assert_array_equal(mu.points[:, 0], [0.0, 1.0, 2.0])
        np.testing.assert_allclose(mu.weights, [0.25, 0.25, 0.5])
        assert mu.is_sorted_line

    def test_equals_ignores_order(self):
        a = make_measure([0.0, 1.0], [0.3, 0.7])
        b = make_measure([1.0, 0.0], [0.7, 0.3])
        assert a.equals(b)
        assert not a.equals(make_measure([0.0, 1.0], [0.5, 0.5]))

    def test_align_weights(self, three_point):
        nu = make_measure([2.0, 0.0], [0.25, 0.75])
        np.testing.assert_allclose(align_weights(nu, three_point), [0.75, 0.0, 0.25])

    def test_align_weights_outside_support(self, two_point):
        assert align_weights(make_measure([0.5], [1.0]), two_point) is None

    def test_align_weights_dimension(self, two_point):
        with pytest.raises(DimensionMismatch):
            align_weights(point_mass([0.0, 0.0]), two_point)

    def test_translate(self, two_point):
        np.testing.assert_allclose(translate(two_point, 3.0).points[:, 0], [3.0, 4.0])

    def test_tilt(self, two_point):
        tilted = tilt(two_point, math.log(9.0))
        np.testing.assert_allclose(tilted.weights, [0.1, 0.9], atol=1e-15)

    def test_omega(self):
        np.testing.assert_allclose(omega([0.5, -2.0, 0.0, 3.0]), [0.5, -4.0, 0.0, 9.0])

    def test_pushforward_omega(self):
        mu = pushforward_omega(make_measure([-2.0, 0.5], [0.5, 0.5]))
        np.testing.assert_allclose(mu.points[:, 0], [-4.0, 0.5])

    def test_product_measure(self, two_point):
        mu = product_measure(two_point, two_point)
        assert mu.size == 4
        assert mu.dim == 2
        np.testing.assert_allclose(mu.weights, 0.25)


class TestEmpirical:
    def test_duplicates_kept(self):
        L = empirical([0.0, 0.0, 1.0])
        assert L.n == 3
        np.testing.assert_allclose(L.to_measure().weights, [2 / 3, 1 / 3])

    def test_empty(self):
        with pytest.raises(EmptySupport):
            empirical(np.zeros((0, 1)))

    def test_sampling_is_deterministic(self, three_point):
        first = sample_indices(three_point, 50, 7)
        second = sample_indices(three_point, 50, StreamId(7))
        np.testing.assert_array_equal(first, second)

    def test_sample_empirical_support(self, three_point):
        L = sample_empirical(three_point, 20, 3)
        assert set(L.sample[:, 0]) <= {0.0, 1.0, 2.0}

    def test_sample_counts_rows_sum_to_n(self, three_point):
        counts = sample_counts(three_point, 9, 100, 1)
        assert counts.shape == (100, 3)
        assert np.all(counts.sum(axis=1) == 9)

    def test_bad_sample_size(self, two_point):
        with pytest.raises(InvalidArgument):
            sample_indices(two_point, 0, 1)
        with pytest.raises(InvalidArgument):
            sample_counts(two_point, 2.5, 10, 1)


# --- products and types ---

class TestProductSpec:
    def test_materialize(self, two_point):
        table, weights = ProductSpec(two_point, 3).materialize()
        assert table.shape == (8, 3)
        assert weights.sum() == pytest.approx(1.0)
        assert len({tuple(row) for row in table}) == 8

    def test_cap(self, two_point):
        spec = ProductSpec(two_point, 3)
        assert spec.outcome_count == 8
        with pytest.raises(EnumerationCapExceeded):
            spec.check_cap(7)

    def test_cap_from_environment(self, two_point, monkeypatch):
        monkeypatch.setenv("CONC_LAB_PRODUCT_CAP", "4")
        reset_settings()
        with pytest.raises(EnumerationCapExceeded):
            ProductSpec(two_point, 3).materialize()

    def test_factor_count(self, two_point):
        with pytest.raises(InvalidArgument):
            ProductSpec(two_point, 0)


class TestTypes:
    def test_compositions(self):
        np.testing.assert_array_equal(compositions(3, 2), [[0, 3], [1, 2], [2, 1], [3, 0]])

    def test_composition_count(self):
        assert compositions(5, 3).shape == (math.comb(7, 2), 3)
        assert np.all(compositions(5, 3).sum(axis=1) == 5)

    def test_type_probabilities_sum_to_one(self):
        counts, log_coeff = enumerate_types(3, 6)
        probs = np.exp(type_log_probabilities(counts, log_coeff, [0.2, 0.3, 0.5]))
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_zero_weight_atom(self):
        counts, log_coeff = enumerate_types(2, 2)
        logp = type_log_probabilities(counts, log_coeff, [1.0, 0.0])
        assert np.exp(logp[counts[:, 0] == 2][0]) == pytest.approx(1.0)
        assert np.all(np.isneginf(logp[counts[:, 1] > 0]))


class TestDiscretizeGaussian:
    def test_moments(self):
        mu = discretize_gaussian(16.0, 0.01)
        assert mu.size == 3201
        assert abs(mu.mean()[0]) <= 1e-12
        variance = mu.expectation(mu.points[:, 0] ** 2)
        assert variance == pytest.approx(1.0, abs=1e-3)

    def test_grid_cap(self):
        with pytest.raises(GridTooLarge):
            discretize_gaussian(10.0, 0.01, cap=100)

    def test_bad_step(self):
        with pytest.raises(InvalidArgument):
            discretize_gaussian(1.0, 0.0)


class TestStreams:
    def test_children_differ(self):
        a = StreamId(5).child(1).generator().random(4)
        b = StreamId(5).child(2).generator().random(4)
        assert not np.array_equal(a, b)

    def test_same_name_same_draws(self):
        a = StreamId(5, (1, 2)).generator().random(4)
        b = StreamId(5).child(1).child(2).generator().random(4)
        np.testing.assert_array_equal(a, b)

    def test_as_stream(self):
        assert as_stream(None) == StreamId(0)
        assert as_stream(3) == StreamId(3)
        s = StreamId(4, (1,))
        assert as_stream(s) is s
        assert str(s) == "4:1"


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=8))
def test_uniform_measure_weights_sum_to_one(values):
    mu = uniform_measure(values)
    assert mu.weights.sum() == pytest.approx(1.0)
    assert mu.size == len(set(float(v) + 0.0 for v in values))
