import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cthmm_subtyping import (
    MISSING,
    BinningScheme,
    EmissionTable,
    FeatureBinning,
    InvariantViolation,
    UnknownFeature,
    discretize,
    emission_log_likelihood,
    expected_feature_value,
)
from cthmm_subtyping.emissions import log_emission_matrix

HEART_RATE = FeatureBinning(name="heart_rate", lower=40.0, upper=150.0, bins=5)
SCHEME = BinningScheme((HEART_RATE,))


class TestDiscretize:
    def test_lower_boundary_lands_in_first_bin(self):
        assert discretize(40.0, "heart_rate", SCHEME) == 0

    def test_out_of_range_is_missing(self):
        assert discretize(151.0, "heart_rate", SCHEME) == MISSING
        assert discretize(39.9, "heart_rate", SCHEME) == MISSING

    def test_interior_value(self):
        # width 22, so 95 sits in bin floor((95-40)/22) = 2
        assert discretize(95.0, "heart_rate", SCHEME) == 2

    def test_upper_boundary_lands_in_last_bin(self):
        assert discretize(150.0, "heart_rate", SCHEME) == 4

    def test_nan_is_missing(self):
        assert discretize(float("nan"), "heart_rate", SCHEME) == MISSING

    def test_unknown_feature(self):
        with pytest.raises(UnknownFeature):
            discretize(80.0, "respiration", SCHEME)
        with pytest.raises(UnknownFeature):
            discretize(80.0, 3, SCHEME)

    @given(
        a=st.floats(min_value=40.0, max_value=150.0),
        b=st.floats(min_value=40.0, max_value=150.0),
    )
    def test_monotone_in_value(self, a, b):
        lo, hi = min(a, b), max(a, b)
        assert discretize(lo, 0, SCHEME) <= discretize(hi, 0, SCHEME)

    @given(value=st.floats(min_value=40.0, max_value=150.0))
    def test_assigned_center_within_half_width(self, value):
        j = discretize(value, 0, SCHEME)
        center = HEART_RATE.centers[j]
        assert abs(value - center) <= HEART_RATE.width / 2 + 1e-9

    def test_bad_binning_rejected(self):
        with pytest.raises(InvariantViolation):
            FeatureBinning(name="x", lower=10.0, upper=10.0, bins=5)
        with pytest.raises(InvariantViolation):
            FeatureBinning(name="x", lower=0.0, upper=1.0, bins=1)


class TestEmissionTable:
    def test_rows_must_sum_to_one(self):
        with pytest.raises(InvariantViolation):
            EmissionTable(tables=(np.array([[0.5, 0.3]]),))

    def test_negative_probability_rejected(self):
        with pytest.raises(InvariantViolation):
            EmissionTable(tables=(np.array([[1.2, -0.2]]),))

    def test_feature_state_counts_must_agree(self):
        with pytest.raises(InvariantViolation):
            EmissionTable(
                tables=(np.array([[0.5, 0.5]]), np.array([[0.5, 0.5], [0.5, 0.5]]))
            )


class TestEmissionLogLikelihood:
    def setup_method(self):
        self.table = EmissionTable(
            tables=(
                np.array([[0.2, 0.8], [0.6, 0.4]]),
                np.array([[0.5, 0.25, 0.25], [0.1, 0.1, 0.8]]),
            )
        )

    def test_all_missing_scores_zero(self):
        assert emission_log_likelihood(self.table, 0, np.array([MISSING, MISSING])) == 0.0

    def test_single_observed_feature(self):
        value = emission_log_likelihood(self.table, 0, np.array([0, MISSING]))
        assert value == pytest.approx(math.log(0.2), abs=1e-15)

    def test_two_features_multiply(self):
        value = emission_log_likelihood(self.table, 0, np.array([0, 1]))
        assert value == pytest.approx(math.log(0.2 * 0.25), abs=1e-12)

    def test_masking_one_feature_removes_exactly_its_term(self):
        both = emission_log_likelihood(self.table, 1, np.array([1, 2]))
        masked = emission_log_likelihood(self.table, 1, np.array([1, MISSING]))
        assert both - masked == pytest.approx(math.log(0.8), abs=1e-12)

    def test_matrix_helper_agrees_with_scalar(self):
        rng = np.random.default_rng(5)
        obs = np.column_stack(
            [rng.integers(-1, 2, size=12), rng.integers(-1, 3, size=12)]
        )
        matrix = log_emission_matrix(self.table, obs)
        for i in range(obs.shape[0]):
            for k in range(2):
                assert matrix[i, k] == pytest.approx(
                    emission_log_likelihood(self.table, k, obs[i]), abs=1e-12
                )


class TestExpectedFeatureValue:
    def test_point_mass_on_first_bin(self):
        table = EmissionTable(tables=(np.array([[1.0, 0.0, 0.0, 0.0, 0.0]]),))
        assert expected_feature_value(table, 0, 0, SCHEME) == pytest.approx(51.0)

    def test_uniform_gives_midrange(self):
        table = EmissionTable(tables=(np.full((1, 5), 0.2),))
        assert expected_feature_value(table, 0, 0, SCHEME) == pytest.approx(95.0)

    def test_symmetric_mass_gives_midrange(self):
        table = EmissionTable(tables=(np.array([[0.5, 0.0, 0.0, 0.0, 0.5]]),))
        assert expected_feature_value(table, 0, 0, SCHEME) == pytest.approx(95.0)
