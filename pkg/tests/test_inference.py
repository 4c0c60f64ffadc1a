import numpy as np
import pytest

from cthmm_subtyping import (
    MISSING,
    BinningScheme,
    DimensionMismatch,
    FeatureBinning,
    InvariantViolation,
    NonCausalQuery,
    StructureNotChain,
    Trajectory,
    forward_backward,
    full_mask,
    predictive_bin_distributions,
    progression_trajectory,
    sojourn_expectation,
    trajectory_log_likelihood,
)

from conftest import chain_model, random_model, random_observations, random_times
from oracles import enumerate_posteriors, enumerate_predictive


def _random_fixture(rng, n_states=None, n_points=None, bin_counts=None, missing=0.25):
    n_states = n_states or int(rng.integers(1, 4))
    n_points = n_points or int(rng.integers(1, 6))
    bin_counts = bin_counts or tuple(rng.integers(2, 4, size=int(rng.integers(1, 3))))
    model = random_model(rng, n_states, bin_counts)
    trajectory = Trajectory(
        patient_id="fixture",
        times=random_times(rng, n_points),
        observations=random_observations(rng, n_points, bin_counts, missing),
    )
    return model, trajectory


class TestTrajectory:
    def test_requires_increasing_times(self):
        with pytest.raises(InvariantViolation):
            Trajectory("p", np.array([0.0, 0.0]), np.zeros((2, 1), dtype=int))

    def test_requires_at_least_one_point(self):
        with pytest.raises(InvariantViolation):
            Trajectory("p", np.array([]), np.zeros((0, 1), dtype=int))

    def test_single_point_is_legal(self):
        t = Trajectory("p", np.array([3.0]), np.array([[MISSING]]))
        assert t.length == 1


class TestForwardBackward:
    def test_single_point_all_missing_returns_prior(self):
        rng = np.random.default_rng(1)
        model = random_model(rng, 3, (2, 3))
        trajectory = Trajectory("p", np.array([0.0]), np.full((1, 2), MISSING))
        summary = forward_backward(model, trajectory)
        assert summary.log_likelihood == pytest.approx(0.0, abs=1e-12)
        assert summary.gamma[0] == pytest.approx(model.initial, abs=1e-12)

    def test_single_state_gamma_is_one_and_ll_sums_emissions(self):
        rng = np.random.default_rng(2)
        model = random_model(rng, 1, (3,))
        trajectory = Trajectory(
            "p", np.array([0.0, 1.0, 2.0]), np.array([[0], [2], [1]])
        )
        summary = forward_backward(model, trajectory)
        assert np.all(summary.gamma == 1.0)
        expected = np.log(model.emissions.tables[0][0, [0, 2, 1]]).sum()
        assert summary.log_likelihood == pytest.approx(expected, abs=1e-12)

    def test_matches_enumeration_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            model, trajectory = _random_fixture(rng)
            summary = forward_backward(model, trajectory)
            ll, gamma, xi = enumerate_posteriors(
                model.initial,
                model.generator.rates,
                list(model.emissions.tables),
                trajectory.times,
                trajectory.observations,
            )
            assert summary.log_likelihood == pytest.approx(ll, abs=1e-10)
            assert np.abs(summary.gamma - gamma).max() < 1e-10
            if trajectory.length > 1:
                assert np.abs(summary.xi - xi).max() < 1e-10

    def test_posterior_normalisation_invariants(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            model, trajectory = _random_fixture(rng, n_points=int(rng.integers(2, 7)))
            summary = forward_backward(model, trajectory)
            assert np.abs(summary.gamma.sum(axis=1) - 1.0).max() < 1e-10
            assert np.abs(summary.xi.sum(axis=(1, 2)) - 1.0).max() < 1e-10
            for i in range(trajectory.length - 1):
                assert np.abs(summary.xi[i].sum(axis=1) - summary.gamma[i]).max() < 1e-9
                assert np.abs(summary.xi[i].sum(axis=0) - summary.gamma[i + 1]).max() < 1e-9

    def test_all_missing_timepoint_equals_dropped_emission_factor(self):
        rng = np.random.default_rng(5)
        model = random_model(rng, 2, (3,))
        times = np.array([0.0, 1.0, 2.5])
        obs = np.array([[1], [2], [0]])
        masked = obs.copy()
        masked[1, 0] = MISSING
        got = forward_backward(model, Trajectory("p", times, masked))
        ll, gamma, _ = enumerate_posteriors(
            model.initial,
            model.generator.rates,
            list(model.emissions.tables),
            times,
            masked,
        )
        assert got.log_likelihood == pytest.approx(ll, abs=1e-10)
        assert np.abs(got.gamma - gamma).max() < 1e-10

    def test_time_translation_invariance(self):
        rng = np.random.default_rng(6)
        model = random_model(rng, 3, (3,))
        # Exactly representable times keep the gaps bit-identical after the
        # shift, so the outputs must match bit for bit: only gaps matter.
        times = np.array([0.0, 1.25, 3.5, 4.0])
        obs = random_observations(rng, 4, (3,))
        a = forward_backward(model, Trajectory("p", times, obs))
        b = forward_backward(model, Trajectory("p", times + 137.5, obs))
        assert a.log_likelihood == b.log_likelihood
        assert np.array_equal(a.gamma, b.gamma)
        assert np.array_equal(a.xi, b.xi)
        # Arbitrary shifts perturb the recomputed gaps by at most one ulp.
        c = forward_backward(model, Trajectory("p", times + np.pi, obs))
        assert c.log_likelihood == pytest.approx(a.log_likelihood, rel=1e-12)
        assert np.abs(c.gamma - a.gamma).max() < 1e-12

    def test_log_likelihood_deterministic(self):
        rng = np.random.default_rng(7)
        model, trajectory = _random_fixture(rng)
        assert trajectory_log_likelihood(model, trajectory) == trajectory_log_likelihood(
            model, trajectory
        )

    def test_long_trajectory_stays_finite(self):
        rng = np.random.default_rng(8)
        model = random_model(rng, 3, (4,))
        n = 10_000
        trajectory = Trajectory(
            "long",
            random_times(rng, n),
            random_observations(rng, n, (4,), missing_rate=0.1),
        )
        summary = forward_backward(model, trajectory)
        assert np.isfinite(summary.log_likelihood)
        assert np.abs(summary.gamma.sum(axis=1) - 1.0).max() < 1e-9

    def test_dimension_mismatch_rejected(self):
        rng = np.random.default_rng(9)
        model = random_model(rng, 2, (3, 3))
        with pytest.raises(DimensionMismatch):
            forward_backward(
                model, Trajectory("p", np.array([0.0]), np.array([[0]]))
            )
        with pytest.raises(DimensionMismatch):
            forward_backward(
                model, Trajectory("p", np.array([0.0]), np.array([[0, 5]]))
            )


class TestPredictive:
    def test_single_state_returns_emission_rows(self):
        rng = np.random.default_rng(10)
        model = random_model(rng, 1, (4, 2))
        prefix = Trajectory("p", np.array([0.0, 1.0]), np.array([[1, 0], [3, 1]]))
        predicted = predictive_bin_distributions(model, prefix, np.array([2.0, 3.5]))
        for per_time in predicted:
            assert per_time[0] == pytest.approx(model.emissions.tables[0][0])
            assert per_time[1] == pytest.approx(model.emissions.tables[1][0])

    def test_all_missing_prefix_propagates_prior(self):
        rng = np.random.default_rng(11)
        model = random_model(rng, 3, (3,))
        prefix = Trajectory(
            "p", np.array([0.0, 0.8]), np.full((2, 1), MISSING)
        )
        t = 2.9
        predicted = predictive_bin_distributions(model, prefix, np.array([t]))
        from scipy.linalg import expm

        state_dist = model.initial @ expm(model.generator.rates * t)
        expected = state_dist @ model.emissions.tables[0]
        assert predicted[0][0] == pytest.approx(expected, abs=1e-12)

    def test_matches_enumeration_oracle(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            model = random_model(rng, 2, (3, 2))
            prefix = Trajectory(
                "p",
                random_times(rng, 3),
                random_observations(rng, 3, (3, 2), missing_rate=0.3),
            )
            t = float(prefix.times[-1] + rng.uniform(0.3, 2.0))
            predicted = predictive_bin_distributions(model, prefix, np.array([t]))
            expected = enumerate_predictive(
                model.initial,
                model.generator.rates,
                list(model.emissions.tables),
                prefix.times,
                prefix.observations,
                t,
            )
            for d in range(2):
                assert np.abs(predicted[0][d] - expected[d]).max() < 1e-10

    def test_distributions_sum_to_one(self):
        rng = np.random.default_rng(13)
        model = random_model(rng, 3, (5, 4))
        prefix = Trajectory(
            "p",
            random_times(rng, 5),
            random_observations(rng, 5, (5, 4)),
        )
        predicted = predictive_bin_distributions(
            model, prefix, prefix.times[-1] + np.array([0.5, 1.5, 4.0])
        )
        for per_time in predicted:
            for vector in per_time:
                assert vector.sum() == pytest.approx(1.0, abs=1e-10)

    def test_non_causal_query_rejected(self):
        rng = np.random.default_rng(14)
        model = random_model(rng, 2, (2,))
        prefix = Trajectory("p", np.array([0.0, 2.0]), np.array([[0], [1]]))
        with pytest.raises(NonCausalQuery):
            predictive_bin_distributions(model, prefix, np.array([1.5]))
        with pytest.raises(ValueError):
            predictive_bin_distributions(model, prefix, np.array([3.0, 2.5]))


class TestProgression:
    def setup_method(self):
        self.scheme = BinningScheme(
            (FeatureBinning(name="heart_rate", lower=40.0, upper=150.0, bins=5),)
        )

    def test_two_state_chain(self):
        model = chain_model([0.5], np.array([[0], [4]]), peak_mass=1.0)
        stages = progression_trajectory(model, self.scheme, start_state=0)
        assert [s.state for s in stages] == [0, 1]
        assert stages[0].expected_duration == pytest.approx(2.0)
        assert np.isinf(stages[1].expected_duration)
        assert stages[0].expected_values[0] == pytest.approx(51.0)
        assert stages[1].expected_values[0] == pytest.approx(139.0)

    def test_start_at_last_state(self):
        model = chain_model([0.5, 0.4], np.array([[0], [2], [4]]))
        stages = progression_trajectory(model, self.scheme, start_state=2)
        assert len(stages) == 1
        assert np.isinf(stages[0].expected_duration)

    def test_full_mask_rejected(self):
        rng = np.random.default_rng(15)
        model = random_model(rng, 3, (5,), mask=full_mask(3))
        with pytest.raises(StructureNotChain):
            progression_trajectory(model, self.scheme)

    def test_durations_come_from_generator(self):
        model = chain_model([0.8, 0.25, 0.4], np.zeros((4, 1), dtype=int))
        stages = progression_trajectory(model, self.scheme)
        durations = [s.expected_duration for s in stages]
        expected = sojourn_expectation(model.generator)
        assert durations[:3] == pytest.approx(list(expected[:3]))
        assert durations == pytest.approx([1.25, 4.0, 2.5, np.inf])
