"""
Tests for the baseline, LuPTS, Stat-LuPTS, distillation and composed estimators
"""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from sklearn.linear_model import LinearRegression, Ridge

from conftest import random_dataset
from core.regression import TAU_FIT, matrix_chain_product
from estimators.composed import (
    ComposedPredictor,
    LinearMap,
    RegressorKind,
    RegressorSpec,
    fit_composed,
    fit_composed_with,
    linear_theta,
)
from estimators.linear import (
    ChainFit,
    DistillVariant,
    LinearPredictor,
    fit_baseline,
    fit_distill_concat,
    fit_distill_seq,
    fit_lupts,
    fit_stat_lupts,
    predictor_from_json,
    select_distill_lambda,
)
from estimators.registry import (
    EstimatorKind,
    EstimatorSpec,
    PluginRegressor,
    effective_theta,
    fit_estimator,
    known_labels,
    predict,
)
from safety.guards import ConfigError, DimensionError, ParameterError, SchemaError
from simulation.rng import RngStream
from simulation.synth import sample_trajectories
from simulation.system import InitialState, SystemSpec, TrajectoryDataset


def noiseless_dataset(m=6, seed=0):
    """d=2, T=3 system without any noise and a random X1."""
    gen = np.random.default_rng(seed)
    spec = SystemSpec(
        transitions=(gen.normal(size=(2, 2)) + 2 * np.eye(2), gen.normal(size=(2, 2)) + 2 * np.eye(2)),
        outcome_weights=gen.normal(size=(2, 1)),
        noise_scales=(0.0, 0.0),
        outcome_noise=0.0,
        initial_state=InitialState(0.0, 1.0),
    )
    return spec, sample_trajectories(spec, m, RngStream(seed))


class TestBaseline:

    def test_exact_linear_relation(self):
        x1 = np.array([[1.0], [2.0]])
        data = TrajectoryDataset(states=(x1, 2 * x1), outcomes=6 * x1)
        assert_allclose(fit_baseline(data).theta, [[6.0]])

    def test_zero_targets(self, small_dataset):
        data = TrajectoryDataset(states=small_dataset.states, outcomes=np.zeros((small_dataset.m, 1)))
        assert_allclose(fit_baseline(data).theta, np.zeros((3, 1)), atol=1e-14)

    def test_hand_normal_equations(self):
        x1 = np.array([[1.0], [2.0]])
        data = TrajectoryDataset(states=(x1, x1), outcomes=np.array([[2.0], [4.0]]))
        assert_allclose(fit_baseline(data).theta, [[2.0]])

    def test_ignores_privileged_states(self, small_dataset):
        scrambled = TrajectoryDataset(
            states=(small_dataset.states[0],) + tuple(np.zeros_like(x) for x in small_dataset.states[1:]),
            outcomes=small_dataset.outcomes,
        )
        assert np.array_equal(fit_baseline(scrambled).theta, fit_baseline(small_dataset).theta)


class TestLuPTS:

    def test_hand_chain(self, chain_dataset):
        fit = fit_lupts(chain_dataset)
        assert_allclose(fit.step_coefficients[0], [[2.0]])
        assert_allclose(fit.step_coefficients[1], [[3.0]])
        assert_allclose(fit.outcome_coefficients, [[4.0]])
        assert_allclose(fit.theta, [[24.0]])

    def test_identity_transition_recovered(self, rng):
        x1 = rng.normal(size=(20, 3))
        y = rng.normal(size=(20, 1))
        data = TrajectoryDataset(states=(x1, x1.copy()), outcomes=y)
        fit = fit_lupts(data)
        assert_allclose(fit.step_coefficients[0], np.eye(3), atol=1e-10)
        assert_allclose(fit.theta, fit_baseline(data).theta, atol=1e-10)

    def test_composition_consistency(self, small_dataset):
        fit = fit_lupts(small_dataset)
        expected = matrix_chain_product(list(fit.step_coefficients)) @ fit.outcome_coefficients
        assert_allclose(fit.theta, expected, rtol=TAU_FIT)

    def test_noiseless_two_step_equals_baseline(self):
        gen = np.random.default_rng(3)
        spec = SystemSpec(transitions=(gen.normal(size=(3, 3)) + 2 * np.eye(3),),
                          outcome_weights=gen.normal(size=(3, 1)),
                          noise_scales=(0.0,), outcome_noise=0.0, initial_state=InitialState(0.0, 1.0))
        data = sample_trajectories(spec, 10, RngStream(3))
        assert_allclose(fit_lupts(data).theta, fit_baseline(data).theta, rtol=1e-9, atol=1e-12)

    def test_needs_two_time_points(self):
        data = TrajectoryDataset(states=(np.ones((3, 1)),), outcomes=np.ones((3, 1)))
        with pytest.raises(ParameterError):
            fit_lupts(data)

    def test_intercepts_recover_affine_chain(self, rng):
        x1 = rng.normal(size=(30, 2))
        a = np.array([[1.0, 0.5], [0.0, 2.0]])
        x2 = x1 @ a + np.array([1.0, -1.0])
        y = x2 @ np.array([[2.0], [1.0]]) + 3.0
        data = TrajectoryDataset(states=(x1, x2), outcomes=y)
        fit = fit_lupts(data, fit_intercept=True)
        assert_allclose(fit.step_coefficients[0], a, atol=1e-10)
        assert_allclose(fit.step_intercepts[0], [1.0, -1.0], atol=1e-10)
        assert fit.outcome_intercept == pytest.approx(3.0)
        assert_allclose(fit.predict(x1), y, atol=1e-9)
        # composed intercept: 3 + c' beta = 3 + (2 - 1)
        assert fit.composed.intercept == pytest.approx(4.0)

    def test_time_point_subset(self, small_dataset):
        fit = fit_lupts(small_dataset, time_points=[1, 3, 4])
        assert len(fit.step_coefficients) == 2
        assert fit.time_points == (1, 3, 4)
        full_skip = fit_lupts(small_dataset, time_points=[1, 4])
        direct = np.linalg.lstsq(small_dataset.states[0], small_dataset.states[3], rcond=None)[0]
        assert_allclose(full_skip.step_coefficients[0], direct, atol=1e-10)

    @pytest.mark.parametrize("points", [[2, 4], [1, 3], [1, 3, 2, 4], [1], [1, 1, 4]])
    def test_invalid_time_points(self, small_dataset, points):
        with pytest.raises(ParameterError):
            fit_lupts(small_dataset, time_points=points)


class TestStatLuPTS:

    def test_hand_pooled_fit(self):
        data = TrajectoryDataset(states=(np.array([[1.0]]), np.array([[2.0]]), np.array([[4.0]])),
                                 outcomes=np.array([[8.0]]))
        fit = fit_stat_lupts(data)
        assert_allclose(fit.step_coefficients[0], [[2.0]])
        assert_allclose(fit.outcome_coefficients, [[2.0]])
        assert_allclose(fit.theta, [[8.0]])

    def test_two_time_points_match_lupts(self, small_dataset):
        data = small_dataset.select_times([1, 2])
        assert_allclose(fit_stat_lupts(data).theta, fit_lupts(data).theta, rtol=1e-9, atol=1e-12)

    def test_noiseless_stationary_recovery(self):
        a = np.array([[1.2, 0.3], [-0.2, 0.9]])
        spec = SystemSpec(transitions=(a, a, a), outcome_weights=np.array([[1.0], [-1.0]]),
                          noise_scales=(0.0,) * 3, outcome_noise=0.0,
                          initial_state=InitialState(0.0, 1.0), stationary=True)
        data = sample_trajectories(spec, 8, RngStream(2))
        fit = fit_stat_lupts(data)
        assert_allclose(fit.step_coefficients[0], a, atol=1e-10)
        assert_allclose(fit.theta, np.linalg.matrix_power(a, 3) @ spec.outcome_weights, atol=1e-9)

    def test_shared_step_repeated(self, small_dataset):
        fit = fit_stat_lupts(small_dataset)
        assert len(fit.step_coefficients) == small_dataset.horizon - 1
        assert all(s is fit.step_coefficients[0] for s in fit.step_coefficients)


class TestDistillation:

    def test_seq_endpoints(self, small_dataset):
        assert_allclose(fit_distill_seq(small_dataset, 1.0).theta, fit_baseline(small_dataset).theta, atol=TAU_FIT)
        assert_allclose(fit_distill_seq(small_dataset, 0.0).theta, fit_lupts(small_dataset).theta, atol=TAU_FIT)

    @settings(max_examples=25, deadline=None)
    @given(lam=st.floats(0.0, 1.0), seed=st.integers(0, 10_000))
    def test_seq_is_convex_combination(self, lam, seed):
        _, data = random_dataset(seed, m=30, d=3, T=3)
        expected = lam * fit_baseline(data).theta + (1 - lam) * fit_lupts(data).theta
        assert np.max(np.abs(fit_distill_seq(data, lam).theta - expected)) <= 1e-9

    def test_seq_midpoint(self):
        # OLS fits Y = 2 X1, LuPTS composes 1 * 4 = 4
        x1 = np.array([[1.0], [-1.0], [2.0], [-2.0]])
        x2 = x1.copy()
        data = TrajectoryDataset(states=(x1, x2), outcomes=2 * x1)
        assert_allclose(fit_distill_seq(data, 0.5).theta, fit_baseline(data).theta)
        data = TrajectoryDataset(states=(x1, np.array([[1.0], [-1.0], [1.0], [-1.0]])), outcomes=2 * x1)
        ols, lupts = fit_baseline(data).theta, fit_lupts(data).theta
        assert_allclose(fit_distill_seq(data, 0.5).theta, 0.5 * (ols + lupts))

    @pytest.mark.parametrize("lam", [-0.1, 1.5, float("nan")])
    def test_lambda_out_of_range(self, small_dataset, lam):
        with pytest.raises(ParameterError):
            fit_distill_seq(small_dataset, lam)
        with pytest.raises(ParameterError):
            fit_distill_concat(small_dataset, lam)

    def test_concat_label_endpoint(self, small_dataset):
        assert_allclose(fit_distill_concat(small_dataset, 1.0).theta, fit_baseline(small_dataset).theta,
                        atol=TAU_FIT)

    def test_concat_duplicated_block(self, rng):
        x1 = rng.normal(size=(5, 2))
        y = rng.normal(size=(5, 1))
        data = TrajectoryDataset(states=(x1, x1.copy()), outcomes=y)
        student = fit_distill_concat(data, 0.0)
        assert_allclose(student.predict(x1), fit_baseline(data).predict(x1), atol=1e-10)

    @pytest.mark.parametrize("lam", [0.0, 0.3, 1.0])
    def test_concat_noiseless_reproduces_labels(self, lam):
        _, data = noiseless_dataset()
        student = fit_distill_concat(data, lam)
        assert_allclose(student.predict(data.baseline), data.outcomes, atol=1e-8)

    def test_concat_without_baseline_block(self, small_dataset):
        with_x1 = fit_distill_concat(small_dataset, 0.0)
        without_x1 = fit_distill_concat(small_dataset, 0.0, include_baseline=False)
        assert without_x1.hyperparameters["include_baseline"] is False
        assert not np.allclose(with_x1.theta, without_x1.theta)

    def test_lambda_selection(self, small_dataset):
        lam, scores = select_distill_lambda(small_dataset, DistillVariant.SEQ, rng=RngStream(5))
        assert lam in (0.25, 0.5, 0.75)
        assert set(scores) == {0.25, 0.5, 0.75}
        assert scores[lam] == min(scores.values())
        again, _ = select_distill_lambda(small_dataset, DistillVariant.SEQ, rng=RngStream(5))
        assert again == lam

    def test_lambda_selection_needs_rows(self):
        data = TrajectoryDataset(states=(np.ones((2, 1)), np.ones((2, 1))), outcomes=np.ones((2, 1)))
        with pytest.raises(ParameterError):
            select_distill_lambda(data, validation_fraction=0.1)
        with pytest.raises(ParameterError):
            select_distill_lambda(data, grid=())


class TestComposed:

    @pytest.mark.parametrize("seed", range(50))
    def test_least_squares_chain_matches_lupts(self, seed):
        dims = np.random.default_rng(seed)
        d, T = int(dims.integers(1, 6)), int(dims.integers(2, 6))
        _, data = random_dataset(300 + seed, int(dims.integers(d + 5, 80)), d, T)
        composed = fit_composed(data, RegressorSpec.least_squares(), RegressorSpec.least_squares())
        lupts = fit_lupts(data)
        probe = dims.normal(size=(10, d))
        assert_allclose(composed.predict(probe), lupts.predict(probe), rtol=TAU_FIT, atol=1e-10)
        assert_allclose(linear_theta(composed)[0], lupts.theta, rtol=TAU_FIT, atol=1e-10)

    def test_zero_ridge_matches_least_squares(self, small_dataset):
        ls = fit_composed(small_dataset, RegressorSpec.least_squares(), RegressorSpec.least_squares())
        ridge = fit_composed(small_dataset, RegressorSpec.ridge(0.0), RegressorSpec.ridge(0.0))
        assert_allclose(ridge.predict(small_dataset.baseline), ls.predict(small_dataset.baseline), atol=1e-10)

    def test_ridge_hand_example(self):
        stage = LinearMap.fit(np.array([[1.0], [1.0]]), np.array([[2.0], [2.0]]), RegressorSpec.ridge(2.0))
        assert_allclose(stage.coefficients, [[1.0]])

    def test_ridge_shrinks(self, small_dataset):
        ls = fit_composed(small_dataset)
        ridge = fit_composed(small_dataset, RegressorSpec.ridge(100.0), RegressorSpec.ridge(100.0))
        assert np.linalg.norm(ridge.outcome_model.coefficients) < np.linalg.norm(ls.outcome_model.coefficients)

    def test_linear_theta_matches_baseline_prediction(self, small_dataset):
        composed = fit_composed(small_dataset)
        theta, intercept = linear_theta(composed)
        assert intercept == 0.0
        assert_allclose(composed.predict(small_dataset.baseline), small_dataset.baseline @ theta, atol=1e-9)

    def test_plugin_regressors(self, small_dataset):
        plugin = fit_composed_with(small_dataset, lambda: LinearRegression(fit_intercept=False),
                                   lambda: LinearRegression(fit_intercept=False))
        assert not plugin.is_linear
        assert_allclose(plugin.predict(small_dataset.baseline), fit_lupts(small_dataset).predict(small_dataset.baseline),
                        atol=1e-8)
        ridge = fit_composed_with(small_dataset, lambda: Ridge(alpha=1.0), lambda: Ridge(alpha=1.0))
        assert ridge.predict(small_dataset.baseline).shape == (small_dataset.m, 1)

    def test_chain_as_composed(self, small_dataset):
        chain = fit_lupts(small_dataset)
        composed = chain.as_composed()
        assert isinstance(composed, ComposedPredictor)
        assert_allclose(composed.predict(small_dataset.baseline), chain.predict(small_dataset.baseline), atol=1e-9)

    def test_stage_dimension_check(self):
        with pytest.raises(DimensionError):
            ComposedPredictor(step_models=(LinearMap(np.ones((2, 3)), np.zeros(3)),),
                              outcome_model=LinearMap(np.ones((2, 1)), np.zeros(1)))

    def test_regressor_spec_validation(self):
        with pytest.raises(ParameterError):
            RegressorSpec(RegressorKind.LEAST_SQUARES, lambda_reg=1.0)
        with pytest.raises(ParameterError):
            RegressorSpec.ridge(-1.0)


class TestPredict:

    def test_zero_theta(self, rng):
        predictor = LinearPredictor(theta=np.zeros((3, 1)))
        assert_allclose(predict(predictor, rng.normal(size=(4, 3))), np.zeros((4, 1)))

    def test_unit_vector_projects(self, rng):
        baseline = rng.normal(size=(4, 3))
        predictor = LinearPredictor(theta=np.array([1.0, 0.0, 0.0]))
        assert_allclose(predict(predictor, baseline), baseline[:, :1])

    def test_dimension_mismatch(self, rng):
        predictor = LinearPredictor(theta=np.ones((3, 1)))
        with pytest.raises(DimensionError):
            predict(predictor, rng.normal(size=(4, 2)))
        composed = fit_composed(random_dataset(1, 20, 3, 3)[1])
        with pytest.raises(DimensionError):
            predict(composed, rng.normal(size=(4, 2)))


class TestSerialization:

    def test_linear_predictor(self, small_dataset):
        predictor = fit_distill_seq(small_dataset, 0.25)
        restored = predictor_from_json(_dumps(predictor.to_dict()))
        assert isinstance(restored, LinearPredictor)
        assert np.array_equal(restored.theta, predictor.theta)
        assert restored.hyperparameters["lambda"] == 0.25

    def test_chain(self, small_dataset):
        chain = fit_lupts(small_dataset, fit_intercept=True)
        restored = predictor_from_json(_dumps(chain.to_dict()))
        assert isinstance(restored, ChainFit)
        assert_allclose(restored.predict(small_dataset.baseline), chain.predict(small_dataset.baseline))

    def test_composed(self, small_dataset):
        composed = fit_composed(small_dataset, RegressorSpec.ridge(1.0), RegressorSpec.least_squares())
        restored = predictor_from_json(_dumps(composed.to_dict()))
        assert restored.step_spec == composed.step_spec
        assert_allclose(restored.predict(small_dataset.baseline), composed.predict(small_dataset.baseline))

    def test_unknown_document(self):
        with pytest.raises(SchemaError):
            predictor_from_json('{"type": "forest"}')


def _dumps(document):
    return json.dumps(document)


class TestRegistry:

    @pytest.mark.parametrize("label", known_labels())
    def test_every_label_fits(self, small_dataset, label):
        spec = EstimatorSpec.from_label(label)
        predictor = fit_estimator(spec, small_dataset, RngStream(3))
        assert predict(predictor, small_dataset.baseline).shape == (small_dataset.m, 1)
        if spec.kind is not EstimatorKind.COMPOSED_PLUGIN:
            assert effective_theta(predictor) is not None

    def test_unknown_label(self):
        with pytest.raises(ConfigError):
            EstimatorSpec.from_label("random_forest")

    def test_lambda_validation(self):
        with pytest.raises(ValueError):
            EstimatorSpec(kind=EstimatorKind.DISTILL_SEQ, distill_lambda=2.0)

    def test_cv_label_records_choice(self, small_dataset):
        predictor = fit_estimator(EstimatorSpec.from_label("distill_seq_cv"), small_dataset, RngStream(3))
        assert predictor.estimator == "distill_seq_cv"
        assert predictor.hyperparameters["lambda"] in (0.25, 0.5, 0.75)

    def test_composed_ls_theta_matches_lupts(self, small_dataset):
        composed = fit_estimator(EstimatorSpec.from_label("composed_ls"), small_dataset)
        assert_allclose(effective_theta(composed).theta, fit_lupts(small_dataset).theta, rtol=1e-8, atol=1e-10)

    def test_linear_plugin_matches_composed_ls(self, small_dataset):
        plugin = fit_estimator(EstimatorSpec.from_label("composed_plugin"), small_dataset)
        composed = fit_estimator(EstimatorSpec.from_label("composed_ls"), small_dataset)
        assert plugin.estimator == "composed_plugin" and not plugin.is_linear
        assert effective_theta(plugin) is None
        assert_allclose(plugin.predict(small_dataset.baseline), composed.predict(small_dataset.baseline), atol=1e-8)

    @pytest.mark.parametrize("regressor", list(PluginRegressor))
    def test_plugin_regressors_build_fresh_stages(self, small_dataset, regressor):
        spec = EstimatorSpec(kind=EstimatorKind.COMPOSED_PLUGIN, regressor=regressor, lambda_reg=2.0)
        predictor = fit_estimator(spec, small_dataset)
        models = [stage.model for stage in (*predictor.step_models, predictor.outcome_model)]
        assert len({id(model) for model in models}) == small_dataset.horizon
        assert predictor.predict(small_dataset.baseline).shape == (small_dataset.m, 1)

    def test_tree_plugin_leaf_size(self, small_dataset):
        spec = EstimatorSpec(kind=EstimatorKind.COMPOSED_PLUGIN, regressor="tree", min_samples_leaf=60)
        predictor = fit_estimator(spec, small_dataset)
        predictions = predictor.predict(small_dataset.baseline)
        assert_allclose(predictions, small_dataset.outcomes.mean(), rtol=1e-12, atol=1e-12)
        with pytest.raises(ValueError):
            EstimatorSpec(kind=EstimatorKind.COMPOSED_PLUGIN, min_samples_leaf=0)
