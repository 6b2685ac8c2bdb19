"""Robust aggregation and training of regression ensembles under additive Gaussian channel noise."""

from .aggregate_mae import MaeBoundReport, MaeGdConfig, expected_mae, mae_lower_bound, mae_upper_bound, optimize_weights_gd
from .aggregate_mse import approx_lambda, bem_weights, expected_mse, gem_weights, solve_lambda_for_constraint, tem_weights
from .core import AggregationWeights, Dataset, EnsembleModel, NoiseModel, PredictionMatrix, build_prediction_matrix
from .gradboost import GradBoostModel, TreeParams, fit_gradboost
from .noise import NoiseProfileSpec, build_noise_profile, sample_noise
from .trees import BaggingConfig, fit_bagging, fit_tree

__version__ = "0.1.0"
