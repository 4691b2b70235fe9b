"""Conditional quantile estimation by reduction to importance-weighted classification."""

from .baselines import (
    ConstantQuantileRegressor,
    LinearQuantileModel,
    LinearQuantileRegressor,
    fit_linear_quantile,
    predict_linear,
)
from .core import (
    Dataset,
    EvalReport,
    QuantileSpec,
    coverage_below,
    empirical_quantile,
    mean_pinball_loss,
    pinball_loss,
)
from .learners import LearnerConfig, WeightedLogisticRegression, WeightedTreeClassifier
from .reduction import (
    QuantileEnsemble,
    QuantingRegressor,
    ThresholdGrid,
    build_grid,
    importance_weighted_error,
    make_weighted_set,
    quanting_predict,
    quanting_train,
    rejection_sample,
)

__version__ = "0.1.0"

__all__ = [
    "ConstantQuantileRegressor",
    "Dataset",
    "EvalReport",
    "LearnerConfig",
    "LinearQuantileModel",
    "LinearQuantileRegressor",
    "QuantileEnsemble",
    "QuantileSpec",
    "QuantingRegressor",
    "ThresholdGrid",
    "WeightedLogisticRegression",
    "WeightedTreeClassifier",
    "build_grid",
    "coverage_below",
    "empirical_quantile",
    "fit_linear_quantile",
    "importance_weighted_error",
    "make_weighted_set",
    "mean_pinball_loss",
    "pinball_loss",
    "predict_linear",
    "quanting_predict",
    "quanting_train",
    "rejection_sample",
]
