"""Reference quantile regressors: affine pinball-loss fit and a constant predictor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .core import Dataset, _as_q, denormalize_labels, empirical_quantile, mean_pinball_loss


@dataclass
class LinearQuantileModel:
    coefficients: np.ndarray
    intercept: float
    q: float
    normalization: tuple[float, float] = (0.0, 1.0)
    n_iter: int = 0
    objective: float = float("nan")

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float).ravel()
        self.intercept = float(self.intercept)
        if not (np.all(np.isfinite(self.coefficients)) and np.isfinite(self.intercept)):
            raise ValueError("linear model parameters must be finite")

    @property
    def n_features(self):
        return self.coefficients.size

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features:
            raise ValueError(
                f"feature arity mismatch: model expects {self.n_features}, got {X.shape[1]}"
            )
        return denormalize_labels(X @ self.coefficients + self.intercept, self.normalization)


def _check_finite(X):
    if not np.all(np.isfinite(X)):
        raise ValueError("features contain non-finite values")


def _objective(Z, y, theta, q):
    r = y - Z @ theta
    return float(np.mean(np.where(r >= 0, q * r, (q - 1.0) * r)))


def fit_linear_quantile(data: Dataset, q, max_iterations=5000, tolerance=1e-7,
                        window=50) -> LinearQuantileModel:
    """Minimize the mean pinball loss over affine predictors by subgradient descent.

    Features are standardized with training statistics. The iterate starts at
    least squares with its intercept shifted to the ``q``-quantile of the
    residuals, then follows Polyak steps toward a target ``best - delta``,
    halving ``delta`` and restarting from the best iterate whenever progress
    stalls. Stops once the best objective improves by less than ``tolerance``
    over ``window`` iterations with ``delta`` below ``tolerance``.
    """
    q = _as_q(q)
    X = data.features
    _check_finite(X)
    y = data.labels
    m = y.shape[0]
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    Z = np.column_stack([np.ones(m), (X - mu) / sd])

    theta = np.linalg.lstsq(Z, y, rcond=None)[0]
    theta[0] += empirical_quantile(y - Z @ theta, q)
    f = _objective(Z, y, theta, q)
    best, f_best = theta.copy(), f
    history = [f_best]
    delta = 0.05 * max(f_best, 1e-12)
    stall = 0
    n_iter = 0
    for n_iter in range(1, int(max_iterations) + 1):
        r = y - Z @ theta
        # subgradient at r == 0 taken from the y >= f branch
        g = Z.T @ np.where(r >= 0, -q, 1.0 - q) / m
        gn = g @ g
        if gn == 0.0:
            break
        theta = theta - (f - (f_best - delta)) / gn * g
        f = _objective(Z, y, theta, q)
        if f < f_best:
            if f < f_best - 0.5 * delta:
                stall = 0
            best, f_best = theta.copy(), f
        stall += 1
        if stall >= 10:
            delta *= 0.5
            theta, f, stall = best.copy(), f_best, 0
        history.append(f_best)
        if (n_iter >= window and delta < tolerance
                and history[-window - 1] - f_best < tolerance):
            break

    coef = best[1:] / sd
    intercept = best[0] - coef @ mu
    return LinearQuantileModel(coef, intercept, q, data.normalization or (0.0, 1.0),
                               n_iter=n_iter, objective=f_best)


def predict_linear(model: LinearQuantileModel, x):
    x = np.asarray(x, dtype=float)
    out = model.predict(x)
    return float(out[0]) if x.ndim == 1 else out


@dataclass
class ConstantQuantileModel:
    """Predicts the training-split empirical quantile for every input."""

    value: float
    q: float
    n_features: int
    normalization: tuple[float, float] = (0.0, 1.0)

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features:
            raise ValueError(
                f"feature arity mismatch: model expects {self.n_features}, got {X.shape[1]}"
            )
        return denormalize_labels(np.full(X.shape[0], self.value), self.normalization)


def fit_constant_quantile(data: Dataset, q) -> ConstantQuantileModel:
    q = _as_q(q)
    return ConstantQuantileModel(empirical_quantile(data.labels, q), q, data.n_features,
                                 data.normalization or (0.0, 1.0))


class _PinballScoreMixin:
    def score(self, X, y, sample_weight=None):
        """Negative mean pinball loss (higher is better)."""
        return -mean_pinball_loss(self.predict(X), y, self.q)


class LinearQuantileRegressor(_PinballScoreMixin, RegressorMixin, BaseEstimator):
    """Affine conditional quantile model fitted by subgradient descent."""

    def __init__(self, q=0.5, max_iter=5000, tol=1e-7):
        self.q = q
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        self._fit_dataset(Dataset.from_raw(X, y))
        return self

    def _fit_dataset(self, data):
        self.model_ = fit_linear_quantile(data, self.q, self.max_iter, self.tol)
        lo, hi = self.model_.normalization
        self.coef_ = self.model_.coefficients * (hi - lo)
        self.intercept_ = lo + self.model_.intercept * (hi - lo)
        self.n_features_in_ = data.n_features
        return self

    def predict(self, X):
        check_is_fitted(self)
        return self.model_.predict(check_array(X, dtype=float))


class ConstantQuantileRegressor(_PinballScoreMixin, RegressorMixin, BaseEstimator):
    """Ignores the features and predicts the training ``q``-quantile."""

    def __init__(self, q=0.5):
        self.q = q

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        self._fit_dataset(Dataset.from_raw(X, y))
        return self

    def _fit_dataset(self, data):
        self.model_ = fit_constant_quantile(data, self.q)
        self.constant_ = float(self.model_.predict(np.zeros((1, data.n_features)))[0])
        self.n_features_in_ = data.n_features
        return self

    def predict(self, X):
        check_is_fitted(self)
        return self.model_.predict(check_array(X, dtype=float))
