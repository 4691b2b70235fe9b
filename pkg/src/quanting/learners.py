"""Importance-weighted binary base learners.

Both learners follow the scikit-learn classifier protocol
(``fit(X, y, sample_weight)``, ``predict_proba``, ``predict``) and add
``predict_score``, the probability of the positive class clamped to [0, 1].
Samples with zero weight are dropped before fitting, so they behave exactly
as if they were absent.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y


def _check_weighted_xy(X, y, sample_weight):
    X, y = check_X_y(X, y, dtype=float, ensure_all_finite=True)
    y = np.asarray(y, dtype=float)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary 0/1")
    if sample_weight is None:
        w = np.ones(y.shape[0])
    else:
        w = np.asarray(sample_weight, dtype=float).ravel()
        if w.shape[0] != y.shape[0]:
            raise ValueError("sample_weight length does not match y")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("sample weights must be finite and nonnegative")
    keep = w > 0
    n_features = X.shape[1]
    X, y, w = X[keep], y[keep], w[keep]
    if w.size == 0:
        raise ValueError("total sample weight must be positive")
    return X, y, w, n_features


def _check_predict_X(est, X):
    check_is_fitted(est)
    X = check_array(X, dtype=float)
    if X.shape[1] != est.n_features_in_:
        raise ValueError(
            f"X has {X.shape[1]} features, but {type(est).__name__} "
            f"was fitted with {est.n_features_in_}"
        )
    return X


class _ScoreMixin:
    def predict_proba(self, X):
        s = self.predict_score(X)
        return np.column_stack([1.0 - s, s])

    def predict(self, X):
        return (self.predict_score(X) >= 0.5).astype(int)


class WeightedTreeClassifier(_ScoreMixin, ClassifierMixin, BaseEstimator):
    """Binary CART tree grown greedily by weighted Gini impurity reduction.

    Parameters
    ----------
    max_depth : int, default=8
        Maximum depth; the root is depth 0.
    min_leaf_weight : float, default=10.0
        Minimum total sample weight in each child for a split to be allowed.

    Notes
    -----
    Candidate cuts are midpoints between consecutive distinct feature values.
    Samples with ``x[feature] >= cut`` go to the right child. Equal gains are
    resolved toward the lowest feature index, then the lowest cut.
    """

    def __init__(self, max_depth=8, min_leaf_weight=10.0):
        self.max_depth = max_depth
        self.min_leaf_weight = min_leaf_weight

    def fit(self, X, y, sample_weight=None):
        if int(self.max_depth) < 0:
            raise ValueError("max_depth must be nonnegative")
        if not self.min_leaf_weight > 0:
            raise ValueError("min_leaf_weight must be positive")
        X, y, w, self.n_features_in_ = _check_weighted_xy(X, y, sample_weight)
        self.classes_ = np.array([0, 1])
        self._feature, self._cut, self._left, self._right = [], [], [], []
        self._value = []
        self._grow(X, y, w, depth=0)
        self.feature_ = np.array(self._feature, dtype=int)
        self.cut_ = np.array(self._cut, dtype=float)
        self.left_ = np.array(self._left, dtype=int)
        self.right_ = np.array(self._right, dtype=int)
        self.value_ = np.array(self._value, dtype=float)
        del self._feature, self._cut, self._left, self._right, self._value
        return self

    def _new_node(self, value):
        self._feature.append(-1)
        self._cut.append(0.0)
        self._left.append(-1)
        self._right.append(-1)
        self._value.append(value)
        return len(self._value) - 1

    def _grow(self, X, y, w, depth):
        total = w.sum()
        pos = w[y == 1].sum()
        node = self._new_node(pos / total)
        pure = bool(np.all(y == y[0]))
        if pure or depth >= int(self.max_depth):
            return node
        split = self._best_split(X, y, w, total, pos)
        if split is None:
            return node
        j, cut = split
        right = X[:, j] >= cut
        self._feature[node] = j
        self._cut[node] = cut
        self._left[node] = self._grow(X[~right], y[~right], w[~right], depth + 1)
        self._right[node] = self._grow(X[right], y[right], w[right], depth + 1)
        return node

    def _best_split(self, X, y, w, total, pos):
        parent = 2.0 * pos * (total - pos) / total
        tol = 1e-12 * total
        min_w = float(self.min_leaf_weight)
        best_gain, best = tol, None
        for j in range(X.shape[1]):
            order = np.argsort(X[:, j], kind="stable")
            xs = X[order, j]
            distinct = np.nonzero(xs[:-1] < xs[1:])[0]
            if distinct.size == 0:
                continue
            cw = np.cumsum(w[order])[distinct]
            cp = np.cumsum((w * y)[order])[distinct]
            wr = total - cw
            pr = np.clip(pos - cp, 0.0, None)
            ok = (cw >= min_w) & (wr >= min_w)
            if not ok.any():
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                child = (2.0 * cp * np.clip(cw - cp, 0.0, None) / cw
                         + 2.0 * pr * np.clip(wr - pr, 0.0, None) / wr)
            gain = np.where(ok, parent - child, -np.inf)
            g_max = gain.max()
            if g_max > best_gain + tol:
                i = int(np.nonzero(gain >= g_max - tol)[0][0])
                lo, hi = xs[distinct[i]], xs[distinct[i] + 1]
                cut = 0.5 * (lo + hi)
                if not lo < cut <= hi:
                    cut = hi
                best_gain, best = g_max, (j, float(cut))
        return best

    def predict_score(self, X):
        X = _check_predict_X(self, X)
        node = np.zeros(X.shape[0], dtype=int)
        active = self.feature_[node] >= 0
        while active.any():
            idx = np.nonzero(active)[0]
            cur = node[idx]
            go_right = X[idx, self.feature_[cur]] >= self.cut_[cur]
            node[idx] = np.where(go_right, self.right_[cur], self.left_[cur])
            active = self.feature_[node] >= 0
        return np.clip(self.value_[node], 0.0, 1.0)

    @property
    def depth_(self):
        check_is_fitted(self)
        depths = np.zeros(self.value_.size, dtype=int)
        for i in range(self.value_.size):
            if self.feature_[i] >= 0:
                depths[self.left_[i]] = depths[i] + 1
                depths[self.right_[i]] = depths[i] + 1
        return int(depths.max())

    def get_state(self) -> dict:
        check_is_fitted(self)
        return {
            "n_features_in": int(self.n_features_in_),
            "feature": self.feature_.tolist(),
            "cut": self.cut_.tolist(),
            "left": self.left_.tolist(),
            "right": self.right_.tolist(),
            "value": self.value_.tolist(),
        }

    def set_state(self, state):
        self.n_features_in_ = int(state["n_features_in"])
        self.classes_ = np.array([0, 1])
        self.feature_ = np.array(state["feature"], dtype=int)
        self.cut_ = np.array(state["cut"], dtype=float)
        self.left_ = np.array(state["left"], dtype=int)
        self.right_ = np.array(state["right"], dtype=int)
        self.value_ = np.array(state["value"], dtype=float)
        return self


def _sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_objective(beta, Z, y, w, l2):
    """Weighted negative log-likelihood plus ``l2/2 * ||beta[1:]||^2``.

    ``Z`` is the design matrix whose first column is the intercept.
    """
    eta = Z @ beta
    nll = np.logaddexp(0.0, eta) - y * eta
    return float(w @ nll + 0.5 * l2 * beta[1:] @ beta[1:])


def logistic_gradient(beta, Z, y, w, l2):
    p = _sigmoid(Z @ beta)
    g = Z.T @ (w * (p - y))
    g[1:] += l2 * beta[1:]
    return g


def _logistic_hessian(beta, Z, w, l2):
    p = _sigmoid(Z @ beta)
    H = (Z * (w * p * (1.0 - p))[:, None]).T @ Z
    H[1:, 1:] += l2 * np.eye(Z.shape[1] - 1)
    return H


class WeightedLogisticRegression(_ScoreMixin, ClassifierMixin, BaseEstimator):
    """L2-penalized logistic regression fitted by IRLS with step halving.

    Features are standardized internally; the intercept is not penalized.
    """

    def __init__(self, l2=1e-4, max_iter=200, tol=1e-8):
        self.l2 = l2
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y, sample_weight=None):
        if self.l2 < 0:
            raise ValueError("l2 must be nonnegative")
        X, y, w, self.n_features_in_ = _check_weighted_xy(X, y, sample_weight)
        self.classes_ = np.array([0, 1])
        self.mean_ = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        self.scale_ = scale
        Z = np.column_stack([np.ones(X.shape[0]), (X - self.mean_) / self.scale_])

        l2 = float(self.l2)
        beta = np.zeros(Z.shape[1])
        f = logistic_objective(beta, Z, y, w, l2)
        self.n_iter_ = 0
        for it in range(int(self.max_iter)):
            g = logistic_gradient(beta, Z, y, w, l2)
            if np.linalg.norm(g) <= self.tol:
                break
            H = _logistic_hessian(beta, Z, w, l2)
            step = np.linalg.lstsq(H, g, rcond=None)[0]
            t = 1.0
            for _ in range(60):
                cand = beta - t * step
                f_cand = logistic_objective(cand, Z, y, w, l2)
                # tolerate rounding noise once the objective is flat
                if f_cand <= f + 1e-13 * max(1.0, abs(f)):
                    break
                t *= 0.5
            else:
                break
            beta, f = cand, f_cand
            self.n_iter_ = it + 1
        self.beta_std_ = beta
        self.coef_ = beta[1:] / self.scale_
        self.intercept_ = float(beta[0] - self.coef_ @ self.mean_)
        return self

    def design(self, X):
        """Standardized design matrix (with intercept column) used for fitting."""
        X = np.asarray(X, dtype=float)
        return np.column_stack([np.ones(X.shape[0]), (X - self.mean_) / self.scale_])

    def predict_score(self, X):
        X = _check_predict_X(self, X)
        return np.clip(_sigmoid(self.design(X) @ self.beta_std_), 0.0, 1.0)

    def get_state(self) -> dict:
        check_is_fitted(self)
        return {
            "n_features_in": int(self.n_features_in_),
            "mean": self.mean_.tolist(),
            "scale": self.scale_.tolist(),
            "beta_std": self.beta_std_.tolist(),
        }

    def set_state(self, state):
        self.n_features_in_ = int(state["n_features_in"])
        self.classes_ = np.array([0, 1])
        self.mean_ = np.array(state["mean"], dtype=float)
        self.scale_ = np.array(state["scale"], dtype=float)
        self.beta_std_ = np.array(state["beta_std"], dtype=float)
        self.coef_ = self.beta_std_[1:] / self.scale_
        self.intercept_ = float(self.beta_std_[0] - self.coef_ @ self.mean_)
        return self


LEARNER_KINDS = ("tree", "logreg")


@dataclass(frozen=True)
class LearnerConfig:
    kind: str = "tree"
    tree_max_depth: int = 8
    tree_min_leaf_weight: float = 10.0
    logreg_max_iterations: int = 200
    logreg_l2: float = 1e-4
    logreg_tolerance: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.kind not in LEARNER_KINDS:
            raise ValueError(f"unknown learner kind {self.kind!r}")
        if self.tree_max_depth < 1:
            raise ValueError("tree_max_depth must be a positive integer")
        if not self.tree_min_leaf_weight > 0:
            raise ValueError("tree_min_leaf_weight must be positive")
        if self.logreg_max_iterations < 1:
            raise ValueError("logreg_max_iterations must be a positive integer")
        if self.logreg_l2 < 0:
            raise ValueError("logreg_l2 must be nonnegative")
        if not self.logreg_tolerance > 0:
            raise ValueError("logreg_tolerance must be positive")

    def to_dict(self):
        return asdict(self)

    def make_estimator(self):
        if self.kind == "tree":
            return WeightedTreeClassifier(
                max_depth=self.tree_max_depth, min_leaf_weight=self.tree_min_leaf_weight
            )
        return WeightedLogisticRegression(
            l2=self.logreg_l2,
            max_iter=self.logreg_max_iterations,
            tol=self.logreg_tolerance,
        )


def _fit_samples(estimator, samples):
    if len(samples) == 0:
        raise ValueError("cannot train on an empty sample")
    return estimator.fit(samples.features, samples.labels, sample_weight=samples.weights)


def train_weighted_tree(samples, config: LearnerConfig | None = None):
    config = config or LearnerConfig(kind="tree")
    return _fit_samples(
        WeightedTreeClassifier(config.tree_max_depth, config.tree_min_leaf_weight), samples
    )


def train_weighted_logreg(samples, config: LearnerConfig | None = None):
    config = config or LearnerConfig(kind="logreg")
    est = WeightedLogisticRegression(
        config.logreg_l2, config.logreg_max_iterations, config.logreg_tolerance
    )
    return _fit_samples(est, samples)


def predict_score(scorer, x):
    """Score one feature vector (or a matrix of them) in [0, 1]."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    s = scorer.predict_score(x.reshape(1, -1) if single else x)
    return float(s[0]) if single else s
