"""Quantile regression by reduction to importance-weighted classification.

For each threshold ``t`` on a grid over the normalized label range, a binary
classifier ``c_t`` is trained to predict ``I(y >= t)``, with positive
examples weighted ``q`` and negative examples weighted ``1 - q``. The
quantile estimate is then the integral of ``c_t(x)`` over ``t`` in [0, 1],
approximated by summing classifier outputs times the width of each
threshold's cell.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, clone
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .core import Dataset, _as_q, denormalize_labels, empirical_quantile, mean_pinball_loss
from .learners import LearnerConfig

logger = logging.getLogger(__name__)

SCHEMES = ("uniform", "adaptive")
WEIGHTING_PATHS = ("native", "rejection")
_MIN_GAP = 1e-9


@dataclass(frozen=True)
class ThresholdGrid:
    thresholds: np.ndarray
    scheme: str

    def __post_init__(self):
        t = np.asarray(self.thresholds, dtype=float).ravel()
        if t.size < 1:
            raise ValueError("threshold grid must be nonempty")
        if np.any(t <= 0.0) or np.any(t >= 1.0):
            raise ValueError("thresholds must lie strictly inside (0, 1)")
        if np.any(np.diff(t) <= 0):
            raise ValueError("thresholds must be strictly increasing")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown grid scheme {self.scheme!r}")
        t.setflags(write=False)
        object.__setattr__(self, "thresholds", t)

    def __len__(self):
        return self.thresholds.size

    @property
    def widths(self) -> np.ndarray:
        """Lengths of the cells of [0, 1] represented by each threshold."""
        if self.scheme == "uniform":
            return np.full(len(self), 1.0 / len(self))
        return cell_widths(self.thresholds)

    def spread_subset(self, k: int) -> np.ndarray:
        """Indices of ``k`` thresholds spread as evenly as possible over [0, 1].

        For each target ``(j - 0.5) / k`` the nearest unused threshold is
        taken, lower index first on ties. Returned indices are sorted.
        """
        n = len(self)
        if not 1 <= k <= n:
            raise ValueError(f"subset size must be in [1, {n}], got {k}")
        if k == n:
            return np.arange(n)
        used = np.zeros(n, dtype=bool)
        picked = []
        for j in range(1, k + 1):
            dist = np.abs(self.thresholds - (j - 0.5) / k)
            dist[used] = np.inf
            i = int(np.argmin(dist))
            used[i] = True
            picked.append(i)
        return np.sort(np.array(picked, dtype=int))


def cell_widths(thresholds) -> np.ndarray:
    """Partition [0, 1] at midpoints between consecutive thresholds."""
    t = np.asarray(thresholds, dtype=float)
    bounds = np.concatenate([[0.0], 0.5 * (t[:-1] + t[1:]), [1.0]])
    return np.diff(bounds)


def build_grid(n: int, scheme: str = "uniform", training_labels=None) -> ThresholdGrid:
    """Construct ``n`` thresholds.

    ``uniform`` gives the midpoints ``(k - 0.5) / n``. ``adaptive`` places
    threshold ``k`` at the empirical ``(k - 0.5) / n`` quantile of the
    normalized training labels, clamped into (0, 1) and with near-duplicates
    removed, so the result may hold fewer than ``n`` thresholds.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"number of thresholds must be a positive integer, got {n}")
    n = int(n)
    levels = (np.arange(1, n + 1) - 0.5) / n
    if scheme == "uniform":
        return ThresholdGrid(levels, "uniform")
    if scheme != "adaptive":
        raise ValueError(f"unknown grid scheme {scheme!r}")
    if training_labels is None or np.size(training_labels) == 0:
        raise ValueError("adaptive grid requires nonempty training labels")
    labels = np.asarray(training_labels, dtype=float)
    raw = np.array([empirical_quantile(labels, lv) for lv in levels])
    raw = np.clip(raw, _MIN_GAP, 1.0 - _MIN_GAP)
    kept = [raw[0]]
    for t in raw[1:]:
        if t - kept[-1] >= _MIN_GAP:
            kept.append(t)
    return ThresholdGrid(np.array(kept), "adaptive")


@dataclass
class WeightedSet:
    """Importance-weighted binary examples ``(x, t, I(y >= t), weight)``."""

    features: np.ndarray
    thresholds: np.ndarray
    labels: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return self.labels.shape[0]

    def augmented_features(self) -> np.ndarray:
        """Features with the threshold appended as a final column."""
        return np.column_stack([self.features, self.thresholds])

    @classmethod
    def concatenate(cls, sets):
        sets = list(sets)
        return cls(
            np.vstack([s.features for s in sets]),
            np.concatenate([s.thresholds for s in sets]),
            np.concatenate([s.labels for s in sets]),
            np.concatenate([s.weights for s in sets]),
        )


def importance_weights(labels, q) -> np.ndarray:
    """``q`` for positive labels and ``1 - q`` for negative ones."""
    q = _as_q(q)
    b = np.asarray(labels)
    return np.where(b == 1, q, 1.0 - q)


def make_weighted_set(data: Dataset, t: float, q) -> WeightedSet:
    labels = (data.labels >= t).astype(int)
    m = data.n_samples
    return WeightedSet(
        data.features, np.full(m, float(t)), labels, importance_weights(labels, q)
    )


@dataclass
class UnweightedSet:
    """Rejection-sampled examples; features carry the threshold as last column."""

    features: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return self.labels.shape[0]

    @property
    def weights(self):
        return np.ones(len(self))


def rejection_sample(samples: WeightedSet, seed) -> UnweightedSet:
    """Keep each example independently with probability equal to its weight."""
    w = np.asarray(samples.weights, dtype=float)
    if np.any(w <= 0) or np.any(w > 1):
        raise ValueError("rejection sampling requires weights in (0, 1]")
    rng = np.random.default_rng(seed)
    keep = rng.random(w.shape[0]) < w
    X = samples.augmented_features()[keep]
    return UnweightedSet(X, np.asarray(samples.labels)[keep].astype(int))


def _scores_for(classifier, samples) -> np.ndarray:
    if isinstance(classifier, QuantileEnsemble):
        return classifier.threshold_scores(samples.features, samples.thresholds)
    if hasattr(classifier, "predict_score"):
        return np.asarray(classifier.predict_score(samples.features), dtype=float)
    return np.asarray(classifier(samples.features, samples.thresholds), dtype=float)


def importance_weighted_error(classifier, samples: WeightedSet, normalize=False) -> float:
    """Mean of ``weight * I(prediction != label)``, thresholding scores at 0.5.

    ``classifier`` may be a fitted scorer (``predict_score(X)``), a
    :class:`QuantileEnsemble` (each sample is scored by the classifier at
    the grid threshold nearest its own), or a callable ``f(X, t)``. With
    ``normalize=True`` the weighted error count is divided by the total
    weight instead of the sample count.
    """
    if len(samples) == 0:
        raise ValueError("importance-weighted error of an empty sample")
    pred = (_scores_for(classifier, samples) >= 0.5).astype(int)
    wrong = pred != np.asarray(samples.labels)
    w = np.asarray(samples.weights, dtype=float)
    total = w.sum() if normalize else w.shape[0]
    return float(w @ wrong / total)


def unweighted_error(classifier, samples: UnweightedSet) -> float:
    """Plain 0/1 error rate on rejection-sampled data (threshold in last column)."""
    if len(samples) == 0:
        raise ValueError("error of an empty sample")
    X, t = samples.features[:, :-1], samples.features[:, -1]
    proxy = WeightedSet(X, t, samples.labels, np.ones(len(samples)))
    return importance_weighted_error(classifier, proxy)


class _ScoreAdapter:
    """Expose ``predict_score`` on an arbitrary fitted scikit-learn classifier."""

    def __init__(self, estimator):
        self.estimator = estimator

    def predict_score(self, X):
        est = self.estimator
        if hasattr(est, "predict_score"):
            return est.predict_score(X)
        classes = list(getattr(est, "classes_", [0, 1]))
        if len(classes) == 1:
            return np.full(np.asarray(X).shape[0], float(classes[0] == 1))
        proba = est.predict_proba(X)
        return np.clip(proba[:, classes.index(1)], 0.0, 1.0)


@dataclass
class QuantileEnsemble:
    """Trained classifier family plus the grid and label map that index it."""

    classifiers: list
    grid: ThresholdGrid
    q: float
    normalization: tuple[float, float]
    n_features: int
    learner: Optional[dict] = None
    hard_outputs: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.q = _as_q(self.q)
        if len(self.classifiers) != len(self.grid):
            raise ValueError(
                f"{len(self.classifiers)} classifiers for {len(self.grid)} thresholds"
            )

    def __len__(self):
        return len(self.classifiers)

    def _check_X(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features:
            raise ValueError(
                f"feature arity mismatch: model expects {self.n_features}, got {X.shape[1]}"
            )
        return X

    def score_matrix(self, X, indices=None) -> np.ndarray:
        """Clamped classifier outputs, shape ``(n_examples, n_classifiers)``."""
        X = self._check_X(X)
        idx = range(len(self)) if indices is None else indices
        cols = [np.clip(self.classifiers[i].predict_score(X), 0.0, 1.0) for i in idx]
        S = np.column_stack(cols) if cols else np.zeros((X.shape[0], 0))
        if self.hard_outputs:
            S = (S >= 0.5).astype(float)
        return S

    def predict_normalized(self, X, indices=None) -> np.ndarray:
        if indices is None or len(indices) == len(self):
            widths = self.grid.widths
            indices = None
        else:
            widths = cell_widths(self.grid.thresholds[indices])
        return np.clip(self.score_matrix(X, indices) @ widths, 0.0, 1.0)

    def predict(self, X, indices=None) -> np.ndarray:
        return denormalize_labels(self.predict_normalized(X, indices), self.normalization)

    def predict_subset(self, X, k: int) -> np.ndarray:
        """Prediction using only ``k`` evenly spread classifiers."""
        return self.predict(X, self.grid.spread_subset(k))

    def threshold_scores(self, X, thresholds) -> np.ndarray:
        """Score each row with the classifier whose threshold is nearest its ``t``."""
        X = self._check_X(X)
        t = np.asarray(thresholds, dtype=float)
        grid = self.grid.thresholds
        pos = np.clip(np.searchsorted(grid, t), 1, len(grid) - 1) if len(grid) > 1 else None
        if pos is None:
            nearest = np.zeros(t.shape[0], dtype=int)
        else:
            nearest = np.where(np.abs(grid[pos - 1] - t) <= np.abs(grid[pos] - t), pos - 1, pos)
        out = np.empty(t.shape[0])
        for k in np.unique(nearest):
            rows = nearest == k
            s = np.clip(self.classifiers[k].predict_score(X[rows]), 0.0, 1.0)
            out[rows] = (s >= 0.5).astype(float) if self.hard_outputs else s
        return out


def _threshold_seeds(seed, n):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def _resolve_learner(learner):
    if learner is None:
        learner = LearnerConfig()
    if isinstance(learner, str):
        learner = LearnerConfig(kind=learner)
    if isinstance(learner, LearnerConfig):
        return learner.make_estimator, learner.to_dict()
    return (lambda: clone(learner)), None


def quanting_train(
    data: Dataset,
    q,
    grid: ThresholdGrid,
    learner=None,
    seed: int = 0,
    weighting: str = "native",
    hard_outputs: bool = False,
) -> QuantileEnsemble:
    """Train one importance-weighted classifier per grid threshold.

    ``learner`` is a :class:`LearnerConfig`, a learner kind name, or any
    unfitted scikit-learn classifier accepting ``sample_weight``. With
    ``weighting="rejection"`` each threshold's weighted set is converted to
    an unweighted one by rejection sampling before fitting.
    """
    q = _as_q(q)
    if data.normalization is None:
        raise ValueError("quanting_train requires a label-normalized dataset")
    if weighting not in WEIGHTING_PATHS:
        raise ValueError(f"unknown weighting path {weighting!r}")
    make, learner_state = _resolve_learner(learner)
    seeds = _threshold_seeds(seed, len(grid))
    classifiers = []
    for t, s in zip(grid.thresholds, seeds):
        ws = make_weighted_set(data, t, q)
        try:
            if weighting == "rejection":
                rs = rejection_sample(ws, s)
                if len(rs) == 0:
                    raise ValueError("rejection sampling kept no examples")
                est = make().fit(rs.features[:, :-1], rs.labels)
            else:
                est = make().fit(ws.features, ws.labels, sample_weight=ws.weights)
        except Exception as exc:
            raise RuntimeError(f"learner failed at threshold t={t:.6g}: {exc}") from exc
        classifiers.append(est if learner_state is not None else _ScoreAdapter(est))
    logger.debug("trained %d classifiers for q=%s", len(classifiers), q)
    return QuantileEnsemble(
        classifiers,
        grid,
        q,
        data.normalization,
        data.n_features,
        learner=learner_state,
        hard_outputs=hard_outputs,
        meta={"weighting": weighting, "seed": int(seed)},
    )


def quanting_predict(model: QuantileEnsemble, x):
    """Quantile estimate in original label units for one row or a matrix."""
    x = np.asarray(x, dtype=float)
    out = model.predict(x)
    return float(out[0]) if x.ndim == 1 else out


class QuantingRegressor(RegressorMixin, BaseEstimator):
    """Conditional quantile regressor built from a family of threshold classifiers.

    Parameters
    ----------
    q : float, default=0.5
        Target quantile level in (0, 1).
    n_classifiers : int, default=100
        Requested number of thresholds (adaptive grids may use fewer).
    scheme : {"adaptive", "uniform"}, default="adaptive"
        Threshold placement over normalized labels.
    learner : {"tree", "logreg"} or classifier, default="tree"
        Base learner. A scikit-learn classifier instance is cloned per
        threshold and must accept ``sample_weight`` unless
        ``weighting="rejection"``.
    learner_params : dict, optional
        Overrides for :class:`LearnerConfig` fields when ``learner`` is a name.
    weighting : {"native", "rejection"}, default="native"
        Train on importance weights directly or via rejection sampling.
    hard_outputs : bool, default=False
        Threshold classifier scores at 0.5 before averaging.
    random_state : int, default=0
    """

    def __init__(
        self,
        q=0.5,
        n_classifiers=100,
        scheme="adaptive",
        learner="tree",
        learner_params=None,
        weighting="native",
        hard_outputs=False,
        random_state=0,
    ):
        self.q = q
        self.n_classifiers = n_classifiers
        self.scheme = scheme
        self.learner = learner
        self.learner_params = learner_params
        self.weighting = weighting
        self.hard_outputs = hard_outputs
        self.random_state = random_state

    def _learner_config(self):
        if isinstance(self.learner, str):
            params = dict(self.learner_params or {})
            params.setdefault("seed", int(self.random_state or 0))
            return LearnerConfig(kind=self.learner, **params)
        return self.learner

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        data = Dataset.from_raw(X, y)
        self._fit_dataset(data)
        return self

    def _fit_dataset(self, data: Dataset):
        q = _as_q(self.q)
        grid = build_grid(self.n_classifiers, self.scheme, data.labels)
        self.ensemble_ = quanting_train(
            data,
            q,
            grid,
            learner=self._learner_config(),
            seed=int(self.random_state or 0),
            weighting=self.weighting,
            hard_outputs=bool(self.hard_outputs),
        )
        self.n_features_in_ = data.n_features
        self.grid_ = grid
        self.normalization_ = data.normalization
        return self

    def predict(self, X, n_classifiers: Optional[int] = None):
        check_is_fitted(self)
        X = check_array(X, dtype=float)
        if n_classifiers is None:
            return self.ensemble_.predict(X)
        return self.ensemble_.predict_subset(X, n_classifiers)

    def score(self, X, y, sample_weight=None):
        """Negative mean pinball loss (higher is better)."""
        return -mean_pinball_loss(self.predict(X), y, self.q)

    @classmethod
    def from_ensemble(cls, ensemble: QuantileEnsemble, **params: Any):
        est = cls(q=ensemble.q, n_classifiers=len(ensemble), scheme=ensemble.grid.scheme,
                  hard_outputs=ensemble.hard_outputs, **params)
        est.ensemble_ = ensemble
        est.grid_ = ensemble.grid
        est.normalization_ = ensemble.normalization
        est.n_features_in_ = ensemble.n_features
        return est
