"""Shared domain types, the pinball loss and evaluation metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

# Slack used when rounding q*m up to an order-statistic rank, so that
# e.g. 0.9 * 100 selects rank 90 despite binary rounding of 0.9.
_RANK_EPS = 1e-9


def check_quantile(q) -> float:
    """Validate a target quantile level and return it as a float."""
    try:
        q = float(q)
    except (TypeError, ValueError):
        raise ValueError(f"q must be a real number, got {q!r}") from None
    if not (0.0 < q < 1.0):
        raise ValueError(f"q must be in (0,1), got {q}")
    return q


@dataclass(frozen=True)
class QuantileSpec:
    """Target order statistic, restricted to the open interval (0, 1)."""

    q: float

    def __post_init__(self):
        object.__setattr__(self, "q", check_quantile(self.q))

    def __float__(self):
        return self.q


def _as_q(q) -> float:
    if isinstance(q, QuantileSpec):
        return q.q
    return check_quantile(q)


@dataclass
class Dataset:
    """Feature matrix and real-valued labels.

    When ``normalization`` is set, ``labels`` are stored in normalized units
    ``(y - label_min) / (label_max - label_min)``. Training splits must then
    lie in [0, 1]; held-out splits normalized with training statistics may
    leave that range, which is why the range check can be disabled.
    """

    features: np.ndarray
    labels: np.ndarray
    normalization: Optional[tuple[float, float]] = None
    feature_names: Optional[list[str]] = None
    categories: dict = field(default_factory=dict)
    check_range: bool = True

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        y = np.asarray(self.labels, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise ValueError(
                f"features have {X.shape[0]} rows but labels have {y.shape[0]}"
            )
        if y.shape[0] < 1:
            raise ValueError("dataset must contain at least one example")
        if self.normalization is not None:
            lo, hi = (float(v) for v in self.normalization)
            if not lo < hi:
                raise ValueError(
                    "degenerate label normalization: constant labels cannot be normalized"
                )
            self.normalization = (lo, hi)
            if self.check_range and (y.min() < 0.0 or y.max() > 1.0):
                raise ValueError("normalized labels must lie in [0, 1]")
        self.features = X
        self.labels = y

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @classmethod
    def from_raw(cls, features, labels, normalization=None, **kwargs) -> "Dataset":
        """Build a normalized dataset from labels in original units.

        The min-max map is computed from ``labels`` unless ``normalization``
        is given, in which case that map is applied (and the range check is
        skipped, since foreign statistics need not bound these labels).
        """
        y = np.asarray(labels, dtype=float).ravel()
        if normalization is None:
            if y.size == 0:
                raise ValueError("dataset must contain at least one example")
            lo, hi = float(y.min()), float(y.max())
            if not lo < hi:
                raise ValueError(
                    "constant label column: min-max normalization is degenerate"
                )
            check = True
        else:
            lo, hi = normalization
            check = False
        kwargs.setdefault("check_range", check)
        return cls(features, normalize_labels(y, (lo, hi)), (lo, hi), **kwargs)

    def original_labels(self) -> np.ndarray:
        if self.normalization is None:
            return self.labels.copy()
        return denormalize_labels(self.labels, self.normalization)


def normalize_labels(y, normalization) -> np.ndarray:
    lo, hi = normalization
    return (np.asarray(y, dtype=float) - lo) / (hi - lo)


def denormalize_labels(z, normalization) -> np.ndarray:
    lo, hi = normalization
    return lo + np.asarray(z, dtype=float) * (hi - lo)


def pinball_loss(y, f, q):
    """Quantile (pinball) loss of predicting ``f`` when the label is ``y``.

    Under-prediction (``y >= f``) costs ``q`` per unit, over-prediction
    costs ``1 - q``. Works elementwise on arrays; scalars in, float out.
    """
    q = _as_q(q)
    y = np.asarray(y, dtype=float)
    f = np.asarray(f, dtype=float)
    diff = y - f
    loss = np.where(diff >= 0, q * diff, (q - 1.0) * diff)
    if loss.ndim == 0:
        return float(loss)
    return loss


def _paired(predictions, labels):
    p = np.asarray(predictions, dtype=float).ravel()
    y = np.asarray(labels, dtype=float).ravel()
    if p.shape != y.shape:
        raise ValueError(
            f"length mismatch: {p.shape[0]} predictions vs {y.shape[0]} labels"
        )
    if p.size == 0:
        raise ValueError("empty sample")
    return p, y


def mean_pinball_loss(predictions, labels, q) -> float:
    p, y = _paired(predictions, labels)
    return float(np.mean(pinball_loss(y, p, q)))


def sum_pinball_loss(predictions, labels, q) -> float:
    p, y = _paired(predictions, labels)
    return float(np.sum(pinball_loss(y, p, q)))


def coverage_below(predictions, labels) -> float:
    """Fraction of examples whose prediction strictly exceeds the label."""
    p, y = _paired(predictions, labels)
    return float(np.mean(p > y))


def quantile_rank(q: float, m: int) -> int:
    """1-based rank of the smallest pinball-loss minimizer among ``m`` order statistics."""
    return min(max(math.ceil(q * m - _RANK_EPS), 1), m)


def empirical_quantile(labels: Sequence[float], q) -> float:
    """Smallest constant minimizing the summed pinball loss on ``labels``.

    This is the ``ceil(q * m)``-th smallest label, i.e. the left-continuous
    inverse of the empirical CDF evaluated at ``q``.
    """
    q = _as_q(q)
    y = np.asarray(labels, dtype=float).ravel()
    if y.size == 0:
        raise ValueError("empty sample")
    k = quantile_rank(q, y.size)
    return float(np.partition(y, k - 1)[k - 1])


@dataclass
class EvalReport:
    mean_pinball_loss: float
    coverage_below: float
    train_seconds: float = 0.0
    predict_seconds: float = 0.0
    sum_pinball_loss: Optional[float] = None
    n_examples: Optional[int] = None
    loss_curve: Optional[list[tuple[int, float]]] = None

    def __post_init__(self):
        if not self.mean_pinball_loss >= 0:
            raise ValueError("mean_pinball_loss must be nonnegative")
        if not 0.0 <= self.coverage_below <= 1.0:
            raise ValueError("coverage_below must lie in [0, 1]")
        if self.train_seconds < 0 or self.predict_seconds < 0:
            raise ValueError("timings must be nonnegative")
        if self.loss_curve is not None:
            sizes = [int(k) for k, _ in self.loss_curve]
            if any(b <= a for a, b in zip(sizes, sizes[1:])):
                raise ValueError("loss_curve ensemble sizes must be strictly increasing")
            self.loss_curve = [(int(k), float(v)) for k, v in self.loss_curve]

    def to_dict(self) -> dict:
        d = {
            "mean_pinball_loss": self.mean_pinball_loss,
            "sum_pinball_loss": self.sum_pinball_loss,
            "coverage_below": self.coverage_below,
            "train_seconds": self.train_seconds,
            "predict_seconds": self.predict_seconds,
            "n_examples": self.n_examples,
        }
        if self.loss_curve is not None:
            d["loss_curve"] = [[k, v] for k, v in self.loss_curve]
        return d


def evaluate_predictions(predictions, labels, q, **timings) -> EvalReport:
    p, y = _paired(predictions, labels)
    return EvalReport(
        mean_pinball_loss=mean_pinball_loss(p, y, q),
        sum_pinball_loss=sum_pinball_loss(p, y, q),
        coverage_below=coverage_below(p, y),
        n_examples=int(y.size),
        **timings,
    )
