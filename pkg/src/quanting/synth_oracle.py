"""Finite distributions over (context, label) with exactly computable regrets.

Every expectation here is an explicit finite sum, which makes these
instances suitable as brute-force ground truth for the quantile and
classifier regrets of the threshold reduction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .core import _as_q, pinball_loss

_SUM_TOL = 1e-12
FIXTURE_FORMAT = "quanting-discrete-instance"
FIXTURE_VERSION = 1


@dataclass
class DiscreteInstance:
    """Context distribution plus one conditional label pmf per context."""

    contexts: np.ndarray
    context_probs: np.ndarray
    labels: list
    label_probs: list

    def __post_init__(self):
        self.contexts = np.asarray(self.contexts, dtype=float)
        if self.contexts.ndim == 1:
            self.contexts = self.contexts.reshape(-1, 1)
        self.context_probs = np.asarray(self.context_probs, dtype=float)
        self.labels = [np.asarray(v, dtype=float) for v in self.labels]
        self.label_probs = [np.asarray(p, dtype=float) for p in self.label_probs]
        k = self.contexts.shape[0]
        if not (self.context_probs.shape == (k,) and len(self.labels) == k == len(self.label_probs)):
            raise ValueError("every context needs a probability and a label pmf")
        _check_pmf(self.context_probs, "context probabilities")
        for v, p in zip(self.labels, self.label_probs):
            if v.shape != p.shape or v.size == 0:
                raise ValueError("label pmf must pair each label with a probability")
            if np.any(np.diff(v) <= 0):
                raise ValueError("labels within a context must be strictly increasing")
            if v[0] < 0 or v[-1] > 1:
                raise ValueError("labels must lie in [0, 1]")
            _check_pmf(p, "label probabilities")

    @property
    def n_contexts(self):
        return self.contexts.shape[0]

    def cdf_le(self, i, t):
        """``D(y <= t | x_i)``."""
        return math.fsum(self.label_probs[i][self.labels[i] <= t])

    def cdf_lt(self, i, t):
        """``D(y < t | x_i)``."""
        return math.fsum(self.label_probs[i][self.labels[i] < t])

    def to_dict(self):
        return {
            "format": FIXTURE_FORMAT,
            "version": FIXTURE_VERSION,
            "contexts": self.contexts.tolist(),
            "context_probs": self.context_probs.tolist(),
            "labels": [v.tolist() for v in self.labels],
            "label_probs": [p.tolist() for p in self.label_probs],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != FIXTURE_FORMAT:
            raise ValueError("not a discrete-instance fixture")
        if d.get("version") != FIXTURE_VERSION:
            raise ValueError(f"unsupported fixture version {d.get('version')}")
        return cls(d["contexts"], d["context_probs"], d["labels"], d["label_probs"])

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "DiscreteInstance":
        return cls.from_dict(json.loads(text))


def _check_pmf(p, what):
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError(f"{what} must lie in [0, 1]")
    if abs(math.fsum(p) - 1.0) > _SUM_TOL:
        raise ValueError(f"{what} must sum to 1")


def single_context(pmf: dict) -> DiscreteInstance:
    """Instance with one context and label pmf ``{label: probability}``."""
    items = sorted(pmf.items())
    return DiscreteInstance([[0.0]], [1.0], [[k for k, _ in items]], [[v for _, v in items]])


def random_instance(seed, max_contexts=4, max_atoms=5) -> DiscreteInstance:
    """Seeded random instance.

    Context count and per-context atom count are uniform on
    ``1..max_contexts`` and ``1..max_atoms``; atom locations are sorted
    uniform draws on [0, 1], and all probabilities are normalized uniform
    draws. Contexts are encoded as the 1-D feature ``[index]``.
    """
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, max_contexts + 1))
    cp = rng.random(k) + 1e-3
    cp = cp / cp.sum()
    labels, probs = [], []
    for _ in range(k):
        a = int(rng.integers(1, max_atoms + 1))
        v = np.unique(rng.random(a))
        p = rng.random(v.size) + 1e-3
        labels.append(v)
        probs.append(p / p.sum())
    cp[-1] = 1.0 - math.fsum(cp[:-1])
    for p in probs:
        p[-1] = 1.0 - math.fsum(p[:-1])
    return DiscreteInstance(np.arange(k, dtype=float).reshape(-1, 1), cp, labels, probs)


def true_quantile(instance: DiscreteInstance, i: int, q) -> float:
    """Smallest label with ``D(y <= f) >= q`` and ``D(y >= f) >= 1 - q``."""
    q = _as_q(q)
    v, p = instance.labels[i], instance.label_probs[i]
    for j, f in enumerate(v):
        le = math.fsum(p[: j + 1])
        ge = math.fsum(p[j:])
        if le >= q - _SUM_TOL and ge >= 1.0 - q - _SUM_TOL:
            return float(f)
    return float(v[-1])


def true_quantiles(instance: DiscreteInstance, q) -> np.ndarray:
    return np.array([true_quantile(instance, i, q) for i in range(instance.n_contexts)])


def bayes_classifier_value(instance: DiscreteInstance, i: int, t: float, q) -> int:
    """Optimal threshold classifier ``I(D(y <= t | x_i) <= q)``."""
    q = _as_q(q)
    return int(instance.cdf_le(i, t) <= q)


def bayes_classifier_matrix(instance: DiscreteInstance, grid, q) -> np.ndarray:
    t = _thresholds(grid)
    return np.array([[bayes_classifier_value(instance, i, tk, q) for tk in t]
                     for i in range(instance.n_contexts)], dtype=float)


def expected_pinball(instance: DiscreteInstance, predictions, q) -> float:
    """``E[l_q(y, f(x))]`` by direct enumeration of every (context, label) pair."""
    f = np.asarray(predictions, dtype=float)
    terms = []
    for i in range(instance.n_contexts):
        loss = pinball_loss(instance.labels[i], f[i], q)
        terms.append(instance.context_probs[i] * float(instance.label_probs[i] @ loss))
    return math.fsum(terms)


def exact_quantile_regret(instance: DiscreteInstance, predictions, q) -> float:
    """Excess pinball risk of ``predictions`` over the true conditional quantiles.

    Uses the identity ``risk(Q) - risk(q*) = integral from q* to Q of
    (D(y < u | x) - q) du``; the integrand is a step function, and the
    integral of ``I(y_j < u)`` over ``[a, b]`` is ``max(b, y_j) - max(a, y_j)``.
    """
    q = _as_q(q)
    Q = np.asarray(predictions, dtype=float)
    star = true_quantiles(instance, q)
    terms = []
    for i in range(instance.n_contexts):
        v, p = instance.labels[i], instance.label_probs[i]
        a, b = star[i], Q[i]
        integral = float(p @ (np.maximum(b, v) - np.maximum(a, v))) - q * (b - a)
        terms.append(instance.context_probs[i] * integral)
    return max(math.fsum(terms), 0.0)


def _thresholds(grid):
    return np.asarray(getattr(grid, "thresholds", grid), dtype=float)


def _widths(grid):
    if hasattr(grid, "widths"):
        return grid.widths
    t = _thresholds(grid)
    return np.full(t.size, 1.0 / t.size)


def classifier_error(instance: DiscreteInstance, classifier_values, q, grid) -> float:
    """Importance-weighted error of classifier values ``c[i, k] = c_{t_k}(x_i)``.

    The integral over ``t`` is replaced by the grid sum with cell widths.
    """
    q = _as_q(q)
    c = np.asarray(classifier_values, dtype=float)
    t, w = _thresholds(grid), _widths(grid)
    if c.shape != (instance.n_contexts, t.size):
        raise ValueError("classifier values must have shape (n_contexts, n_thresholds)")
    terms = []
    for i in range(instance.n_contexts):
        lt = np.array([instance.cdf_lt(i, tk) for tk in t])
        per_t = q * (1.0 - lt) * (1.0 - c[i]) + (1.0 - q) * lt * c[i]
        terms.append(instance.context_probs[i] * float(w @ per_t))
    return math.fsum(terms)


def exact_classifier_regret(instance: DiscreteInstance, classifier_values, q, grid) -> float:
    """``e(D, c) - e(D, c*)`` on the grid, with ``c*`` the Bayes classifiers."""
    star = bayes_classifier_matrix(instance, grid, q)
    return classifier_error(instance, classifier_values, q, grid) - classifier_error(
        instance, star, q, grid
    )


def grid_average(classifier_values, grid) -> np.ndarray:
    """Per-context quantile estimate: classifier outputs integrated over the grid."""
    return np.asarray(classifier_values, dtype=float) @ _widths(grid)


def random_classifier_family(instance: DiscreteInstance, grid, q, rng) -> np.ndarray:
    """Draw one ``[0, 1]``-valued classifier family ``c[i, k]`` on the grid.

    Three kinds of family are mixed so both near-optimal and far-from-optimal
    classifiers get exercised: independent uniform values, the Bayes
    classifiers with a random subset of cells replaced by uniform values, and
    soft step functions ``c_t = I(t < g)`` blended with noise around a random
    guess ``g`` per context.
    """
    rng = np.random.default_rng(rng)
    t = _thresholds(grid)
    shape = (instance.n_contexts, t.size)
    kind = int(rng.integers(3))
    if kind == 0:
        return rng.random(shape)
    if kind == 1:
        c = bayes_classifier_matrix(instance, grid, q)
        mask = rng.random(shape) < rng.random()
        c[mask] = rng.random(int(mask.sum()))
        return c
    guess = rng.random((instance.n_contexts, 1))
    step = (t[None, :] < guess).astype(float)
    mix = rng.random()
    return (1.0 - mix) * step + mix * rng.random(shape)
