"""Version-tagged JSON model files for ensembles and baseline models."""

from __future__ import annotations

import json

import numpy as np

from .baselines import ConstantQuantileModel, LinearQuantileModel
from .learners import LearnerConfig, WeightedLogisticRegression, WeightedTreeClassifier
from .reduction import QuantileEnsemble, ThresholdGrid

MODEL_FORMAT = "quanting-model"
MODEL_VERSION = 1

_SCORERS = {"tree": WeightedTreeClassifier, "logreg": WeightedLogisticRegression}


def model_to_dict(model, encoding=None) -> dict:
    """Serializable description of a fitted model.

    ``encoding`` optionally records how raw table columns map to features
    (``feature_names``, ``categories``, ``label_name``) so held-out files can
    be encoded identically at evaluation time.
    """
    if not isinstance(model, (QuantileEnsemble, LinearQuantileModel, ConstantQuantileModel)):
        raise TypeError(f"cannot serialize {type(model).__name__}")
    d = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "q": float(model.q),
        "normalization": [float(v) for v in model.normalization],
        "encoding": encoding or {},
    }
    if isinstance(model, QuantileEnsemble):
        if model.learner is None:
            raise TypeError("only ensembles of built-in learners can be serialized")
        d.update(
            kind="quanting",
            n_features=int(model.n_features),
            grid={"scheme": model.grid.scheme, "thresholds": model.grid.thresholds.tolist()},
            learner=dict(model.learner),
            hard_outputs=bool(model.hard_outputs),
            meta=dict(model.meta),
            classifiers=[c.get_state() for c in model.classifiers],
        )
    elif isinstance(model, LinearQuantileModel):
        d.update(
            kind="linear",
            n_features=int(model.n_features),
            coefficients=model.coefficients.tolist(),
            intercept=float(model.intercept),
        )
    elif isinstance(model, ConstantQuantileModel):
        d.update(kind="constant", n_features=int(model.n_features), value=float(model.value))
    return d


def model_from_dict(d: dict):
    if d.get("format") != MODEL_FORMAT:
        raise ValueError("not a quanting model file")
    if d.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model file version {d.get('version')!r}")
    norm = tuple(d["normalization"])
    kind = d.get("kind")
    if kind == "quanting":
        config = LearnerConfig(**d["learner"])
        cls = _SCORERS[config.kind]
        classifiers = [cls().set_state(s) for s in d["classifiers"]]
        grid = ThresholdGrid(np.array(d["grid"]["thresholds"]), d["grid"]["scheme"])
        return QuantileEnsemble(classifiers, grid, d["q"], norm, d["n_features"],
                                learner=config.to_dict(), hard_outputs=d["hard_outputs"],
                                meta=d.get("meta", {}))
    if kind == "linear":
        return LinearQuantileModel(np.array(d["coefficients"]), d["intercept"], d["q"], norm)
    if kind == "constant":
        return ConstantQuantileModel(d["value"], d["q"], d["n_features"], norm)
    raise ValueError(f"unknown model kind {kind!r}")


def dumps(model, encoding=None) -> str:
    return json.dumps(model_to_dict(model, encoding), sort_keys=True, indent=1) + "\n"


def save_model(model, path, encoding=None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(model, encoding))


def load_model(path):
    """Return ``(model, encoding)`` from a model file."""
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    return model_from_dict(d), d.get("encoding", {})
