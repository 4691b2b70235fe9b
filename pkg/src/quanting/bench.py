"""Train/evaluate drivers and the method comparison benchmark."""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .baselines import fit_constant_quantile, fit_linear_quantile
from .core import check_quantile, evaluate_predictions, mean_pinball_loss
from .dataio import (
    BOSTON_TRAIN_SIZE,
    ColumnSchema,
    load_boston,
    load_csv,
    load_pre_split,
    preprocess,
    split,
    synthetic_dataset,
)
from .learners import LearnerConfig
from .reduction import SCHEMES, WEIGHTING_PATHS, QuantileEnsemble, build_grid, quanting_train

logger = logging.getLogger(__name__)

METHODS = ("quanting-tree", "quanting-logreg", "linear", "constant")
CURVE_SIZES = (1, 2, 5, 10, 20, 50, 100)
WALL_CLOCK_FIELDS = ("train_seconds", "predict_seconds")


@dataclass
class BenchConfig:
    data: str = "boston"
    test_data: Optional[str] = None
    q_values: tuple = (0.1, 0.5, 0.9)
    methods: tuple = ("quanting-tree", "quanting-logreg", "linear", "constant")
    n_classifiers: int = 100
    scheme: str = "adaptive"
    weighting: str = "native"
    hard_outputs: bool = False
    seed: int = 0
    train_fraction: Optional[float] = None
    synthetic_size: int = 2000
    learner_params: dict = field(default_factory=dict)
    output_dir: Optional[str] = None

    def __post_init__(self):
        self.q_values = tuple(check_quantile(q) for q in self.q_values)
        self.methods = tuple(self.methods)
        if not self.methods:
            raise ValueError("at least one method is required")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown threshold scheme {self.scheme!r}")
        if self.weighting not in WEIGHTING_PATHS:
            raise ValueError(f"unknown weighting path {self.weighting!r}")
        if int(self.n_classifiers) < 1:
            raise ValueError("n_classifiers must be a positive integer")


def load_data(source: str, schema: Optional[ColumnSchema] = None, synthetic_size=2000, seed=0):
    """Resolve ``boston``, ``synthetic:<name>`` or a CSV path to a Dataset."""
    if source == "boston":
        return load_boston()
    if source.startswith("synthetic:"):
        return synthetic_dataset(source.split(":", 1)[1], synthetic_size, seed)
    return preprocess(load_csv(source, schema), schema)


def load_train_test(config: BenchConfig, schema: Optional[ColumnSchema] = None):
    if config.test_data:
        return load_pre_split(config.data, config.test_data, schema)
    data = load_data(config.data, schema, config.synthetic_size, config.seed)
    fraction = config.train_fraction
    if fraction is None:
        fraction = BOSTON_TRAIN_SIZE / data.n_samples if config.data == "boston" else 0.8
    return split(data, fraction, config.seed)


def fit_method(method: str, train, q, n_classifiers=100, scheme="adaptive",
               weighting="native", hard_outputs=False, seed=0, learner_params=None):
    """Fit one benchmark method on a normalized training Dataset."""
    q = check_quantile(q)
    if method in ("quanting-tree", "quanting-logreg"):
        kind = method.split("-", 1)[1]
        config = LearnerConfig(kind=kind, seed=seed, **(learner_params or {}))
        grid = build_grid(n_classifiers, scheme, train.labels)
        return quanting_train(train, q, grid, config, seed=seed, weighting=weighting,
                              hard_outputs=hard_outputs)
    if method == "linear":
        return fit_linear_quantile(train, q)
    if method == "constant":
        return fit_constant_quantile(train, q)
    raise ValueError(f"unknown method {method!r}")


def curve_sizes(n_thresholds: int, sizes=CURVE_SIZES) -> list[int]:
    """Ensemble sizes for the convergence curve, ending at the full model."""
    out = [k for k in sizes if k < n_thresholds]
    out.append(n_thresholds)
    return out


def loss_curve(model: QuantileEnsemble, X, y, sizes=CURVE_SIZES) -> list[tuple[int, float]]:
    """Test loss of evenly spread sub-ensembles of increasing size."""
    return [(k, mean_pinball_loss(model.predict_subset(X, k), y, model.q))
            for k in curve_sizes(len(model), sizes)]


def evaluate_model(model, test, train_seconds=0.0, with_curve=False):
    """Return ``(EvalReport, predictions)`` on a Dataset in original label units."""
    y = test.original_labels()
    t0 = time.perf_counter()
    pred = model.predict(test.features)
    elapsed = time.perf_counter() - t0
    report = evaluate_predictions(pred, y, model.q, train_seconds=train_seconds,
                                  predict_seconds=elapsed)
    if with_curve and isinstance(model, QuantileEnsemble):
        report.loss_curve = loss_curve(model, test.features, y)
    return report, pred


@dataclass
class BenchRow:
    method: str
    q: float
    report: Optional[dict] = None
    n_classifiers: Optional[int] = None
    error: Optional[str] = None
    predictions: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None

    def to_dict(self):
        d = {"method": self.method, "q": self.q, "n_classifiers": self.n_classifiers,
             "error": self.error}
        if self.report is not None:
            d.update(self.report)
        return d


@dataclass
class BenchResult:
    config: BenchConfig
    rows: list

    @property
    def failures(self):
        return [r for r in self.rows if r.error is not None]

    def row(self, method, q):
        for r in self.rows:
            if r.method == method and r.q == q:
                return r
        raise KeyError((method, q))

    def to_dict(self, wall_clock=True):
        cfg = asdict(self.config)
        cfg.pop("output_dir", None)
        rows = []
        for r in self.rows:
            d = r.to_dict()
            if not wall_clock:
                for k in WALL_CLOCK_FIELDS:
                    d.pop(k, None)
            rows.append(d)
        return {"config": cfg, "rows": rows, "n_failures": len(self.failures)}


def run_bench(config: BenchConfig, schema: Optional[ColumnSchema] = None) -> BenchResult:
    """Train and evaluate every (method, q) cell; failures are recorded, not raised."""
    train, test = load_train_test(config, schema)
    rows = []
    for q in config.q_values:
        for method in config.methods:
            row = BenchRow(method, q)
            try:
                t0 = time.perf_counter()
                model = fit_method(method, train, q, config.n_classifiers, config.scheme,
                                   config.weighting, config.hard_outputs, config.seed,
                                   config.learner_params)
                train_seconds = time.perf_counter() - t0
                report, pred = evaluate_model(model, test, train_seconds, with_curve=True)
                row.report = report.to_dict()
                row.predictions = pred
                row.labels = test.original_labels()
                if isinstance(model, QuantileEnsemble):
                    row.n_classifiers = len(model)
            except Exception as exc:  # one failed cell must not stop the others
                logger.exception("bench cell %s q=%s failed", method, q)
                row.error = f"{type(exc).__name__}: {exc}"
            rows.append(row)
    result = BenchResult(config, rows)
    if config.output_dir:
        write_artifacts(result, config.output_dir)
    return result


def _cell_name(row):
    return f"{row.method}_q{row.q:g}"


def format_table(result: BenchResult) -> str:
    lines = ["method\tq\tmean_pinball_loss\tsum_pinball_loss\tcoverage_below\t"
             "train_seconds\tpredict_seconds"]
    for r in result.rows:
        if r.error is not None:
            lines.append(f"{r.method}\t{r.q:g}\tFAILED: {r.error}")
            continue
        rep = r.report
        lines.append(
            f"{r.method}\t{r.q:g}\t{rep['mean_pinball_loss']:.6g}\t"
            f"{rep['sum_pinball_loss']:.6g}\t{rep['coverage_below']:.6f}\t"
            f"{rep['train_seconds']:.3f}\t{rep['predict_seconds']:.3f}"
        )
    return "\n".join(lines) + "\n"


def write_artifacts(result: BenchResult, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(result.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "table.tsv"), "w", encoding="utf-8") as fh:
        fh.write(format_table(result))
    for r in result.rows:
        if r.error is not None:
            continue
        name = _cell_name(r)
        with open(os.path.join(out_dir, f"predictions_{name}.csv"), "w", encoding="utf-8") as fh:
            fh.write("prediction,label\n")
            for p, y in zip(r.predictions, r.labels):
                fh.write(f"{float(p)!r},{float(y)!r}\n")
        curve = r.report.get("loss_curve")
        if curve:
            with open(os.path.join(out_dir, f"curve_{name}.dat"), "w", encoding="utf-8") as fh:
                for k, v in curve:
                    fh.write(f"{k} {v!r}\n")
