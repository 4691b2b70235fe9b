"""CSV ingestion, one-hot encoding, label normalization and splitting."""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np

from .core import Dataset, normalize_labels

NUMERIC = "numeric"
CATEGORICAL = "categorical"

BOSTON_TRAIN_SIZE = 450

logger = logging.getLogger(__name__)


@dataclass
class ColumnSchema:
    """Column kinds plus the index of the (numeric) label column.

    ``kinds`` may be shorter than the table or empty; unspecified columns
    are inferred (numeric if every cell parses as a float).
    """

    kinds: dict = field(default_factory=dict)
    label_index: int = -1

    @classmethod
    def from_file(cls, path) -> "ColumnSchema":
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        return cls(kinds=d.get("kinds", {}), label_index=int(d.get("label_index", -1)))

    def resolve(self, header, columns) -> tuple[list[str], int]:
        n = len(header)
        label = self.label_index % n if n else 0
        kinds = []
        for j, name in enumerate(header):
            kind = self.kinds.get(name, self.kinds.get(str(j)))
            if kind is None:
                kind = NUMERIC if all(_is_float(v) for v in columns[j]) else CATEGORICAL
            if kind not in (NUMERIC, CATEGORICAL):
                raise ValueError(f"column {name!r}: unknown kind {kind!r}")
            kinds.append(kind)
        if kinds[label] != NUMERIC:
            raise ValueError(f"label column {header[label]!r} must be numeric")
        return kinds, label


def _is_float(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


@dataclass
class Table:
    header: list[str]
    columns: list
    kinds: list[str]
    label_index: int

    @property
    def n_rows(self):
        return len(self.columns[0]) if self.columns else 0


def load_csv(path, schema: Optional[ColumnSchema] = None) -> Table:
    """Read a header-first, comma-separated UTF-8 file.

    Numeric columns are parsed to float arrays; categorical columns stay as
    strings. Empty cells are rejected rather than imputed.
    """
    schema = schema or ColumnSchema()
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such data file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise ValueError(f"{path}: missing header row")
    header, body = [h.strip() for h in rows[0]], rows[1:]
    if not body:
        raise ValueError(f"{path}: no data rows")
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise ValueError(
                f"{path}: line {i} has {len(r)} fields, expected {len(header)}"
            )
        for j, v in enumerate(r):
            if not v.strip():
                raise ValueError(f"{path}: line {i}, column {header[j]!r}: missing value")
    raw = [[r[j].strip() for r in body] for j in range(len(header))]
    kinds, label = schema.resolve(header, raw)
    columns = []
    for j, (kind, cells) in enumerate(zip(kinds, raw)):
        if kind == CATEGORICAL:
            columns.append(cells)
            continue
        vals = np.empty(len(cells))
        for i, c in enumerate(cells):
            try:
                vals[i] = float(c)
            except ValueError:
                raise ValueError(
                    f"{path}: line {i + 2}, column {header[j]!r}: "
                    f"cannot parse {c!r} as a number"
                ) from None
        columns.append(vals)
    return Table(header, columns, kinds, label)


def encode_features(table: Table, categories: Optional[dict] = None):
    """Feature matrix with categorical columns expanded to indicators.

    Category order is first appearance unless ``categories`` (as recorded
    from a training table) is supplied, in which case unseen values raise.
    """
    learned = {} if categories is None else dict(categories)
    blocks, names = [], []
    for j, (name, kind, col) in enumerate(zip(table.header, table.kinds, table.columns)):
        if j == table.label_index:
            continue
        if kind == NUMERIC:
            blocks.append(np.asarray(col, dtype=float).reshape(-1, 1))
            names.append(name)
            continue
        if categories is None:
            levels = list(dict.fromkeys(col))
            learned[name] = levels
        else:
            levels = learned[name]
        index = {v: k for k, v in enumerate(levels)}
        onehot = np.zeros((len(col), len(levels)))
        for i, v in enumerate(col):
            if v not in index:
                raise ValueError(f"column {name!r}: unseen category {v!r}")
            onehot[i, index[v]] = 1.0
        blocks.append(onehot)
        names.extend(f"{name}={v}" for v in levels)
    X = np.hstack(blocks) if blocks else np.zeros((table.n_rows, 0))
    return X, names, learned


def preprocess(table: Table, schema: Optional[ColumnSchema] = None, categories=None,
               normalization=None) -> Dataset:
    """One-hot encode features and min-max normalize labels.

    ``schema`` is accepted for symmetry with :func:`load_csv`; column kinds
    have already been resolved into ``table``. Passing ``normalization`` (and
    ``categories``) applies a training table's encoding to held-out data.
    """
    X, names, cats = encode_features(table, categories)
    y = np.asarray(table.columns[table.label_index], dtype=float)
    if normalization is None and y.min() == y.max():
        raise ValueError("label column is constant; cannot normalize labels")
    return Dataset.from_raw(X, y, normalization=normalization,
                            feature_names=names, categories=cats)


def renormalize(data: Dataset, normalization, check_range=False) -> Dataset:
    return Dataset(data.features, normalize_labels(data.original_labels(), normalization),
                   normalization, data.feature_names, data.categories,
                   check_range=check_range)


def split(data: Dataset, train_fraction: float, seed=0) -> tuple[Dataset, Dataset]:
    """Seeded shuffle split; both sides are normalized with training statistics."""
    m = data.n_samples
    if m < 2:
        raise ValueError("splitting requires at least 2 rows")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    n_train = int(round(train_fraction * m))
    if n_train < 1 or n_train > m - 1:
        raise ValueError(f"train_fraction {train_fraction} leaves an empty split for m={m}")
    perm = np.random.default_rng(seed).permutation(m)
    return split_indices(data, perm[:n_train], perm[n_train:])


def split_indices(data: Dataset, train_idx, test_idx) -> tuple[Dataset, Dataset]:
    """Train/test Datasets normalized with the training rows' label range.

    A training side with a single distinct label has no usable range; the
    source Dataset's normalization is kept instead when it has one.
    """
    y = data.original_labels()
    y_train = y[train_idx]
    lo, hi = float(y_train.min()), float(y_train.max())
    if lo < hi:
        norm = (lo, hi)
    elif data.normalization is not None:
        logger.warning("training split has constant labels; keeping the source normalization")
        norm = tuple(data.normalization)
    else:
        raise ValueError("training split has constant labels; cannot normalize")

    def part(idx, check):
        return Dataset(data.features[idx], normalize_labels(y[idx], norm), norm,
                       data.feature_names, data.categories, check_range=check)

    return part(train_idx, True), part(test_idx, False)


def load_pre_split(train_path, test_path, schema: Optional[ColumnSchema] = None):
    """Load a dataset shipped as separate train and test files."""
    train = preprocess(load_csv(train_path, schema), schema)
    test = preprocess(load_csv(test_path, schema), schema, categories=train.categories,
                      normalization=train.normalization)
    return train, test


def boston_path() -> str:
    return str(resources.files("quanting").joinpath("data/boston.csv"))


def load_boston() -> Dataset:
    """Boston Housing: 506 rows, 13 features, median home value label."""
    return preprocess(load_csv(boston_path()))


def boston_split(seed=0) -> tuple[Dataset, Dataset]:
    """450 / 56 train/test split of Boston Housing."""
    data = load_boston()
    return split(data, BOSTON_TRAIN_SIZE / data.n_samples, seed)


SYNTHETIC = ("linear-exponential", "heteroscedastic", "step")


def make_synthetic(name: str, m: int, seed=0) -> tuple[np.ndarray, np.ndarray]:
    """Synthetic regression data with known conditional quantiles.

    ``linear-exponential``: ``y = x1 + Exp(1)`` with ``x1 ~ U[0, 1]``.
    ``heteroscedastic``: ``y = sin(2 pi x1) + (0.2 + x2) * N(0, 1)``.
    ``step``: ``y = I(x1 >= 0.5) + 0.3 * U[0, 1]`` with two nuisance features.
    """
    rng = np.random.default_rng(seed)
    if name == "linear-exponential":
        X = rng.random((m, 1))
        y = X[:, 0] + rng.exponential(1.0, m)
    elif name == "heteroscedastic":
        X = rng.random((m, 2))
        y = np.sin(2 * np.pi * X[:, 0]) + (0.2 + X[:, 1]) * rng.standard_normal(m)
    elif name == "step":
        X = rng.random((m, 3))
        y = (X[:, 0] >= 0.5).astype(float) + 0.3 * rng.random(m)
    else:
        raise ValueError(f"unknown synthetic generator {name!r}; choose from {SYNTHETIC}")
    return X, y


def synthetic_dataset(name: str, m: int, seed=0) -> Dataset:
    X, y = make_synthetic(name, m, seed)
    return Dataset.from_raw(X, y, feature_names=[f"x{j + 1}" for j in range(X.shape[1])])
