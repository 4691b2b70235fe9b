"""Command-line interface: ``quanting {train,predict,eval,bench}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

import numpy as np

from . import serialization
from .bench import METHODS, BenchConfig, evaluate_model, fit_method, format_table, load_data, run_bench
from .dataio import ColumnSchema, encode_features, load_csv, split, Table
from .core import Dataset
from .reduction import QuantileEnsemble

logger = logging.getLogger("quanting")


def _schema(args):
    if getattr(args, "schema", None):
        return ColumnSchema.from_file(args.schema)
    return ColumnSchema(label_index=args.label_index)


def _learner_params(args):
    params = {}
    for flag, key in (("max_depth", "tree_max_depth"), ("min_leaf_weight", "tree_min_leaf_weight"),
                      ("l2", "logreg_l2"), ("max_iter", "logreg_max_iterations")):
        v = getattr(args, flag, None)
        if v is not None:
            params[key] = v
    return params


def _add_data_args(p):
    p.add_argument("--data", required=True,
                   help="CSV path, 'boston', or 'synthetic:<name>'")
    p.add_argument("--schema", help="JSON schema file with 'kinds' and 'label_index'")
    p.add_argument("--label-index", type=int, default=-1)
    p.add_argument("--train-fraction", type=float, default=None,
                   help="split the data and use the train (or test) side")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--synthetic-size", type=int, default=2000)


def _add_model_args(p):
    p.add_argument("--n-classifiers", type=int, default=100)
    p.add_argument("--scheme", choices=("adaptive", "uniform"), default="adaptive")
    p.add_argument("--weighting", choices=("native", "rejection"), default="native")
    p.add_argument("--hard-outputs", action="store_true",
                   help="threshold classifier scores at 0.5 before averaging")
    p.add_argument("--max-depth", type=int)
    p.add_argument("--min-leaf-weight", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--max-iter", type=int)


def _encoding(data: Dataset, label_name=None):
    return {"feature_names": data.feature_names, "categories": data.categories,
            "label_name": label_name}


def _select(data, args, side):
    if args.train_fraction is None:
        return data
    train, test = split(data, args.train_fraction, args.seed)
    return train if side == "train" else test


def cmd_train(args):
    data = _select(load_data(args.data, _schema(args), args.synthetic_size, args.seed), args, "train")
    t0 = time.perf_counter()
    model = fit_method(args.method, data, args.q, args.n_classifiers, args.scheme,
                       args.weighting, args.hard_outputs, args.seed, _learner_params(args))
    seconds = time.perf_counter() - t0
    serialization.save_model(model, args.output, _encoding(data))
    n = len(model) if isinstance(model, QuantileEnsemble) else None
    print(json.dumps({"model": args.output, "method": args.method, "q": float(args.q),
                      "n_classifiers": n, "train_seconds": seconds}, sort_keys=True))
    return 0


def _load_eval_data(args, encoding):
    """Encode a raw file with the training column encoding; labels stay in original units."""
    if args.data == "boston" or args.data.startswith("synthetic:"):
        data = load_data(args.data, None, args.synthetic_size, args.seed)
        data = _select(data, args, "test")
        return data.features, data.original_labels()
    table: Table = load_csv(args.data, _schema(args))
    categories = encoding.get("categories") if encoding else None
    X, _, _ = encode_features(table, categories if categories else None)
    y = np.asarray(table.columns[table.label_index], dtype=float)
    if args.train_fraction is not None:
        perm = np.random.default_rng(args.seed).permutation(len(y))
        test_idx = perm[int(round(args.train_fraction * len(y))):]
        X, y = X[test_idx], y[test_idx]
    return X, y


def cmd_predict(args):
    model, encoding = serialization.load_model(args.model)
    X, _ = _load_eval_data(args, encoding)
    pred = model.predict(X)
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        out.write("prediction\n")
        for p in pred:
            out.write(f"{float(p)!r}\n")
    finally:
        if args.output:
            out.close()
    return 0


def cmd_eval(args):
    model, encoding = serialization.load_model(args.model)
    X, y = _load_eval_data(args, encoding)
    test = Dataset(X, y)
    report, pred = evaluate_model(model, test, with_curve=isinstance(model, QuantileEnsemble))
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    print(text)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    if args.predictions:
        with open(args.predictions, "w", encoding="utf-8") as fh:
            fh.write("prediction,label\n")
            for p, v in zip(pred, y):
                fh.write(f"{float(p)!r},{float(v)!r}\n")
    return 0


def cmd_bench(args):
    config = BenchConfig(
        data=args.data,
        test_data=args.test_data,
        q_values=tuple(args.q),
        methods=tuple(args.methods),
        n_classifiers=args.n_classifiers,
        scheme=args.scheme,
        weighting=args.weighting,
        hard_outputs=args.hard_outputs,
        seed=args.seed,
        train_fraction=args.train_fraction,
        synthetic_size=args.synthetic_size,
        learner_params=_learner_params(args),
        output_dir=args.output_dir,
    )
    result = run_bench(config, _schema(args))
    sys.stdout.write(format_table(result))
    return 1 if result.failures else 0


def build_parser():
    parser = argparse.ArgumentParser(prog="quanting", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model and write it to a file")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--method", choices=METHODS, default="quanting-tree")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--output", "-o", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write predictions for a data file")
    _add_data_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="report pinball loss and coverage of a model")
    _add_data_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--report", help="also write the report to this file")
    p.add_argument("--predictions", help="dump per-example predictions as CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="compare methods across quantiles")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--test-data", help="held-out CSV when the dataset ships pre-split")
    p.add_argument("--q", type=float, nargs="+", default=[0.1, 0.5, 0.9])
    p.add_argument("--methods", nargs="+", choices=METHODS, default=list(METHODS))
    p.add_argument("--output-dir", "-o", default=None)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
