import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from quanting import serialization
from quanting.bench import BenchConfig, curve_sizes, run_bench
from quanting.cli import main
from quanting.core import coverage_below, empirical_quantile, mean_pinball_loss
from quanting.dataio import boston_split

BOSTON_FRACTION = str(450 / 506)


def read_predictions(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return (np.array([float(r["prediction"]) for r in rows]),
            np.array([float(r["label"]) for r in rows]))


def test_train_count_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        assert main(["train", "--data", "boston", "--method", "quanting-tree", "--q", "0.5",
                     "--n-classifiers", "100", "--scheme", "uniform", "--seed", "7",
                     "--output", str(out)]) == 0
    info = json.loads(capsys.readouterr().out.splitlines()[-1])
    assert info["n_classifiers"] == 100 and info["train_seconds"] >= 0
    assert a.read_bytes() == b.read_bytes()
    assert len(json.loads(a.read_text())["classifiers"]) == 100


def test_train_adaptive_count_matches_grid(tmp_path):
    out = tmp_path / "m.json"
    assert main(["train", "--data", "boston", "--q", "0.5", "--seed", "7",
                 "--output", str(out)]) == 0
    model, _ = serialization.load_model(out)
    # tied labels at the top of the range collapse a few adaptive thresholds
    assert 90 <= len(model) <= 100 and len(model) == len(model.grid)


@pytest.mark.parametrize("q", ["0.0", "1.0", "-0.2"])
def test_train_rejects_bad_q(tmp_path, capsys, q):
    assert main(["train", "--data", "boston", "--q", q, "--output", str(tmp_path / "m")]) == 2
    assert "q must be in (0,1)" in capsys.readouterr().err


def test_missing_data_file(tmp_path, capsys):
    code = main(["train", "--data", str(tmp_path / "none.csv"), "--q", "0.5",
                 "--output", str(tmp_path / "m")])
    assert code == 2 and "no such data file" in capsys.readouterr().err


def test_eval_constant_on_training_data(tmp_path, capsys):
    rng = np.random.default_rng(5)
    m = 301
    data = tmp_path / "d.csv"
    with open(data, "w") as fh:
        fh.write("x,y\n")
        for x, y in zip(rng.random(m), rng.standard_normal(m)):
            fh.write(f"{float(x)!r},{float(y)!r}\n")
    model = tmp_path / "c.json"
    assert main(["train", "--data", str(data), "--method", "constant", "--q", "0.5",
                 "--output", str(model)]) == 0
    preds = tmp_path / "p.csv"
    assert main(["eval", "--data", str(data), "--model", str(model),
                 "--predictions", str(preds), "--report", str(tmp_path / "r.json")]) == 0
    report = json.loads((tmp_path / "r.json").read_text())
    assert abs(report["coverage_below"] - (m // 2) / m) <= 1 / m
    pred, y = read_predictions(preds)
    assert np.sum(y < pred[0]) == round(report["coverage_below"] * m)


def test_eval_oracle_predictor():
    y = np.array([3.0, 1.0, 4.0, 1.5])
    assert mean_pinball_loss(y, y, 0.3) == 0.0


def test_eval_boston_fields_finite(tmp_path, capsys):
    model = tmp_path / "m.json"
    common = ["--data", "boston", "--train-fraction", BOSTON_FRACTION, "--seed", "0"]
    assert main(["train", *common, "--q", "0.9", "--n-classifiers", "20",
                 "--output", str(model)]) == 0
    capsys.readouterr()
    assert main(["eval", *common, "--model", str(model)]) == 0
    report = json.loads(capsys.readouterr().out)
    for key in ("mean_pinball_loss", "sum_pinball_loss", "coverage_below", "predict_seconds"):
        assert math.isfinite(report[key])
    assert report["n_examples"] == 56
    assert report["loss_curve"][-1][1] == report["mean_pinball_loss"]


def test_eval_arity_mismatch(tmp_path, capsys):
    model = tmp_path / "m.json"
    data = tmp_path / "d.csv"
    data.write_text("a,y\n1,2\n2,3\n3,5\n")
    assert main(["train", "--data", str(data), "--method", "linear", "--q", "0.5",
                 "--output", str(model)]) == 0
    assert main(["eval", "--data", "boston", "--model", str(model)]) == 2
    assert "arity" in capsys.readouterr().err


def test_predict_writes_column(tmp_path):
    model, out = tmp_path / "m.json", tmp_path / "p.csv"
    assert main(["train", "--data", "synthetic:step", "--synthetic-size", "300",
                 "--n-classifiers", "8", "--q", "0.5", "--output", str(model)]) == 0
    assert main(["predict", "--data", "synthetic:step", "--synthetic-size", "300",
                 "--model", str(model), "--output", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "prediction" and len(lines) == 301


@pytest.fixture(scope="module")
def bench_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    code = main(["bench", "--data", "boston", "--methods", "linear", "quanting-tree", "constant",
                 "--output-dir", str(out)])
    return code, out


def test_bench_rows_and_artifacts(bench_dir):
    code, out = bench_dir
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert len(report["rows"]) == 9 and report["n_failures"] == 0
    pairs = {(r["method"], r["q"]) for r in report["rows"] if r["method"] != "constant"}
    assert len(pairs) == 6
    table = (out / "table.tsv").read_text().splitlines()
    assert len(table) == 10


def test_bench_curve(bench_dir):
    _, out = bench_dir
    report = json.loads((out / "report.json").read_text())
    row = next(r for r in report["rows"] if r["method"] == "quanting-tree" and r["q"] == 0.9)
    curve = row["loss_curve"]
    assert [k for k, _ in curve][:-1] == [1, 2, 5, 10, 20, 50]
    assert curve[-1][0] == row["n_classifiers"]
    assert all(math.isfinite(v) for _, v in curve)
    assert curve[-1][1] == row["mean_pinball_loss"]
    dat = (out / "curve_quanting-tree_q0.9.dat").read_text().split()
    assert float(dat[-1]) == row["mean_pinball_loss"]


def test_curve_sizes_at_full_length():
    assert curve_sizes(100) == [1, 2, 5, 10, 20, 50, 100]
    assert curve_sizes(3) == [1, 2, 3]


def test_bench_constant_row_recomputes(bench_dir):
    _, out = bench_dir
    report = json.loads((out / "report.json").read_text())
    train, test = boston_split(0)
    for q in (0.1, 0.5, 0.9):
        row = next(r for r in report["rows"] if r["method"] == "constant" and r["q"] == q)
        lo, hi = train.normalization
        value = lo + (hi - lo) * empirical_quantile(train.labels, q)
        expected = mean_pinball_loss(np.full(test.n_samples, value), test.original_labels(), q)
        assert row["mean_pinball_loss"] == pytest.approx(expected, rel=1e-12)


def test_bench_coverage_recomputes_from_predictions(bench_dir):
    _, out = bench_dir
    report = json.loads((out / "report.json").read_text())
    for row in report["rows"]:
        pred, y = read_predictions(out / f"predictions_{row['method']}_q{row['q']:g}.csv")
        assert coverage_below(pred, y) == row["coverage_below"]
        assert mean_pinball_loss(pred, y, row["q"]) == pytest.approx(row["mean_pinball_loss"],
                                                                     rel=1e-12)


def test_bench_determinism():
    config = dict(methods=("quanting-logreg", "linear"), n_classifiers=10, q_values=(0.25,))
    a = run_bench(BenchConfig(**config)).to_dict(wall_clock=False)
    b = run_bench(BenchConfig(**config)).to_dict(wall_clock=False)
    assert a == b


def test_bench_failure_is_recorded(capsys):
    # a negative depth is rejected by the learner config, so only the quanting cell fails
    result = run_bench(BenchConfig(methods=("quanting-tree", "constant"), q_values=(0.5,),
                                   n_classifiers=5, learner_params={"tree_max_depth": -1}))
    assert len(result.failures) == 1
    assert result.row("constant", 0.5).error is None
    code = main(["bench", "--data", "boston", "--methods", "quanting-tree", "constant",
                 "--q", "0.5", "--n-classifiers", "5", "--max-depth", "-1"])
    assert code == 1
    assert "FAILED" in capsys.readouterr().out


def test_bench_config_validation():
    with pytest.raises(ValueError, match="q must be in"):
        BenchConfig(q_values=(0.5, 1.0))
    with pytest.raises(ValueError, match="method"):
        BenchConfig(methods=())


def test_console_script():
    proc = subprocess.run([sys.executable, "-m", "quanting.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("train", "predict", "eval", "bench"):
        assert cmd in proc.stdout
