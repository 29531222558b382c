import json
import subprocess
import sys

import numpy as np
import pytest

from robustrank.cli import main
from robustrank.graph import complete_graph_dataset
from robustrank.io import write_comparisons

THREE = "rater,item_i,item_j,value\na,A,B,1\nb,A,B,1\nc,A,B,-1\n"


@pytest.fixture
def three_csv(tmp_path):
    p = tmp_path / "three.csv"
    p.write_text(THREE)
    return p


@pytest.fixture
def planted_csv(tmp_path):
    n = 10
    s_star = np.arange(n, 0, -1.0)
    ds = complete_graph_dataset(n, s_star)
    y = ds.values.copy()
    y[17] = -y[17]
    p = tmp_path / "planted.csv"
    write_comparisons(ds.with_values(y), p)
    return p


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_rank(three_csv, capsys):
    code, out, _ = run(["rank", "--input", three_csv], capsys)
    rep = json.loads(out)
    assert code == 0
    assert rep["items"]["A"] - rep["items"]["B"] == pytest.approx(1 / 3)
    assert rep["method"] == "ls" and rep["outliers"] == [] and "khat" not in rep


def test_rank_disconnected(tmp_path, capsys):
    p = tmp_path / "d.csv"
    p.write_text("rater,item_i,item_j,value\na,A,B,1\nb,C,D,2\n")
    _, out, _ = run(["rank", "--input", p], capsys)
    assert json.loads(out)["components"] == [["A", "B"], ["C", "D"]]


def test_detect_iht_planted(planted_csv, tmp_path, capsys):
    out = tmp_path / "r.json"
    code, _, _ = run(["detect", "--input", planted_csv, "--method", "iht", "--k", 1, "--output", out], capsys)
    rep = json.loads(out.read_text())
    assert code == 0 and rep["converged"]
    assert [o["row_index"] for o in rep["outliers"]] == [17]
    assert rep["params"]["k"] == 1 and rep["params"]["seed"] == 0
    assert rep["params"]["epsilon"] > 0


def test_detect_ilts_with_matrix(three_csv, tmp_path, capsys):
    m = tmp_path / "m.csv"
    code, out, _ = run(["detect", "--input", three_csv, "--method", "ilts", "--k", 1, "--matrix", m], capsys)
    assert code == 0
    assert [o["row_index"] for o in json.loads(out)["outliers"]] == [2]
    assert m.read_text() == ",A,B\nA,0,2\nB,1,0\n"


def test_detect_alts_consistent(tmp_path, capsys):
    p = tmp_path / "c.csv"
    p.write_text("rater,item_i,item_j,value\na,A,B,1\na,B,C,1\na,A,C,1\n")
    code, out, _ = run(["detect", "--input", p, "--method", "alts"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["khat"] == 0 and rep["outliers"] == []
    assert rep["params"]["beta1"] == 0.75 and rep["params"]["beta2"] == 1.03
    assert rep["params"]["correction"] is False


def test_detect_lasso_k_zero(three_csv, capsys):
    code, out, _ = run(["detect", "--input", three_csv, "--method", "lasso", "--k", 0], capsys)
    assert code == 0 and json.loads(out)["outliers"] == []


def test_detect_lasso_lambda(three_csv, capsys):
    code, out, _ = run(["detect", "--input", three_csv, "--method", "lasso", "--lambda", 0.5], capsys)
    assert code == 0 and [o["row_index"] for o in json.loads(out)["outliers"]] == [2]


@pytest.mark.parametrize("extra, msg", [
    (["--method", "alts", "--k", "1"], "not allowed"),
    (["--method", "iht"], "requires --k"),
    (["--method", "lasso"], "exactly one"),
    (["--method", "ilts", "--k", "1", "--lambda", "1"], "only applies"),
    (["--method", "alts", "--beta1", "1.5"], "beta"),
    (["--method", "iht", "--k", "9"], "--k"),
])
def test_detect_usage_errors(three_csv, capsys, extra, msg):
    code, _, err = run(["detect", "--input", three_csv, *extra], capsys)
    assert code == 1 and msg in err


def test_detect_alts_needs_dichotomous(tmp_path, capsys):
    p = tmp_path / "c.csv"
    p.write_text("rater,item_i,item_j,value\na,A,B,0.5\n")
    code, _, err = run(["detect", "--input", p, "--method", "alts"], capsys)
    assert code == 1 and "+1 or -1" in err


def test_nonconverged_exit(planted_csv, capsys):
    argv = ["detect", "--input", planted_csv, "--method", "iht", "--k", 3, "--max-iters", 1, "--epsilon", 1e-300]
    code, out, _ = run(argv, capsys)
    assert code == 3 and json.loads(out)["converged"] is False
    code, _, _ = run(argv + ["--allow-nonconverged"], capsys)
    assert code == 0


def test_malformed_input(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("rater,item_i,item_j,value\na,X,X,1\n")
    code, _, err = run(["rank", "--input", p], capsys)
    assert code == 1 and ":2:" in err


def test_unknown_flag(three_csv):
    with pytest.raises(SystemExit) as info:
        main(["rank", "--input", str(three_csv), "--frobnicate"])
    assert info.value.code == 2


def test_check_complete_graph(capsys):
    code, out, _ = run(["check", "--complete-graph", 10, "--k", 1], capsys)
    rep = json.loads(out)
    assert code == 0
    assert rep["theta"] == pytest.approx(0.4, abs=1e-9)
    assert rep["feasible_theorem2"] and rep["config"]["k"] == 1


def test_check_k_zero(capsys):
    _, out, _ = run(["check", "--complete-graph", 5, "--k", 0], capsys)
    rep = json.loads(out)
    assert rep["theta"] == rep["mu"] == rep["eta"] == rep["phi"] == rep["epsilon"] == 0


def test_check_ground_truth(three_csv, tmp_path, capsys):
    gt = tmp_path / "gt.json"
    gt.write_text(json.dumps({"s_star": [0.5, -0.5], "E_star": [0, 0, -2], "N_star": [0, 0, 0]}))
    code, out, _ = run(["check", "--input", three_csv, "--k", 1, "--with-ground-truth", gt], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["epsilon"] is not None


def test_check_budget_refusal(capsys):
    code, _, err = run(["check", "--complete-graph", 12, "--k", 3, "--budget", 100], capsys)
    assert code == 1 and "refused" in err


def test_simulate_outputs_and_determinism(tmp_path, capsys):
    args = ["simulate", "--sn", "200", "--op", "5%,10%", "--trials", 2, "--methods", "iht,alts", "--per-trial"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(args + ["--out-dir", a], capsys)[0] == 0
    assert run(args + ["--out-dir", b], capsys)[0] == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == ["config.json", "metrics.csv", "timing_alts.csv", "timing_iht.csv", "trials.csv"]

    def strip_seconds(text):
        rows = [line.split(",") for line in text.splitlines()]
        k = rows[0].index("seconds")
        return [r[:k] + r[k + 1:] for r in rows]

    for name in ("metrics.csv", "trials.csv"):
        assert strip_seconds((a / name).read_text()) == strip_seconds((b / name).read_text())
    cfg = json.loads((a / "config.json").read_text())
    assert cfg["op"] == [0.05, 0.1] and cfg["seed"] == 0
    assert (a / "timing_iht.csv").read_text().splitlines()[0] == "time (s),OP=5%,OP=10%"


def test_simulate_single_trial_matches_aggregate(tmp_path, capsys):
    out = tmp_path / "o"
    run(["simulate", "--sn", 150, "--op", "0.1", "--trials", 1, "--methods", "ilts", "--per-trial", "--out-dir", out], capsys)
    agg = (out / "metrics.csv").read_text().splitlines()[1].split(",")
    per = (out / "trials.csv").read_text().splitlines()[1].split(",")
    assert agg[3:6] == per[4:7]


def test_simulate_default_grid():
    from robustrank.cli import build_parser
    args = build_parser().parse_args(["simulate", "--out-dir", "x"])
    assert args.sn == [1000, 2000, 3000]
    assert args.op == pytest.approx([0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4])


def test_bench(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"sn": 300, "op": 0.05, "trials": 2, "methods": ["iht", "lasso"]}))
    code, out, err = run(["bench", "--spec", spec], capsys)
    lines = out.splitlines()
    assert code == 0 and lines[0] == "SN,OP,iht,lasso" and len(lines) == 2
    assert lines[1].startswith("300,0.05,")
    assert "iht:" in err and "lasso:" in err


def test_bench_missing_spec(tmp_path, capsys):
    code, _, err = run(["bench", "--spec", tmp_path / "nope.json"], capsys)
    assert code == 1 and "not found" in err


def test_module_entry_point(three_csv):
    res = subprocess.run([sys.executable, "-m", "robustrank", "rank", "--input", str(three_csv)],
                         capture_output=True, text=True, check=True)
    assert json.loads(res.stdout)["method"] == "ls"
