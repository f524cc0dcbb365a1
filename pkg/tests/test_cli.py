import json

import numpy as np
import pytest

from rwgc.cli import main
from rwgc.rwg import ReturnMatrix


@pytest.fixture
def matrix_csv(tmp_path):
    S = -np.abs(np.random.default_rng(0).normal(3.0, 1.0, (30, 6)))
    path = tmp_path / "S.csv"
    ReturnMatrix(S, {}).to_csv(path)
    return path


def test_bound(capsys):
    assert main(["bound", "--links", "0.95,0.70", "--epsilon", "0.001"]) == 0
    assert capsys.readouterr().out.strip() == "bound 0.00235"


def test_bound_verify(capsys, tmp_path):
    out = tmp_path / "b.json"
    assert main(["bound", "--links", "1.0", "--samples", "1000", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["violations"] == 0


def test_missing_matrix(capsys):
    assert main(["metrics", "--matrix", "missing.csv"]) == 1
    assert "not found" in capsys.readouterr().err


def test_unknown_flag(capsys):
    assert main(["metrics", "--matrix", "x.csv", "--frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err


def test_no_command(capsys):
    assert main([]) == 1


def test_bad_config(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text('{"profile": "huge"}')
    assert main(["suite", "--config", str(p)]) == 1


def test_metrics_and_sweep(matrix_csv, tmp_path, capsys):
    out = tmp_path / "m.json"
    assert main(["metrics", "--matrix", str(matrix_csv), "--bins", "20", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["pic_config"]["bins"] == 20 and rep["pic"] >= 0
    capsys.readouterr()
    assert main(["metrics", "--matrix", str(matrix_csv), "--lambda-sweep", "0.5,1,2"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert [r["temperature"] for r in rows] == [0.5, 1.0, 2.0]


def test_stats_and_compare(matrix_csv, tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["stats", "--matrix", str(matrix_csv), "--k", "100", "--bins", "20", "--out", str(a)]) == 0
    assert main(["--seed", "3", "stats", "--matrix", str(matrix_csv), "--k", "100", "--bins", "20",
                 "--out", str(b)]) == 0
    capsys.readouterr()
    assert main(["compare", str(a), str(b), "--labels", "x,y"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "task_a,task_b,metric,t,df,p" and len(lines) == 5
    assert lines[1].startswith("x,x,pic,0,")
    assert main(["compare", str(a), "--labels", "x,y"]) == 1


def test_rwg_cell_matches_matrix(tmp_path, capsys):
    out = tmp_path / "run"
    base = ["rwg", "--links", "1.0", "--reward", "sparse", "--policies", "3", "--episodes", "4"]
    assert main(base + ["--seed", "2", "--out", str(out)]) == 0
    S = ReturnMatrix.from_csv(out / "returns.csv").S
    capsys.readouterr()
    assert main(base + ["--seed", "2", "--cell", "2,3"]) == 0
    assert float(capsys.readouterr().out) == S[2, 3]
    assert (out / "aggregate.csv").is_file() and (out / "variance_cloud.csv").is_file()


def test_rwg_from_config_task(capsys):
    assert main(["--config", "paper_suite.json", "rwg", "--task", "2link_dense", "--policies", "2",
                 "--episodes", "2"]) == 0
    assert json.loads(capsys.readouterr().out)["shape"] == [2, 2]
    assert main(["rwg", "--task", "2link_dense"]) == 1
    assert main(["rwg", "--config", "paper_suite.json", "--task", "nope"]) == 1


def test_oracle(capsys):
    assert main(["oracle"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 6 and "FAIL" not in out


def test_suite_with_global_flags_after_command(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("RWGC_THREADS", raising=False)
    out = tmp_path / "results"
    argv = ["suite", "--config", "paper_suite.json", "--seed", "7", "--out", str(out), "--policies", "20",
            "--episodes", "3", "--k", "100", "--quiet"]
    assert main(argv) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["master_seed"] == 7 and len(manifest["tasks"]) == 7
    assert "7/7 tasks ok" in capsys.readouterr().out


def test_threads_env_validation(monkeypatch):
    monkeypatch.setenv("RWGC_THREADS", "0")
    assert main(["bound", "--links", "1.0"]) == 1
