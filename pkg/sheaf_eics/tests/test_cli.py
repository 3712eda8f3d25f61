"""
Unit tests for cli.py
"""

import pytest
import sys
import os
import json

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.baselines import ActivationBatch
from src.circuit import ActivationState
from src.cli import EXIT_INPUT, EXIT_NUMERIC, EXIT_OK, main
from src.file_formats import load_result, save_batch


def write_json(path, doc):
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def chain_files(tmp_path, a=(1.0, 2.0), b=(2.0, 4.0)):
    """a → b（2倍写像）の回路と活性化"""
    circuit = {
        "version": "eics/1",
        "nodes": [{"id": "a", "dim": 2}, {"id": "b", "dim": 2}],
        "edges": [{"src": "a", "dst": "b", "rows": 2, "cols": 2, "matrix": [2.0, 0.0, 0.0, 2.0]}],
        "inputs": ["a"],
        "outputs": ["b"],
    }
    acts = {"version": "eics/1", "kind": "activations", "activations": {"a": list(a), "b": list(b)}}
    return write_json(tmp_path / "circuit.json", circuit), write_json(tmp_path / "acts.json", acts)


def path3_file(tmp_path, connected=True):
    edges = [{"src": "a", "dst": "b", "rows": 1, "cols": 1, "matrix": [1.0]}]
    if connected:
        edges.append({"src": "b", "dst": "c", "rows": 1, "cols": 1, "matrix": [1.0]})
    doc = {
        "version": "eics/1",
        "nodes": [{"id": n, "dim": 1} for n in "abc"],
        "edges": edges,
        "inputs": ["a"],
        "outputs": ["b"],
    }
    return write_json(tmp_path / "p3.json", doc)


# ----------------------------------------------------------------------
# validate
# ----------------------------------------------------------------------
def test_validate_ok_and_violations(tmp_path, capsys):
    """validate の終了コードのテスト"""
    circuit, _ = chain_files(tmp_path)
    assert main(["validate", "--circuit", circuit]) == EXIT_OK
    assert "✓" in capsys.readouterr().out

    doc = json.loads(open(circuit, encoding="utf-8").read())
    doc["edges"][0]["rows"], doc["edges"][0]["cols"] = 1, 4
    bad = write_json(tmp_path / "bad.json", doc)
    assert main(["validate", "--circuit", bad]) == EXIT_INPUT
    assert "✗" in capsys.readouterr().err


def test_validate_missing_file(tmp_path, capsys):
    """存在しないファイルで入力エラーになるテスト"""
    assert main(["validate", "--circuit", str(tmp_path / "none.json")]) == EXIT_INPUT


# ----------------------------------------------------------------------
# score
# ----------------------------------------------------------------------
def test_score_consistent_chain(tmp_path, capsys):
    """整合的な活性化でスコアが正規化創発に等しいテスト"""
    circuit, acts = chain_files(tmp_path)
    out = str(tmp_path / "r.json")
    assert main(["score", "--circuit", circuit, "--activations", acts, "--output", out]) == EXIT_OK
    assert "EICS" in capsys.readouterr().out

    result = load_result(out)["result"]
    assert result["c_sh"] == 0
    assert result["score"] == result["emergence"]
    assert result["lambda2"] is None


def test_score_missing_activations(tmp_path, capsys):
    """活性化ファイルがない場合に終了コード 2 のテスト"""
    circuit, _ = chain_files(tmp_path)
    code = main(["score", "--circuit", circuit, "--activations", str(tmp_path / "missing.json")])
    assert code == EXIT_INPUT
    assert "入力エラー" in capsys.readouterr().err


def test_score_outputs_are_reproducible(tmp_path, capsys):
    """同じ入力から同じ結果ファイルになるテスト"""
    circuit, acts = chain_files(tmp_path, b=(1.0, -1.0))
    paths = [str(tmp_path / f"r{i}.json") for i in range(2)]
    for p in paths:
        assert main(["score", "--circuit", circuit, "--activations", acts, "--output", p, "--lambda2"]) == EXIT_OK
    assert open(paths[0], "rb").read() == open(paths[1], "rb").read()
    assert load_result(paths[0])["result"]["lambda2"] is not None


def test_score_fast_matches_exact_on_diagonal(tmp_path, capsys):
    """対角な写像では高速モードが厳密モードと一致するテスト"""
    circuit, acts = chain_files(tmp_path, b=(1.0, 3.0))
    exact, fast = str(tmp_path / "exact.json"), str(tmp_path / "fast.json")
    assert main(["score", "--circuit", circuit, "--activations", acts, "--output", exact]) == EXIT_OK
    assert main(["score", "--circuit", circuit, "--activations", acts, "--output", fast,
                 "--mode", "fast", "--seed", "5"]) == EXIT_OK
    e, f = load_result(exact)["result"], load_result(fast)["result"]
    assert f["ei"]["ei_macro"] == pytest.approx(e["ei"]["ei_macro"], abs=1e-10)
    assert f["score"] == pytest.approx(e["score"], abs=1e-10)
    assert f["seed"] == 5


def test_score_partition_from_file_missing(tmp_path, capsys):
    """ファイルにパーティションがない場合に入力エラーになるテスト"""
    circuit, acts = chain_files(tmp_path)
    assert main(["score", "--circuit", circuit, "--activations", acts, "--partition", "file"]) == EXIT_INPUT


def test_score_invalid_alpha(tmp_path, capsys):
    """不正な α で入力エラーになるテスト"""
    circuit, acts = chain_files(tmp_path)
    assert main(["score", "--circuit", circuit, "--activations", acts, "--alpha", "0"]) == EXIT_INPUT


# ----------------------------------------------------------------------
# lambda2
# ----------------------------------------------------------------------
def test_lambda2_path(tmp_path, capsys):
    """P3 で λ2 = 1、β = 0.5 で 1.5 のテスト"""
    p3 = path3_file(tmp_path)
    assert main(["lambda2", "--circuit", p3]) == EXIT_OK
    assert "λ2 = 1 (" in capsys.readouterr().out

    out = str(tmp_path / "l2.json")
    assert main(["lambda2", "--circuit", p3, "--beta", "0.5", "--output", out]) == EXIT_OK
    doc = load_result(out)
    assert doc["kind"] == "lambda2"
    assert doc["result"]["lambda2"] == pytest.approx(1.5, abs=1e-8)
    assert doc["config"]["beta"] == 0.5


def test_lambda2_disconnected(tmp_path, capsys):
    """非連結な回路で λ2 = 0 と警告のテスト"""
    p3 = path3_file(tmp_path, connected=False)
    out = str(tmp_path / "l2.json")
    assert main(["lambda2", "--circuit", p3, "--output", out]) == EXIT_OK
    assert "⚠️" in capsys.readouterr().out
    assert load_result(out)["result"]["lambda2"] == 0


# ----------------------------------------------------------------------
# toy-sweep と baselines
# ----------------------------------------------------------------------
def test_toy_sweep_stdout(tmp_path, capsys):
    """toy-sweep が標準出力に CSV を書くテスト"""
    assert main(["toy-sweep", "--taus", "0", "--n-seeds", "1", "--dim", "4"]) == EXIT_OK
    captured = capsys.readouterr()
    lines = captured.out.splitlines()
    assert lines[0].startswith("tau,eics_mean")
    assert lines[1].startswith("0,")
    assert len(lines) == 2
    assert "⚠️" in captured.err


def test_toy_sweep_files(tmp_path, capsys):
    """toy-sweep の CSV、図用データ、gnuplot、結果ファイルのテスト"""
    csv, plot, gp, res = (str(tmp_path / n) for n in ("s.csv", "p.csv", "fig.gp", "s.json"))
    args = ["toy-sweep", "--taus", "0", "1", "--n-seeds", "2", "--dim", "4", "--seed", "7",
            "--output", csv, "--plot-data", plot, "--gnuplot", gp, "--result", res]
    assert main(args) == EXIT_OK
    assert len(open(csv, encoding="utf-8").read().splitlines()) == 3
    assert open(plot, encoding="utf-8").readline().strip() == "tau,eics,invcsh,dei"
    assert plot in open(gp, encoding="utf-8").read()
    doc = load_result(res)
    assert doc["config"]["toy"]["base_seed"] == 7
    assert doc["config"]["toy"]["taus"] == [0, 1]


def test_baselines(tmp_path, capsys):
    """baselines サブコマンドのテスト"""
    circuit, acts = chain_files(tmp_path, a=(1.0, 2.0), b=(2.0, 4.0))
    rng = np.random.default_rng(0)
    states = []
    for _ in range(5):
        x = rng.normal(size=2)
        states.append(ActivationState({"a": x, "b": 2.0 * x}))
    batch = str(tmp_path / "batch.json")
    save_batch(ActivationBatch(states), batch)

    out = str(tmp_path / "b.json")
    assert main(["baselines", "--circuit", circuit, "--activations", acts, "--batch", batch,
                 "--ridge", "0", "--output", out]) == EXIT_OK
    result = load_result(out)["result"]
    assert result["eac"]["value"] == pytest.approx(1.0)
    assert result["ear"]["value"] == pytest.approx(0.0, abs=1e-10)

    assert main(["baselines", "--circuit", circuit]) == EXIT_INPUT


def test_baselines_singular_is_numeric_error(tmp_path, capsys):
    """特異な正規方程式で終了コード 3 のテスト"""
    circuit, _ = chain_files(tmp_path)
    batch = str(tmp_path / "batch.json")
    save_batch(ActivationBatch([ActivationState({"a": [1.0, 0.0], "b": [2.0, 0.0]})]), batch)
    assert main(["baselines", "--circuit", circuit, "--batch", batch, "--ridge", "0"]) == EXIT_NUMERIC


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
