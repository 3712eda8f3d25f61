"""
Unit tests for toy.py
"""

import pytest
import sys
import os

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.circuit import forward_activations, validate_circuit, validate_partition
from src.errors import ConfigError
from src.rng import STREAM_DECOHERENCE, STREAM_MAIN, stream
from src.sheaf import coboundary_apply
from src.toy import (
    BASELINE_COLUMNS,
    CSV_COLUMNS,
    SCALE_REST,
    ToyConfig,
    branch_matrices,
    build_toy_circuit,
    decoherence,
    metrics_at_tau,
    rand_matrix,
    sweep,
)


def edge_matrix(circuit, src, dst):
    return circuit.edge(src, dst).map.to_dense()


# ----------------------------------------------------------------------
# 回路の生成
# ----------------------------------------------------------------------
def test_toy_circuit_is_valid():
    """トイ回路と分岐パーティションが妥当であるテスト"""
    circuit, partition = build_toy_circuit(ToyConfig(dim=4), seed=0)
    assert validate_circuit(circuit).is_valid
    assert validate_partition(circuit, partition) == []
    assert circuit.inputs == ("n1", "n2")
    assert circuit.outputs == ("n6",)
    assert circuit.total_dim == 24


def test_full_alignment_gives_equal_maps():
    """align = 1 で分岐2の写像が分岐1と一致するテスト"""
    circuit, _ = build_toy_circuit(ToyConfig(dim=5, align=1.0), seed=3)
    assert np.array_equal(edge_matrix(circuit, "n1", "n3"), edge_matrix(circuit, "n2", "n3"))
    assert np.array_equal(edge_matrix(circuit, "n3", "n4"), edge_matrix(circuit, "n3", "n5"))
    assert np.array_equal(edge_matrix(circuit, "n4", "n6"), edge_matrix(circuit, "n5", "n6"))


def test_zero_alignment_gives_distinct_maps():
    """align = 0 で分岐の写像が異なるテスト"""
    circuit, _ = build_toy_circuit(ToyConfig(dim=5, align=0.0), seed=3)
    assert not np.allclose(edge_matrix(circuit, "n1", "n3"), edge_matrix(circuit, "n2", "n3"))
    assert not np.allclose(edge_matrix(circuit, "n4", "n6"), edge_matrix(circuit, "n5", "n6"))


def test_matrix_scale():
    """E‖W13‖²_F = 0.8² · D になるテスト"""
    cfg = ToyConfig(dim=32)
    norms = [np.sum(branch_matrices(cfg, stream(s, STREAM_MAIN))["W13"] ** 2) for s in range(200)]
    assert np.mean(norms) == pytest.approx(20.48, rel=0.05)


def test_decoherence_schedule():
    """h = min(1, τ/2) のテスト"""
    assert decoherence(0.0) == 0.0
    assert decoherence(1.0) == 0.5
    assert decoherence(2.0) == 1.0
    assert decoherence(5.0) == 1.0


def test_full_decoherence_resamples_maps():
    """τ = 2 で W56, W35 がデコヒーレンス用ストリームの行列に置き換わるテスト"""
    D, seed = 4, 11
    circuit, _ = build_toy_circuit(ToyConfig(dim=D, align=1.0), seed=seed, tau=2.0)
    rng = stream(seed, STREAM_DECOHERENCE)
    fresh56 = rand_matrix(D, SCALE_REST, rng)
    fresh35 = rand_matrix(D, SCALE_REST, rng)
    assert np.array_equal(edge_matrix(circuit, "n5", "n6"), fresh56)
    assert np.array_equal(edge_matrix(circuit, "n3", "n5"), fresh35)
    untouched, _ = build_toy_circuit(ToyConfig(dim=D, align=1.0), seed=seed)
    assert np.array_equal(edge_matrix(circuit, "n3", "n4"), edge_matrix(untouched, "n3", "n4"))


def test_clean_forward_residual_on_decohered_edge():
    """元の写像で順伝播した活性化では、デコヒーレンスした辺だけに残差が出るテスト"""
    cfg = ToyConfig(dim=6)
    clean, _ = build_toy_circuit(cfg, seed=2, tau=0.0)
    noisy, _ = build_toy_circuit(cfg, seed=2, tau=1.0)
    rng = np.random.default_rng(0)
    a = forward_activations(clean, {"n1": rng.normal(size=6), "n2": rng.normal(size=6)})
    out = coboundary_apply(noisy, a)
    assert np.allclose(out["n3->n4"], 0.0, atol=1e-14)
    assert np.linalg.norm(out["n3->n5"]) > 1e-3


def test_invalid_config():
    """不正な設定でエラーになるテスト"""
    with pytest.raises(ConfigError):
        ToyConfig(align=1.5)
    with pytest.raises(ConfigError):
        ToyConfig(taus=())
    with pytest.raises(ConfigError):
        ToyConfig(n_seeds=0)
    with pytest.raises(ConfigError):
        metrics_at_tau(ToyConfig(dim=4), -1.0, seed=0)


# ----------------------------------------------------------------------
# 指標
# ----------------------------------------------------------------------
def test_metrics_deterministic():
    """同じ (τ, seed) で同じ指標になるテスト"""
    cfg = ToyConfig(dim=6)
    m1 = metrics_at_tau(cfg, 0.4, seed=1001)
    m2 = metrics_at_tau(cfg, 0.4, seed=1001)
    assert m1 == m2
    assert m1.eics == pytest.approx(m1.emergence / (1.0 + m1.c_sh))
    assert m1.consistency == pytest.approx(1.0 / (1.0 + m1.c_sh))
    assert m1.eac is None and m1.ear is None


def test_metrics_with_baselines():
    """ベースライン付きの指標のテスト"""
    cfg = ToyConfig(dim=6, with_baselines=True, baseline_batch=10)
    m = metrics_at_tau(cfg, 1.0, seed=5)
    assert -1.0 <= m.eac <= 1.0
    assert m.ear >= 0.0
    assert metrics_at_tau(ToyConfig(dim=6), 1.0, seed=5).eics == m.eics


# ----------------------------------------------------------------------
# スイープ
# ----------------------------------------------------------------------
def test_sweep_csv_reproducible():
    """同じ設定とシードで CSV がバイト単位で一致するテスト"""
    cfg = ToyConfig(dim=4, taus=(0.0, 1.0), n_seeds=3)
    text = sweep(cfg).to_csv()
    assert text == sweep(cfg).to_csv()

    lines = text.split("\n")
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 4 and lines[-1] == ""
    assert lines[1].startswith("0,")
    assert lines[2].startswith("1,")
    assert lines[1].endswith(",3")


def test_sweep_aggregates_samples():
    """集計が (τ, seed) ごとのサンプルの平均と一致するテスト"""
    cfg = ToyConfig(dim=4, taus=(0.5,), n_seeds=4)
    result = sweep(cfg)
    row = result.rows[0]
    assert list(result.samples["seed"]) == [1000, 1001, 1002, 1003]
    assert row.invcsh_mean == pytest.approx(np.mean(1.0 / (1.0 + result.samples["c_sh"])))
    assert row.csh_se == pytest.approx(np.std(result.samples["c_sh"], ddof=1) / 2.0)
    assert row.eics_mean == pytest.approx(np.mean(result.samples["eics"]))
    assert result.samples["eics"][0] == metrics_at_tau(cfg, 0.5, 1000).eics


def test_sweep_single_seed():
    """n_seeds = 1 で標準誤差が NaN（CSV では空欄）になり警告が出るテスト"""
    result = sweep(ToyConfig(dim=4, taus=(0.0,), n_seeds=1))
    assert np.isnan(result.rows[0].eics_se)
    assert result.warnings
    cells = result.to_csv().split("\n")[1].split(",")
    assert cells[CSV_COLUMNS.index("eics_se")] == ""
    assert cells[-1] == "1"


def test_sweep_parallel_matches_serial():
    """jobs = 2 の結果が逐次実行と一致するテスト"""
    cfg = ToyConfig(dim=4, taus=(0.0, 2.0), n_seeds=3)
    assert sweep(cfg, jobs=2).to_csv() == sweep(cfg, jobs=1).to_csv()


def test_sweep_baseline_columns(tmp_path):
    """ベースライン列と図用データのテスト"""
    cfg = ToyConfig(dim=4, taus=(0.0, 1.0), n_seeds=2, with_baselines=True, baseline_batch=6)
    result = sweep(cfg)
    path = tmp_path / "sweep.csv"
    text = result.to_csv(str(path))
    assert path.read_text(encoding="utf-8") == text
    assert text.split("\n")[0] == ",".join(CSV_COLUMNS + BASELINE_COLUMNS)

    plot = result.plot_data_csv()
    assert plot.split("\n")[0] == "tau,eics,invcsh,dei"
    assert "plot 'curve.csv'" in result.gnuplot_script("curve.csv")


def test_sweep_noise_trend():
    """ノイズが増えると C_sh が増え、EICS が下がるテスト"""
    result = sweep(ToyConfig(dim=8, taus=(0.0, 1.0, 2.0), n_seeds=20))
    csh = [r.csh_mean for r in result.rows]
    score = [r.eics_mean for r in result.rows]
    assert csh[0] < csh[1] < csh[2]
    assert score[2] < score[0]
    assert all(0.0 <= r.eics_mean < 1.0 for r in result.rows)


# ----------------------------------------------------------------------
# 既定設定のスイープと独立な直接計算の比較
# ----------------------------------------------------------------------
def reference_metrics(tau, rng, dim=32, align=0.9, alpha=1.0, eps=1e-8):
    """行列積と SVD だけで書いた (C_sh, ΔẼI, EICS) の直接計算"""
    def mat(scale, g):
        return scale * g.normal(size=(dim, dim)) / np.sqrt(dim)

    def ei(J):
        s = np.linalg.svd(J, compute_uv=False)
        return 0.5 * np.sum(np.log1p(alpha * s ** 2))

    U, A, W = mat(0.8, rng), mat(0.9, rng), mat(0.9, rng)
    W13, W23 = U, (1 - align) * mat(0.8, rng) + align * U
    W34, W35 = A, (1 - align) * mat(0.9, rng) + align * A
    W46, W56 = W, (1 - align) * mat(0.9, rng) + align * W
    h = min(1.0, tau / 2.0)
    nrg = np.random.default_rng(rng.integers(10 ** 9))
    W56 = (1 - h) * W56 + h * mat(0.9, nrg)
    W35 = (1 - h) * W35 + h * mat(0.9, nrg)

    Jb1, Jb2 = W46 @ W34 @ W13, W56 @ W35 @ W23
    ei_macro = ei(Jb1 + Jb2)
    dei = max(0.0, ei_macro - ei(Jb1) - ei(Jb2)) / (eps + ei_macro)

    a1, a2 = rng.normal(size=dim), rng.normal(size=dim)
    a3 = W13 @ a1 + W23 @ a2
    a4, a5 = W34 @ a3, W35 @ a3
    a6 = W46 @ a4 + W56 @ a5
    o1, o2, o3, o4, o5, o6 = (x + tau * rng.normal(size=dim) for x in (a1, a2, a3, a4, a5, a6))
    num = den = 0.0
    for au, av, M in ((o1, o3, W13), (o2, o3, W23), (o3, o4, W34), (o3, o5, W35), (o4, o6, W46), (o5, o6, W56)):
        r = M @ au - av
        num += r @ r
        den += au @ au + av @ av
    csh = np.sqrt(num) / (eps + np.sqrt(den))
    return csh, dei, dei / (1.0 + csh)


def reference_sweep(taus, n_seeds=100, base_seed=1000):
    """τ ごとに {曲線名: (平均, 標準誤差)} を返す"""
    out = []
    for tau in taus:
        samples = np.array([reference_metrics(tau, np.random.default_rng(base_seed + k)) for k in range(n_seeds)])
        csh, dei, score = samples.T
        curves = {"eics": score, "invcsh": 1.0 / (1.0 + csh), "dei": dei}
        out.append({k: (v.mean(), v.std(ddof=1) / np.sqrt(n_seeds)) for k, v in curves.items()})
    return out


@pytest.fixture(scope="module")
def default_sweep():
    return sweep(ToyConfig())


def curve(result, name):
    means = np.array([getattr(r, f"{name}_mean") for r in result.rows])
    ses = np.array([getattr(r, f"{name}_se") for r in result.rows])
    return means, ses


def test_default_sweep_matches_direct_computation(default_sweep):
    """既定スイープの3曲線が直接計算の平均と2標準誤差以内で一致するテスト"""
    reference = reference_sweep(default_sweep.config.taus)
    for name in ("eics", "invcsh", "dei"):
        means, ses = curve(default_sweep, name)
        for i, ref in enumerate(reference):
            ref_mean, ref_se = ref[name]
            combined = np.sqrt(ses[i] ** 2 + ref_se ** 2)
            assert abs(means[i] - ref_mean) <= 2.0 * combined, (name, default_sweep.config.taus[i])


def test_default_sweep_curves_non_increasing(default_sweep):
    """既定スイープの3曲線が τ に対して単調非増加（標準誤差を超える逆転は高々1回）のテスト"""
    assert len(default_sweep.rows) == 11
    for name in ("eics", "invcsh", "dei"):
        means, ses = curve(default_sweep, name)
        rises = np.diff(means) > np.sqrt(ses[:-1] ** 2 + ses[1:] ** 2)
        assert int(np.sum(rises)) <= 1, name
        assert means[-1] < means[0], name


def test_default_sweep_clean_point_precision(default_sweep):
    """τ = 0 の EICS の標準誤差が 100 シードで 0.05 未満のテスト"""
    first = default_sweep.rows[0]
    assert first.tau == 0.0
    assert first.n_seeds == 100
    assert first.eics_se < 0.05


def test_sweep_invalid_jobs():
    """jobs < 1 でエラーになるテスト"""
    with pytest.raises(ConfigError):
        sweep(ToyConfig(dim=4, taus=(0.0,), n_seeds=1), jobs=0)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
