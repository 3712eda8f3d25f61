"""
Unit tests for ei.py
"""

import pytest
import sys
import os

import numpy as np
from scipy.stats import ortho_group

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.circuit import Circuit, EdgeSpec, NodeSpec, PartSpec, Partition
from src.ei import (
    EIConfig,
    delta_ei,
    ei_alpha_sensitivity,
    ei_gaussian,
    ei_small_alpha,
    select_alpha,
)
from src.errors import CircuitError, ConfigError, NumericalError
from src.linear_map import LinearMap


def make_circuit(dims, edges, inputs, outputs):
    nodes = [NodeSpec(n, d) for n, d in dims.items()]
    specs = [EdgeSpec(u, v, LinearMap.dense(M)) for u, v, M in edges]
    return Circuit(nodes, specs, inputs, outputs)


def diamond(d=2):
    I = np.eye(d)
    return make_circuit(
        {"u": d, "v1": d, "v2": d, "w": d},
        [("u", "v1", I), ("u", "v2", I), ("v1", "w", I), ("v2", "w", I)],
        ["u"], ["w"],
    )


def diamond_branches():
    return Partition(
        parts=(
            PartSpec(nodes=("u", "v1", "w"), inputs=("u",), outputs=("w",), name="b1"),
            PartSpec(nodes=("u", "v2", "w"), inputs=("u",), outputs=("w",), name="b2"),
        ),
        kind="paths",
        macro="parallel-sum",
    )


def exact_ei(M, alpha=1.0):
    s = np.linalg.svd(M, compute_uv=False)
    return 0.5 * np.sum(np.log1p(alpha * s ** 2))


# ----------------------------------------------------------------------
# ei_gaussian
# ----------------------------------------------------------------------
def test_closed_forms():
    """閉形式の値のテスト"""
    assert ei_gaussian(LinearMap.identity(1), 1.0).value == pytest.approx(0.5 * np.log(2.0), abs=1e-12)
    assert ei_gaussian(LinearMap.dense(np.zeros((3, 3))), 1.0).value == 0.0
    value = ei_gaussian(LinearMap.dense(np.diag([3.0, 4.0])), 1.0).value
    assert value == pytest.approx(0.5 * (np.log(10.0) + np.log(17.0)), abs=1e-12)


def test_operator_exact_matches_dense():
    """行列フリーの厳密モードが SVD と一致するテスト"""
    rng = np.random.default_rng(0)
    M = rng.normal(size=(7, 4))
    op = LinearMap.from_callbacks(lambda x: M @ x, lambda y: M.T @ y, M.shape)
    est = ei_gaussian(op, 0.7)
    assert est.method == "eigh"
    assert est.value == pytest.approx(exact_ei(M, 0.7), rel=1e-10)
    assert ei_gaussian(LinearMap.dense(M), 0.7).method == "svd"


def test_fast_mode_exact_on_diagonal():
    """対角なグラム行列ではラデマッハープローブの推定が厳密になるテスト"""
    J = LinearMap.dense(np.diag([3.0, 4.0]))
    est = ei_gaussian(J, 1.0, mode="fast", config=EIConfig(mode="fast", seed=7))
    assert est.value == pytest.approx(0.5 * (np.log(10.0) + np.log(17.0)), abs=1e-12)
    assert est.std_error == pytest.approx(0.0, abs=1e-12)
    assert est.n_probes == 10
    assert not est.low_confidence

    frob = ei_gaussian(J, 1.0, mode="fast", config=EIConfig(mode="fast", fast_estimator="frobenius"))
    assert frob.value == pytest.approx(12.5, abs=1e-12)


def test_channel_symmetry_and_orthogonal_invariance():
    """EI(J) = EI(Jᵀ) と直交変換不変性のテスト"""
    rng = np.random.default_rng(1)
    M = rng.normal(size=(5, 3))
    base = ei_gaussian(LinearMap.dense(M), 1.3).value
    assert ei_gaussian(LinearMap.dense(M.T), 1.3).value == pytest.approx(base, rel=1e-12)

    Q1 = ortho_group.rvs(5, random_state=2)
    Q2 = ortho_group.rvs(3, random_state=3)
    assert ei_gaussian(LinearMap.dense(Q1 @ M @ Q2), 1.3).value == pytest.approx(base, rel=1e-10)


def test_monotonic_in_alpha():
    """α に対して単調増加であるテスト"""
    rng = np.random.default_rng(4)
    J = LinearMap.dense(rng.normal(size=(4, 4)))
    values = [ei_gaussian(J, a).value for a in (0.01, 0.1, 1.0, 10.0, 100.0)]
    assert all(b > a for a, b in zip(values, values[1:]))


def test_invalid_alpha():
    """α ≤ 0 でエラーになるテスト"""
    with pytest.raises(ConfigError):
        ei_gaussian(LinearMap.identity(2), 0.0)
    with pytest.raises(ConfigError):
        EIConfig(alpha=-1.0)
    with pytest.raises(ConfigError):
        EIConfig(mode="approximate")


def test_hutchpp_estimate():
    """Hutch++ 推定が厳密値の近くにあるテスト"""
    J = LinearMap.dense(2.0 * np.eye(8))
    config = EIConfig(mode="fast", fast_estimator="hutchpp", probes_macro=30, seed=5)
    est = ei_gaussian(J, 1.0, mode="fast", config=config)
    exact = 4.0 * np.log(5.0)
    assert est.n_probes == 30
    assert abs(est.value - exact) <= 5 * est.std_error + 1e-9


# ----------------------------------------------------------------------
# 小 α 近似と感度
# ----------------------------------------------------------------------
def test_small_alpha_identity():
    """I2 で (α/2)‖J‖²_F = 0.01 になるテスト"""
    est = ei_small_alpha(LinearMap.identity(2), 0.01)
    assert est.value == pytest.approx(0.01, abs=1e-15)
    assert not est.warnings


def test_small_alpha_error_bound():
    """近似誤差が (1/4) Σ (α σ²)² 以下であるテスト"""
    rng = np.random.default_rng(6)
    M = rng.normal(size=(6, 6)) / 6.0
    s = np.linalg.svd(M, compute_uv=False)
    alpha = 0.05
    approx = ei_small_alpha(LinearMap.dense(M), alpha).value
    exact = exact_ei(M, alpha)
    assert approx >= exact
    assert approx - exact <= 0.25 * np.sum((alpha * s ** 2) ** 2) + 1e-15


def test_small_alpha_guard_warns():
    """ガードを超えたら警告が付くテスト"""
    est = ei_small_alpha(LinearMap.dense(3.0 * np.eye(2)), 1.0)
    assert est.warnings


def test_sensitivity_values():
    """感度の閉形式のテスト"""
    assert ei_alpha_sensitivity(LinearMap.identity(4), 1.0) == pytest.approx(1.0)
    rng = np.random.default_rng(7)
    M = rng.normal(size=(3, 5))
    assert ei_alpha_sensitivity(LinearMap.dense(M), 0.0) == pytest.approx(0.5 * np.sum(M ** 2), rel=1e-12)


def test_sensitivity_finite_difference():
    """感度が中心差分と一致するテスト"""
    rng = np.random.default_rng(8)
    J = LinearMap.dense(rng.normal(size=(4, 6)))
    alpha, h = 0.8, 1e-5
    fd = (ei_gaussian(J, alpha + h).value - ei_gaussian(J, alpha - h).value) / (2 * h)
    assert ei_alpha_sensitivity(J, alpha) == pytest.approx(fd, rel=1e-6)


# ----------------------------------------------------------------------
# delta_ei
# ----------------------------------------------------------------------
def test_delta_ei_single_node():
    """1ノードの回路で ΔEI = 0 になるテスト"""
    circuit = make_circuit({"a": 3}, [], ["a"], ["a"])
    report = delta_ei(circuit)
    assert report.delta_ei == pytest.approx(0.0, abs=1e-12)
    assert report.normalized == pytest.approx(0.0, abs=1e-12)


def test_delta_ei_diamond_branches():
    """ダイヤモンド回路の2分岐で ΔEI = ln(5/4) になるテスト"""
    report = delta_ei(diamond(2), diamond_branches())
    assert report.ei_macro == pytest.approx(np.log(5.0), abs=1e-12)
    assert report.ei_parts == pytest.approx([np.log(2.0), np.log(2.0)], abs=1e-12)
    assert report.delta_ei == pytest.approx(np.log(1.25), abs=1e-12)
    assert report.normalized == pytest.approx(np.log(1.25) / np.log(5.0), abs=1e-8)
    assert report.part_labels == ["b1", "b2"]


def test_delta_ei_negative_is_clipped():
    """ΔEI が負のとき ΔEI⁺ = 0 になるテスト"""
    I = np.eye(2)
    circuit = make_circuit({"a": 2, "b": 2}, [("a", "b", 0.1 * I)], ["a"], ["b"])
    report = delta_ei(circuit)
    assert report.delta_ei < 0
    assert report.delta_ei_plus == 0.0
    assert report.normalized == 0.0


def test_normalized_emergence_range():
    """ランダムな回路で正規化創発が [0, 1) に入るテスト"""
    rng = np.random.default_rng(9)
    for _ in range(30):
        n = int(rng.integers(2, 6))
        ids = [f"n{i}" for i in range(n)]
        dims = {nid: int(rng.integers(1, 4)) for nid in ids}
        edges = [(ids[i], ids[i + 1], 3.0 * rng.normal(size=(dims[ids[i + 1]], dims[ids[i]]))) for i in range(n - 1)]
        report = delta_ei(make_circuit(dims, edges, [ids[0]], [ids[-1]]))
        assert 0.0 <= report.normalized < 1.0


def test_delta_ei_invalid_partition():
    """不正なパーティションでエラーになるテスト"""
    bad = Partition(parts=(PartSpec(nodes=("u", "v1")),))
    with pytest.raises(CircuitError):
        delta_ei(diamond(2), bad)


def test_delta_ei_fast_mode_reports_errors():
    """高速モードで標準誤差とプローブ数が報告されるテスト"""
    config = EIConfig(mode="fast", seed=3)
    report = delta_ei(diamond(2), diamond_branches(), config)
    assert report.mode == "fast"
    assert report.probes_macro == 10
    assert report.probes_part == 6
    assert len(report.ei_parts_se) == 2
    assert report.delta_ei_se >= 0.0


def test_fast_estimator_unbiased():
    """高速推定の平均が厳密値の3標準誤差以内、単独実行の被覆率のテスト"""
    rng = np.random.default_rng(10)
    M = rng.normal(size=(64, 64)) / 8.0
    J = LinearMap.dense(M)
    exact = exact_ei(M)

    values, covered = [], 0
    for seed in range(200):
        est = ei_gaussian(J, 1.0, mode="fast", config=EIConfig(mode="fast", seed=seed))
        values.append(est.value)
        if abs(est.value - exact) <= 3 * est.std_error:
            covered += 1

    values = np.array(values)
    se_mean = np.std(values, ddof=1) / np.sqrt(len(values))
    assert abs(np.mean(values) - exact) <= 3 * se_mean
    assert covered / 200 >= 0.95


# ----------------------------------------------------------------------
# select_alpha
# ----------------------------------------------------------------------
def test_select_alpha_identity():
    """J = I_n で α = exp(2v/n) − 1 になるテスト"""
    n, v = 4, 1.5
    sel = select_alpha(LinearMap.identity(n), (v - 1e-9, v + 1e-9))
    assert sel.converged
    assert sel.alpha == pytest.approx(np.exp(2 * v / n) - 1.0, rel=1e-6)


def test_select_alpha_zero_map():
    """J = 0 ではエラーになるテスト"""
    with pytest.raises(NumericalError):
        select_alpha(LinearMap.dense(np.zeros((2, 2))), (0.5, 1.0))


def test_select_alpha_lands_in_range():
    """選んだ α での EI が目標区間に入るテスト"""
    rng = np.random.default_rng(11)
    for _ in range(10):
        J = LinearMap.dense(rng.normal(size=(5, 5)) * rng.uniform(0.01, 100))
        low = float(rng.uniform(0.1, 5.0))
        sel = select_alpha(J, (low, low * 1.1))
        assert sel.converged
        ei = ei_gaussian(J, sel.alpha).value
        assert low * (1 - 1e-9) <= ei <= low * 1.1 * (1 + 1e-9)


def test_select_alpha_bad_range():
    """不正な目標区間でエラーになるテスト"""
    with pytest.raises(ConfigError):
        select_alpha(LinearMap.identity(2), (1.0, 0.5))


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
