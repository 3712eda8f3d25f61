"""
Unit tests for baselines.py
"""

import pytest
import sys
import os

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.baselines import ActivationBatch, default_ridge, eac, ear, fit_edge_map
from src.circuit import ActivationState, Circuit, EdgeSpec, NodeSpec
from src.errors import CircuitError, ConfigError, NumericalError
from src.linear_map import LinearMap


def make_circuit(dims, edges, inputs, outputs):
    nodes = [NodeSpec(n, d) for n, d in dims.items()]
    specs = [EdgeSpec(u, v, LinearMap.dense(M)) for u, v, M in edges]
    return Circuit(nodes, specs, inputs, outputs)


def pair(d):
    return make_circuit({"u": d, "v": d}, [("u", "v", np.eye(d))], ["u"], ["v"])


def linear_batch(rng, M, n_samples, noise=0.0):
    states = []
    for _ in range(n_samples):
        x = rng.normal(size=M.shape[1])
        states.append(ActivationState({"u": x, "v": M @ x + noise * rng.normal(size=M.shape[0])}))
    return ActivationBatch(states)


# ----------------------------------------------------------------------
# EAC
# ----------------------------------------------------------------------
def test_eac_perfect_correlation():
    """a_v = ±a_u で EAC = ±1 になるテスト"""
    x = np.array([1.0, -2.0, 0.5, 3.0])
    assert eac(pair(4), ActivationState({"u": x, "v": x})).value == pytest.approx(1.0)
    assert eac(pair(4), ActivationState({"u": x, "v": -x})).value == pytest.approx(-1.0)


def test_eac_independent_is_small():
    """独立な高次元の活性化で |EAC| が小さいテスト"""
    rng = np.random.default_rng(0)
    a = ActivationState({"u": rng.normal(size=1000), "v": rng.normal(size=1000)})
    assert abs(eac(pair(1000), a).value) < 0.1


def test_eac_affine_invariance():
    """正のスケールと定数シフトに対する不変性のテスト"""
    rng = np.random.default_rng(1)
    x, y = rng.normal(size=8), rng.normal(size=8)
    base = eac(pair(8), ActivationState({"u": x, "v": y})).value
    moved = eac(pair(8), ActivationState({"u": 2.0 * x - 1.0, "v": 3.0 * y + 5.0})).value
    assert moved == pytest.approx(base, abs=1e-12)


def test_eac_skips_mismatched_edges():
    """次元不一致や1次元の辺が除外されるテスト"""
    rng = np.random.default_rng(2)
    circuit = make_circuit(
        {"u": 2, "v": 3, "w": 3},
        [("u", "v", rng.normal(size=(3, 2))), ("v", "w", np.eye(3))],
        ["u"], ["w"],
    )
    v = rng.normal(size=3)
    report = eac(circuit, ActivationState({"u": rng.normal(size=2), "v": v, "w": v}))
    assert report.skipped_edges == ["u->v"]
    assert report.value == pytest.approx(1.0)
    assert report.warnings

    scalar = make_circuit({"a": 1, "b": 1}, [("a", "b", np.ones((1, 1)))], ["a"], ["b"])
    with pytest.raises(CircuitError):
        eac(scalar, ActivationState({"a": [1.0], "b": [2.0]}))


def test_eac_zero_variance_edge():
    """分散ゼロの辺が 0 として扱われるテスト"""
    report = eac(pair(3), ActivationState({"u": [1.0, 1.0, 1.0], "v": [0.0, 1.0, 2.0]}))
    assert report.value == 0.0
    assert report.zero_variance_edges == ["u->v"]


# ----------------------------------------------------------------------
# EAR
# ----------------------------------------------------------------------
def test_ear_exact_linear_data():
    """正確に線形なデータで ridge = 0 なら EAR = 0 になるテスト"""
    rng = np.random.default_rng(3)
    M = rng.normal(size=(3, 3))
    report = ear(pair(3), linear_batch(rng, M, 20), ridge=0.0)
    assert report.value == pytest.approx(0.0, abs=1e-10)
    assert report.n_samples == 20


def test_ear_single_sample_with_ridge():
    """N = 1 でも ridge > 0 なら有限の値になるテスト"""
    rng = np.random.default_rng(4)
    report = ear(pair(3), linear_batch(rng, np.eye(3), 1))
    assert np.isfinite(report.value)
    assert report.ridge["u->v"] > 0


def test_ear_singular_without_ridge():
    """ridge = 0 で特異な場合エラーになるテスト"""
    rng = np.random.default_rng(5)
    with pytest.raises(NumericalError):
        ear(pair(3), linear_batch(rng, np.eye(3), 1), ridge=0.0)
    with pytest.raises(ConfigError):
        ear(pair(3), linear_batch(rng, np.eye(3), 4), ridge=-1.0)


def test_ear_matches_dense_oracle():
    """正規方程式による直接計算と一致するテスト"""
    rng = np.random.default_rng(6)
    M = rng.normal(size=(4, 3))
    circuit = make_circuit({"u": 3, "v": 4}, [("u", "v", M)], ["u"], ["v"])
    batch = linear_batch(rng, M, 15, noise=0.3)
    lam = 0.05

    A_u, A_v = batch.columns("u"), batch.columns("v")
    rho = A_v @ A_u.T @ np.linalg.inv(A_u @ A_u.T + lam * np.eye(3))
    expected = np.mean(np.linalg.norm(rho @ A_u - A_v, axis=0))
    assert ear(circuit, batch, ridge=lam).value == pytest.approx(expected, rel=1e-10)


def test_ear_sample_order_invariance():
    """サンプルの並べ替えに対する不変性のテスト"""
    rng = np.random.default_rng(7)
    batch = linear_batch(rng, rng.normal(size=(3, 3)), 12, noise=0.5)
    shuffled = ActivationBatch([batch.states[i] for i in rng.permutation(len(batch))])
    assert ear(pair(3), shuffled).value == pytest.approx(ear(pair(3), batch).value, rel=1e-10)


def test_fit_edge_map_small_ridge_matches_pinv():
    """ridge → 0 で疑似逆行列解に近づくテスト"""
    rng = np.random.default_rng(8)
    A_u = rng.normal(size=(5, 3))
    A_v = rng.normal(size=(2, 3))
    rho = fit_edge_map(A_u, A_v, 1e-8)
    assert np.allclose(rho, A_v @ np.linalg.pinv(A_u), atol=1e-5)


def test_default_ridge_floor():
    """既定リッジの下限のテスト"""
    assert default_ridge(np.zeros((3, 2))) == 1e-12
    assert default_ridge(np.ones((2, 4))) == pytest.approx(1e-8 * 8 / 2)


def test_batch_mismatch():
    """回路と整合しないバッチでエラーになるテスト"""
    batch = ActivationBatch([ActivationState({"u": [1.0, 2.0], "v": [1.0]})])
    with pytest.raises(CircuitError):
        ear(pair(2), batch)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
