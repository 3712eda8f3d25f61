"""
Log-determinant and trace estimators for symmetric positive definite operators.

Exact: eigendecomposition with Cholesky fallback.
Stochastic: Hutchinson probes with Lanczos quadrature (SLQ), Hutch++ with
Lanczos matrix-function actions, plain Hutchinson trace. All stochastic
estimators only need matrix-vector products.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np
import scipy.linalg

from .errors import NumericalError
from .rng import rademacher

logger = logging.getLogger(__name__)

MatVec = Callable[[np.ndarray], np.ndarray]

# これ以下の次元では固有値分解（条件数の診断を兼ねる）、超えたら Cholesky
EIGEN_DIM_LIMIT = 512


@dataclass
class TraceEstimate:
    """
    確率的トレース推定の結果

    Attributes:
        value: 推定値
        std_error: 標準誤差（プローブ1本なら NaN）
        n_probes: 使用したプローブ数
    """
    value: float
    std_error: float
    n_probes: int


def exact_logdet_spd(A: np.ndarray) -> float:
    """
    対称正定値行列の log det

    小さい行列は固有値分解、失敗時または大きい行列は Cholesky を用いる。
    """
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    if n == 0:
        return 0.0
    if n <= EIGEN_DIM_LIMIT:
        try:
            values = scipy.linalg.eigvalsh(A)
            if np.all(values > 0) and np.all(np.isfinite(values)):
                return float(np.sum(np.log(values)))
            logger.debug("固有値が正でないため Cholesky にフォールバックします")
        except (np.linalg.LinAlgError, ValueError):
            logger.debug("固有値分解に失敗したため Cholesky にフォールバックします")
    try:
        c, _ = scipy.linalg.cho_factor(A, lower=True)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericalError(f"Cholesky 分解に失敗しました: {e}") from e
    result = 2.0 * float(np.sum(np.log(np.diag(c))))
    if not np.isfinite(result):
        raise NumericalError(f"log det が有限ではありません: {result}")
    return result


def lanczos(matvec: MatVec, v0: np.ndarray, steps: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    完全再直交化付き Lanczos 法

    Args:
        matvec: 対称作用素の作用
        v0: 初期ベクトル（正規化は内部で行う）
        steps: 最大ステップ数（クリロフ空間が不変になれば早期終了）

    Returns:
        (対角成分, 副対角成分, 正規直交基底 Q)
    """
    n = v0.shape[0]
    steps = max(1, min(steps, n))
    Q = np.zeros((n, steps))
    diag = np.zeros(steps)
    off = np.zeros(max(steps - 1, 0))

    q = v0 / np.linalg.norm(v0)
    Q[:, 0] = q
    k_used = steps
    for k in range(steps):
        w = matvec(Q[:, k])
        diag[k] = Q[:, k] @ w
        w = w - Q[:, :k + 1] @ (Q[:, :k + 1].T @ w)
        # 2回目の再直交化
        w = w - Q[:, :k + 1] @ (Q[:, :k + 1].T @ w)
        if k == steps - 1:
            break
        beta = np.linalg.norm(w)
        if beta <= 1e-12 * max(1.0, abs(diag[k])):
            k_used = k + 1
            break
        off[k] = beta
        Q[:, k + 1] = w / beta

    return diag[:k_used], off[:k_used - 1], Q[:, :k_used]


def _tridiag_eigh(diag: np.ndarray, off: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    if diag.shape[0] == 1:
        return diag.copy(), np.ones((1, 1))
    return scipy.linalg.eigh_tridiagonal(diag, off)


def lanczos_quadrature(matvec: MatVec, z: np.ndarray, steps: int, f: Callable[[np.ndarray], np.ndarray]) -> float:
    """
    z^T f(A) z のガウス求積近似（‖z‖² Σ_k U[0,k]² f(θ_k)）
    """
    diag, off, _ = lanczos(matvec, z, steps)
    theta, U = _tridiag_eigh(diag, off)
    return float((z @ z) * np.sum(U[0, :] ** 2 * f(theta)))


def lanczos_function_action(matvec: MatVec, v: np.ndarray, steps: int, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """f(A) v ≈ ‖v‖ Q U f(Θ) U^T e1"""
    norm = np.linalg.norm(v)
    if norm == 0.0:
        return np.zeros_like(v)
    diag, off, Q = lanczos(matvec, v, steps)
    theta, U = _tridiag_eigh(diag, off)
    return norm * (Q @ (U @ (f(theta) * U[0, :])))


def _summarize(samples: np.ndarray) -> TraceEstimate:
    p = samples.shape[0]
    se = float(np.std(samples, ddof=1) / np.sqrt(p)) if p > 1 else float("nan")
    return TraceEstimate(float(np.mean(samples)), se, p)


def hutchinson_trace(matvec: MatVec, n: int, probes: int, rng: np.random.Generator) -> TraceEstimate:
    """ラデマッハープローブによる tr(A) の推定"""
    samples = np.empty(probes)
    for i in range(probes):
        z = rademacher(rng, n)
        samples[i] = z @ matvec(z)
    return _summarize(samples)


def slq_logdet(matvec: MatVec, n: int, probes: int, steps: int, rng: np.random.Generator) -> TraceEstimate:
    """
    確率的 Lanczos 求積による log det(A) = tr(log A) の推定

    Args:
        matvec: 対称正定値作用素の作用
        n: 次元
        probes: ラデマッハープローブ数
        steps: プローブごとの Lanczos ステップ数
        rng: 乱数生成器
    """
    samples = np.empty(probes)
    for i in range(probes):
        z = rademacher(rng, n)
        samples[i] = lanczos_quadrature(matvec, z, steps, np.log)
    return _summarize(samples)


def hutchpp_logdet(matvec: MatVec, n: int, probes: int, steps: int, rng: np.random.Generator) -> TraceEstimate:
    """
    Hutch++ による tr(log A) の推定

    プローブ予算の 1/3 で log(A) の値域を捉え、その補空間の寄与だけを
    ハッチンソン推定する。標準誤差は補空間の推定から求める。
    """
    k = max(1, probes // 3)
    S = rademacher(rng, (n, k))
    G = rademacher(rng, (n, k))
    Y = np.column_stack([lanczos_function_action(matvec, S[:, j], steps, np.log) for j in range(k)])
    Q, _ = np.linalg.qr(Y)
    head = sum(float(Q[:, j] @ lanczos_function_action(matvec, Q[:, j], steps, np.log)) for j in range(Q.shape[1]))

    G_perp = G - Q @ (Q.T @ G)
    samples = np.array([
        float(G_perp[:, j] @ lanczos_function_action(matvec, G_perp[:, j], steps, np.log))
        for j in range(k)
    ])
    tail = _summarize(samples)
    return TraceEstimate(head + tail.value, tail.std_error, 3 * k)
