"""
Comparison baselines.

EAC: mean Pearson correlation between source and destination activations,
taken dimension-wise on each edge.
EAR: mean residual of per-edge ridge least-squares maps fitted across a batch.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional

import numpy as np
import scipy.linalg

from .circuit import ActivationState, Circuit
from .errors import CircuitError, ConfigError, NumericalError

logger = logging.getLogger(__name__)

# 既定リッジ 1e-8 · tr(A_u A_uᵀ) / d_u の係数
DEFAULT_RIDGE_SCALE = 1e-8
RIDGE_FLOOR = 1e-12


class ActivationBatch:
    """
    N 個の活性化状態（シードや入力ごと）

    Attributes:
        states (List[ActivationState]): 状態のリスト
    """

    def __init__(self, states: Iterable[ActivationState]):
        self.states = [s if isinstance(s, ActivationState) else ActivationState(s) for s in states]
        if not self.states:
            raise CircuitError("バッチには1つ以上の状態が必要です")

    def __len__(self):
        return len(self.states)

    def __iter__(self):
        return iter(self.states)

    def check(self, circuit: Circuit):
        """すべての状態が回路と整合しているか確認"""
        for i, s in enumerate(self.states):
            try:
                s.check(circuit)
            except CircuitError as e:
                raise CircuitError(f"サンプル {i}: {e}", e.violations) from None

    def columns(self, node_id: str) -> np.ndarray:
        """ノードの活性化をサンプルを列として並べた行列 (d × N)"""
        return np.column_stack([s[node_id] for s in self.states])


@dataclass
class EACReport:
    """
    EAC の結果

    Attributes:
        value: 有効な辺の相関の平均（[-1, 1]）
        per_edge: 辺ごとの相関
        skipped_edges: 次元不一致または次元 < 2 で除外した辺
        zero_variance_edges: 分散ゼロで 0 とした辺
        warnings: 警告
    """
    value: float
    per_edge: Dict[str, float]
    skipped_edges: List[str] = field(default_factory=list)
    zero_variance_edges: List[str] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)


@dataclass
class EARReport:
    """
    EAR の結果

    Attributes:
        value: 辺ごとの平均残差ノルムの平均（≥ 0）
        per_edge: 辺ごとの平均残差ノルム
        ridge: 辺ごとに使用したリッジ係数
        n_samples: バッチサイズ
    """
    value: float
    per_edge: Dict[str, float]
    ridge: Dict[str, float]
    n_samples: int


def eac(circuit: Circuit, a: ActivationState) -> EACReport:
    """
    辺活性化相関（EAC）

    各辺 u→v で a_u と a_v の成分を対のサンプルとみなしたピアソン相関を求め、
    有効な辺で平均する。

    Raises:
        CircuitError: すべての辺が除外された場合
    """
    a.check(circuit)
    per_edge = {}
    skipped, zero_var, warnings = [], [], []
    for e in circuit.sorted_edges():
        du, dv = circuit.dim(e.src), circuit.dim(e.dst)
        if du != dv or du < 2:
            skipped.append(e.edge_id)
            continue
        x = a[e.src] - np.mean(a[e.src])
        y = a[e.dst] - np.mean(a[e.dst])
        norm_x, norm_y = np.linalg.norm(x), np.linalg.norm(y)
        if norm_x == 0.0 or norm_y == 0.0:
            zero_var.append(e.edge_id)
            per_edge[e.edge_id] = 0.0
            continue
        per_edge[e.edge_id] = float(np.clip((x @ y) / (norm_x * norm_y), -1.0, 1.0))

    if not per_edge:
        raise CircuitError("EAC を計算できる辺がありません（すべての辺で次元が不一致または1次元）", skipped)
    if skipped:
        msg = f"EAC: {len(skipped)} 本の辺を除外しました: {skipped}"
        logger.warning(msg)
        warnings.append(msg)
    if zero_var:
        msg = f"EAC: 分散ゼロの辺を 0 としました: {zero_var}"
        logger.warning(msg)
        warnings.append(msg)

    value = float(np.mean([per_edge[k] for k in sorted(per_edge)]))
    return EACReport(value, per_edge, skipped, zero_var, warnings)


def default_ridge(A_u: np.ndarray) -> float:
    """スケールに応じた既定リッジ 1e-8 · tr(A_u A_uᵀ) / d_u"""
    d = A_u.shape[0]
    ridge = DEFAULT_RIDGE_SCALE * float(np.sum(A_u ** 2)) / d
    return max(ridge, RIDGE_FLOOR)


def fit_edge_map(A_u: np.ndarray, A_v: np.ndarray, ridge: float) -> np.ndarray:
    """
    ρ̂ = A_v A_uᵀ (A_u A_uᵀ + ridge·I)⁻¹（列がサンプル）

    Raises:
        NumericalError: ridge = 0 で正規方程式が特異な場合
    """
    d = A_u.shape[0]
    G = A_u @ A_u.T
    rhs = A_v @ A_u.T
    if ridge == 0.0:
        if np.linalg.matrix_rank(G) < d:
            raise NumericalError("正規方程式が特異です。ridge > 0 を指定してください")
        return scipy.linalg.solve(G, rhs.T, assume_a="sym").T
    return scipy.linalg.solve(G + ridge * np.eye(d), rhs.T, assume_a="pos").T


def ear(circuit: Circuit, batch: ActivationBatch, ridge: Optional[float] = None) -> EARReport:
    """
    辺整列残差（EAR）

    各辺でバッチ全体からリッジ最小二乗写像 ρ̂ を当てはめ、同じバッチ上の
    サンプルごとの残差ノルム ‖ρ̂ a_u − a_v‖ の平均を求め、辺で平均する。

    Args:
        circuit: 回路
        batch: 活性化のバッチ
        ridge: リッジ係数（None なら辺ごとにスケールに応じた既定値）

    Raises:
        CircuitError: 辺がない、またはバッチが回路と整合しない場合
        NumericalError: ridge = 0 で正規方程式が特異な場合
    """
    if ridge is not None and not (ridge >= 0 and np.isfinite(ridge)):
        raise ConfigError(f"ridge は非負の有限値である必要があります: {ridge}")
    batch.check(circuit)
    if not circuit.edges:
        raise CircuitError("辺がないため EAR を定義できません")

    per_edge, ridges = {}, {}
    for e in circuit.sorted_edges():
        A_u = batch.columns(e.src)
        A_v = batch.columns(e.dst)
        lam = default_ridge(A_u) if ridge is None else float(ridge)
        try:
            rho = fit_edge_map(A_u, A_v, lam)
        except NumericalError as err:
            raise NumericalError(f"辺 {e.edge_id}: {err}") from None
        residual = rho @ A_u - A_v
        per_edge[e.edge_id] = float(np.mean(np.linalg.norm(residual, axis=0)))
        ridges[e.edge_id] = lam

    value = float(np.mean([per_edge[k] for k in sorted(per_edge)]))
    return EARReport(value, per_edge, ridges, len(batch))
