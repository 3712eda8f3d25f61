"""
Sheaf view of a circuit.

Stalks are the node activation spaces, restriction maps are the edge Jacobians.
Provides the coboundary, the normalized inconsistency energy C_sh, the
least-squares consistent section, the weighted sheaf Laplacian and its spectral
gap, plus an empirical check of the perturbation bound controlled by lambda2.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple, Union

import networkx as nx
import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, eigsh, lsqr, svds

from .circuit import ActivationState, Circuit, EdgeSpec, NodeAssignment
from .errors import CircuitError, ConfigError, NumericalError
from .linear_map import LinearMap
from .rng import STREAM_LANCZOS, STREAM_OPERATOR_NORM, stream

logger = logging.getLogger(__name__)

# 密行列で組み立てる総次元の上限
DENSE_DIM_GUARD = 4096
# カーネルとみなす固有値の閾値
EIGEN_FLOOR = 1e-10
# 作用素ノルムの下限（逆作用素ノルム重み）
NORM_FLOOR = 1e-12

Cochain0 = NodeAssignment


class Cochain1:
    """辺ごとのベクトル（辺IDは "src->dst"、辺ID順で保持）"""

    def __init__(self, vectors: Mapping[str, np.ndarray]):
        self._data = {k: np.asarray(vectors[k], dtype=float).ravel() for k in sorted(vectors)}

    def __getitem__(self, edge_id: str) -> np.ndarray:
        return self._data[edge_id]

    def keys(self):
        return self._data.keys()

    def items(self):
        return self._data.items()

    def __len__(self):
        return len(self._data)

    def norms(self) -> Dict[str, float]:
        return {k: float(np.linalg.norm(v)) for k, v in self._data.items()}

    def stacked(self) -> np.ndarray:
        return np.concatenate(list(self._data.values())) if self._data else np.zeros(0)

    def is_zero(self, atol: float = 0.0) -> bool:
        return all(np.all(np.abs(v) <= atol) for v in self._data.values())


@dataclass
class SheafReport:
    """
    正規化不整合エネルギー C_sh の計算結果

    Attributes:
        residual_norms: 辺ごとの残差 ‖ρ a_u − a_v‖₂（辺ID順）
        numerator: sqrt(Σ 残差²)
        denominator: sqrt(Σ (‖a_u‖² + ‖a_v‖²))
        c_sh: numerator / (epsilon + denominator)
        epsilon: 数値安定化の下限
        degenerate: 辺がなく C_sh を 0 と定義した場合 True
        map_applications: ノード起点評価での写像の作用回数
        lambda2: スペクトルギャップ（要求時のみ）
        beta: λ2 計算時の正則化
    """
    residual_norms: Dict[str, float]
    numerator: float
    denominator: float
    c_sh: float
    epsilon: float
    degenerate: bool = False
    map_applications: int = 0
    lambda2: Optional[float] = None
    beta: Optional[float] = None


@dataclass(frozen=True)
class EdgeWeighting:
    """
    ラプラシアンの辺重み

    Attributes:
        scheme: "unit" または "inverse-operator-norm"
        weights: 明示的な辺ごとの重み（辺ID → w_e > 0、指定時は scheme より優先）
    """
    scheme: str = "unit"
    weights: Optional[Mapping[str, float]] = None

    def resolve(self, circuit: Circuit, seed: int = 0) -> Dict[str, float]:
        """
        辺ID → 重み を確定させる

        Raises:
            ConfigError: 未知のスキーム、または正でない・非有限な重み
        """
        if self.scheme not in ("unit", "inverse-operator-norm"):
            raise ConfigError(f"未知の重みスキームです: {self.scheme}")
        result = {}
        for e in circuit.sorted_edges():
            if self.weights is not None and e.edge_id in self.weights:
                w = float(self.weights[e.edge_id])
            elif self.scheme == "inverse-operator-norm":
                w = 1.0 / max(operator_norm(e.map, seed=seed) ** 2, NORM_FLOOR)
            else:
                w = 1.0
            if not np.isfinite(w) or w <= 0:
                raise ConfigError(f"辺 {e.edge_id} の重みは正の有限値である必要があります: {w}")
            result[e.edge_id] = w
        return result


# ----------------------------------------------------------------------
# 余境界
# ----------------------------------------------------------------------
def _seeded_push(circuit: Circuit, s: NodeAssignment) -> Tuple[Dict[str, np.ndarray], int]:
    """
    ノード起点評価: 出辺を持つ各ノード u について、出辺の写像を縦に積んだ写像を
    s_u に1回だけ作用させ、すべての ρ_{u→v} s_u を得る

    Returns:
        (辺ID → ρ s_u, 写像の作用回数)
    """
    pushed: Dict[str, np.ndarray] = {}
    applications = 0
    sources = sorted({e.src for e in circuit.edges})
    for u in sources:
        out = circuit.out_edges(u)
        stacked = LinearMap.vstack([e.map for e in out]) if len(out) > 1 else out[0].map
        try:
            values = stacked.matvec(s[u])
        except CircuitError as err:
            raise CircuitError(f"ノード {u} の出辺 {[e.edge_id for e in out]} で形状が一致しません: {err}") from None
        applications += 1
        start = 0
        for e in out:
            rows = e.map.shape[0]
            pushed[e.edge_id] = values[start:start + rows]
            start += rows
    return pushed, applications


def _residuals(circuit: Circuit, s: NodeAssignment) -> Tuple[Dict[str, np.ndarray], int]:
    pushed, applications = _seeded_push(circuit, s)
    residuals = {}
    for e in circuit.sorted_edges():
        target = s[e.dst]
        if pushed[e.edge_id].shape != target.shape:
            raise CircuitError(f"辺 {e.edge_id} の形状が一致しません: "
                               f"ρ s_u は {pushed[e.edge_id].shape}, s_v は {target.shape}")
        residuals[e.edge_id] = pushed[e.edge_id] - target
    return residuals, applications


def coboundary_apply(circuit: Circuit, s: NodeAssignment) -> Cochain1:
    """
    余境界 (δ0 s)_{u→v} = ρ_{u→v} s_u − s_v

    Args:
        circuit: 回路
        s: 0-コチェイン

    Returns:
        Cochain1: 辺ごとの不一致

    Raises:
        CircuitError: 形状が一致しない場合（辺を示す）
    """
    residuals, _ = _residuals(circuit, s)
    return Cochain1(residuals)


def coboundary_matrix(circuit: Circuit) -> np.ndarray:
    """
    δ0 の密行列（行: 辺ID順の各辺、列: 宣言順の各ノード）
    """
    offsets = circuit.offsets()
    edges = circuit.sorted_edges()
    n_rows = sum(circuit.dim(e.dst) for e in edges)
    delta = np.zeros((n_rows, circuit.total_dim))
    row = 0
    for e in edges:
        rows = circuit.dim(e.dst)
        u0, u1 = offsets[e.src]
        v0, v1 = offsets[e.dst]
        delta[row:row + rows, u0:u1] += e.map.to_dense()
        delta[row:row + rows, v0:v1] -= np.eye(rows)
        row += rows
    return delta


def coboundary_operator(circuit: Circuit) -> LinearOperator:
    """δ0 の行列フリー版（随伴も辺ごとに作用させる）"""
    offsets = circuit.offsets()
    edges = circuit.sorted_edges()
    n_rows = sum(circuit.dim(e.dst) for e in edges)

    def matvec(x):
        s = NodeAssignment.from_stacked(circuit, np.ravel(x))
        residuals, _ = _residuals(circuit, s)
        return np.concatenate([residuals[e.edge_id] for e in edges]) if edges else np.zeros(0)

    def rmatvec(y):
        y = np.ravel(y)
        out = np.zeros(circuit.total_dim)
        row = 0
        for e in edges:
            rows = circuit.dim(e.dst)
            r = y[row:row + rows]
            u0, u1 = offsets[e.src]
            v0, v1 = offsets[e.dst]
            out[u0:u1] += e.map.rmatvec(r)
            out[v0:v1] -= r
            row += rows
        return out

    return LinearOperator((n_rows, circuit.total_dim), matvec=matvec, rmatvec=rmatvec, dtype=float)


def _dense_ok(circuit: Circuit) -> bool:
    return circuit.total_dim <= DENSE_DIM_GUARD


# ----------------------------------------------------------------------
# 不整合エネルギーと最小二乗切断
# ----------------------------------------------------------------------
def sheaf_inconsistency(circuit: Circuit, a: ActivationState, epsilon: float = 1e-8) -> SheafReport:
    """
    正規化不整合エネルギー

        C_sh = sqrt(Σ_e ‖ρ_e a_u − a_v‖²) / (ε + sqrt(Σ_e ‖a_u‖² + ‖a_v‖²))

    分母はノードの重複を除かず辺ごとに足し合わせる。

    Args:
        circuit: 回路
        a: 活性化状態
        epsilon: 正の下限

    Returns:
        SheafReport: 辺ごとの残差と C_sh
    """
    if not epsilon > 0:
        raise ConfigError(f"epsilon は正である必要があります: {epsilon}")
    a.check(circuit)

    if not circuit.edges:
        logger.warning("辺がないため C_sh = 0 と定義します")
        return SheafReport({}, 0.0, 0.0, 0.0, float(epsilon), degenerate=True)

    residuals, applications = _residuals(circuit, a)
    edges = circuit.sorted_edges()
    res_sq = np.array([residuals[e.edge_id] @ residuals[e.edge_id] for e in edges])
    den_sq = np.array([a[e.src] @ a[e.src] + a[e.dst] @ a[e.dst] for e in edges])

    numerator = float(np.sqrt(np.sum(res_sq)))
    denominator = float(np.sqrt(np.sum(den_sq)))
    c_sh = numerator / (epsilon + denominator)
    if not np.isfinite(c_sh):
        raise NumericalError(f"C_sh が有限ではありません: {c_sh}")

    return SheafReport(
        residual_norms={e.edge_id: float(np.sqrt(r)) for e, r in zip(edges, res_sq)},
        numerator=numerator,
        denominator=denominator,
        c_sh=c_sh,
        epsilon=float(epsilon),
        map_applications=applications,
    )


def least_squares_section(circuit: Circuit, a: ActivationState) -> Tuple[NodeAssignment, float]:
    """
    a を ker δ0（大域切断の空間）へ直交射影する

        ŝ = a − δ0⁺ (δ0 a)

    Args:
        circuit: 回路
        a: 活性化状態

    Returns:
        (ŝ, ‖δ0 a‖²): 射影後の状態と取り除いたエネルギー
    """
    a.check(circuit)
    if not circuit.edges:
        return NodeAssignment(dict(a.items())), 0.0

    x = a.stacked(circuit)
    all_dense = all(e.map.is_dense for e in circuit.edges)
    if _dense_ok(circuit) and all_dense:
        delta = coboundary_matrix(circuit)
        b = delta @ x
        # gelsd は最小ノルム解 δ0⁺ b を返す
        correction = scipy.linalg.lstsq(delta, b, lapack_driver="gelsd")[0]
    else:
        op = coboundary_operator(circuit)
        b = op.matvec(x)
        correction = lsqr(op, b, atol=1e-14, btol=1e-14, iter_lim=20 * circuit.total_dim)[0]

    energy = float(b @ b)
    return NodeAssignment.from_stacked(circuit, x - correction), energy


# ----------------------------------------------------------------------
# ラプラシアンとスペクトルギャップ
# ----------------------------------------------------------------------
def operator_norm(linear_map: LinearMap, seed: int = 0) -> float:
    """
    最大特異値 σ_max = ‖J‖_op

    密行列は svdvals、operator 形式は ARPACK（svds, k=1）で求める。
    一方の次元が 1 の写像はベクトルのノルムそのもの。

    Args:
        linear_map: 対象の写像
        seed: ARPACK の初期ベクトルのシード

    Returns:
        float: σ_max
    """
    if linear_map.structurally_zero:
        return 0.0
    m, n = linear_map.shape
    if m == 0 or n == 0:
        return 0.0
    if linear_map.is_dense:
        return float(scipy.linalg.svdvals(linear_map.matrix)[0])
    if n == 1:
        return float(np.linalg.norm(linear_map.matvec(np.ones(1))))
    if m == 1:
        return float(np.linalg.norm(linear_map.rmatvec(np.ones(1))))
    v0 = stream(seed, STREAM_OPERATOR_NORM).standard_normal(min(m, n))
    s = svds(linear_map.as_operator(), k=1, v0=v0, return_singular_vectors=False)
    return float(s[0])


def sheaf_laplacian(
    circuit: Circuit,
    weighting: Optional[EdgeWeighting] = None,
    mode: str = "auto",
    seed: int = 0,
) -> Union[np.ndarray, LinearOperator]:
    """
    重み付き層ラプラシアン L = δ0^T W δ0

    Args:
        circuit: 回路
        weighting: 辺重み（デフォルト: unit）
        mode: "auto"（上限以下なら密）、"dense"、"operator"
        seed: 作用素ノルム推定のシード

    Returns:
        密行列（対称半正定値）または LinearOperator

    Raises:
        ConfigError: 密モードで次元上限を超えた場合（operator モードを使うこと）
    """
    weighting = weighting or EdgeWeighting()
    weights = weighting.resolve(circuit, seed=seed)
    if mode not in ("auto", "dense", "operator"):
        raise ConfigError(f"未知のモードです: {mode}")
    if mode == "dense" and not _dense_ok(circuit):
        raise ConfigError(
            f"総次元 {circuit.total_dim} が密行列の上限 {DENSE_DIM_GUARD} を超えています。"
            "mode='operator' を使用してください"
        )

    edges = circuit.sorted_edges()
    row_weights = np.concatenate([np.full(circuit.dim(e.dst), weights[e.edge_id]) for e in edges]) \
        if edges else np.zeros(0)

    if mode == "dense" or (mode == "auto" and _dense_ok(circuit)):
        delta = coboundary_matrix(circuit)
        L = delta.T @ (row_weights[:, None] * delta)
        return 0.5 * (L + L.T)

    op = coboundary_operator(circuit)
    n = circuit.total_dim

    def matvec(x):
        return op.rmatvec(row_weights * op.matvec(np.ravel(x)))

    return LinearOperator((n, n), matvec=matvec, rmatvec=matvec, dtype=float)


def _kernel_tol(values: np.ndarray) -> float:
    scale = max(1.0, float(np.max(np.abs(values)))) if values.size else 1.0
    return EIGEN_FLOOR * scale


def _gap_from_eigenvalues(values: np.ndarray, beta: float) -> Optional[float]:
    """
    カーネル（閾値以下）を除いた最小固有値 + β（なければ None）

    カーネルが自明（δ0 が単射）なラプラシアンでは、これは2番目ではなく最小の固有値になる。
    """
    values = np.sort(np.asarray(values, dtype=float))
    nonkernel = values[values > _kernel_tol(values)]
    if nonkernel.size == 0:
        return None
    return float(nonkernel[0]) + beta


def spectral_gap(L: Union[np.ndarray, LinearOperator], beta: float = 0.0, seed: int = 0) -> float:
    """
    スペクトルギャップ λ2

    閾値 1e-10 以内の固有値をカーネルとして数え、カーネルを除いた最小の固有値に
    β を加えた値を返す。スカラー茎の連結グラフではフィードラー値に一致する。
    カーネルしかない（零行列など）場合は β を返す。
    カーネルが自明な場合は最小固有値そのものを λ2 とする（値は 0 に近いことがある）。

    Args:
        L: 対称半正定値行列（または LinearOperator）
        beta: 正則化 L ← L + βI
        seed: Lanczos の初期ベクトルのシード

    Returns:
        float: λ2

    Raises:
        NumericalError: 非対称な入力
    """
    if beta < 0:
        raise ConfigError(f"beta は非負である必要があります: {beta}")
    n = L.shape[0]
    if n == 0:
        return float(beta)

    if n <= DENSE_DIM_GUARD:
        if not isinstance(L, np.ndarray):
            L = L.matmat(np.eye(n))
        norm = np.linalg.norm(L)
        if np.linalg.norm(L - L.T) > 1e-8 * max(norm, 1e-300):
            raise NumericalError("ラプラシアンが対称ではありません")
        values = scipy.linalg.eigvalsh(0.5 * (L + L.T))
        gap = _gap_from_eigenvalues(values, beta)
        return float(beta) if gap is None else gap

    op = L if isinstance(L, LinearOperator) else LinearOperator(L.shape, matvec=lambda x: L @ x, dtype=float)
    rng = stream(seed, STREAM_LANCZOS)
    x = rng.standard_normal(n)
    y = rng.standard_normal(n)
    lhs, rhs = float(y @ op.matvec(x)), float(x @ op.matvec(y))
    if abs(lhs - rhs) > 1e-8 * max(abs(lhs), abs(rhs), 1e-300):
        raise NumericalError("ラプラシアンが対称ではありません")

    # カーネル固有値を超えるまで k を増やす（デフレーション）
    k = min(6, n - 1)
    while True:
        values = eigsh(op, k=k, which="SA", v0=rng.standard_normal(n), return_eigenvectors=False)
        gap = _gap_from_eigenvalues(values, beta)
        if gap is not None or k >= n - 1:
            return float(beta) if gap is None else gap
        k = min(2 * k, n - 1)


@dataclass
class SpectralReport:
    """
    回路の λ2 診断

    Attributes:
        lambda2: スペクトルギャップ
        beta: 正則化
        scheme: 重みスキーム
        operator_norms: 辺ごとの ‖ρ_e‖_op
        weights: 辺ごとの重み
        connected: 下部の無向グラフが連結か
        warnings: 警告
    """
    lambda2: float
    beta: float
    scheme: str
    operator_norms: Dict[str, float]
    weights: Dict[str, float]
    connected: bool
    warnings: List[str] = field(default_factory=list)


def circuit_spectral_gap(
    circuit: Circuit,
    weighting: Optional[EdgeWeighting] = None,
    beta: float = 0.0,
    seed: int = 0,
) -> SpectralReport:
    """
    回路の λ2 を作用素ノルムとともに報告する

    非連結な回路ではギャップが消えるため λ2 = β として警告する。
    ラプラシアンのカーネルが自明な場合（整合的な切断が 0 だけ）も、λ2 が最小固有値であることを警告する。
    """
    weighting = weighting or EdgeWeighting()
    norms = {e.edge_id: operator_norm(e.map, seed=seed) for e in circuit.sorted_edges()}
    weights = weighting.resolve(circuit, seed=seed)
    connected = bool(circuit.nodes) and nx.is_weakly_connected(circuit.graph)
    warnings = []
    if not connected:
        msg = "回路が非連結のため λ2 = β（ギャップなし）とします"
        logger.warning(msg)
        warnings.append(msg)
        lam = float(beta)
    else:
        L = sheaf_laplacian(circuit, weighting, seed=seed)
        lam = spectral_gap(L, beta=beta, seed=seed)
        if isinstance(L, np.ndarray) and L.size:
            values = scipy.linalg.eigvalsh(L)
            if not np.any(values <= _kernel_tol(values)):
                msg = "ラプラシアンのカーネルが自明のため λ2 は最小固有値です（0 に近い値になり得ます）"
                logger.warning(msg)
                warnings.append(msg)
    return SpectralReport(lam, float(beta), weighting.scheme, norms, weights, connected, warnings)


# ----------------------------------------------------------------------
# 摂動に対する安定性
# ----------------------------------------------------------------------
@dataclass
class StabilityReport:
    """
    ‖Δŝ‖ ≤ (γ/λ2)‖η‖ の経験的検証

    Attributes:
        lhs: ‖Δŝ‖
        rhs: (γ/λ2)‖η‖
        ratio: lhs / rhs（η = 0 のとき 0）
        holds: ratio ≤ 1 + 1e-8
        lambda2: 使用した λ2
        gamma: 結合ゲイン
        eta_norm: ‖η‖
    """
    lhs: float
    rhs: float
    ratio: float
    holds: bool
    lambda2: float
    gamma: float
    eta_norm: float


def stability_bound_check(
    circuit: Circuit,
    a: ActivationState,
    eta: np.ndarray,
    gamma: Optional[float] = None,
    coupling: Optional[LinearMap] = None,
    weighting: Optional[EdgeWeighting] = None,
    beta: float = 0.0,
    seed: int = 0,
) -> StabilityReport:
    """
    回路外の摂動 η が結合 C（ゲイン γ）を通じて入ったときの切断の変化を評価する

    強制項 f = Cη に対する応答は Δŝ = Σ_{λ_i ∉ ker} v_i v_iᵀ f / (λ_i + β)。
    カーネル方向（整合的な平行移動）は不整合の補正に寄与しない。
    応答は線形なので ŝ(a + Cη) − ŝ(a) は a によらず L と Cη だけで決まる。
    a は形状の検証にのみ使う。

    Args:
        circuit: 回路
        a: 基準となる活性化状態（検証のみ、結果には影響しない）
        eta: 摂動ベクトル
        gamma: 結合ゲイン（coupling 省略時は C = γI、coupling 指定時は省略可）
        coupling: 結合写像 C（総次元 × len(eta)）
        weighting: 辺重み
        beta: 正則化
        seed: 作用素ノルム推定のシード

    Raises:
        NumericalError: 正則化なしで λ2 ≤ 0 の場合
    """
    a.check(circuit)
    eta = np.asarray(eta, dtype=float).ravel()
    n = circuit.total_dim

    if coupling is None:
        if gamma is None:
            raise ConfigError("gamma か coupling のどちらかを指定してください")
        if eta.shape[0] != n:
            raise CircuitError(f"η の長さが総次元と一致しません: 期待 {n}, 実際 {eta.shape[0]}")
        forcing = gamma * eta
    else:
        if coupling.shape != (n, eta.shape[0]):
            raise CircuitError(f"結合写像の形状が一致しません: 期待 {(n, eta.shape[0])}, 実際 {coupling.shape}")
        if gamma is None:
            gamma = operator_norm(coupling, seed=seed)
        forcing = coupling.matvec(eta)

    L = sheaf_laplacian(circuit, weighting, mode="dense", seed=seed)
    values, vectors = scipy.linalg.eigh(L) if n > 0 else (np.zeros(0), np.zeros((0, 0)))
    mask = values > _kernel_tol(values)
    if not np.any(mask):
        if beta <= 0:
            raise NumericalError("λ2 ≤ 0 です。beta > 0 で正則化してください")
        lam2 = float(beta)
    else:
        lam2 = float(values[mask][0]) + beta

    coeffs = vectors[:, mask].T @ forcing
    shift = vectors[:, mask] @ (coeffs / (values[mask] + beta))

    lhs = float(np.linalg.norm(shift))
    eta_norm = float(np.linalg.norm(eta))
    rhs = float(gamma) * eta_norm / lam2
    ratio = 0.0 if rhs == 0.0 else lhs / rhs
    return StabilityReport(lhs, rhs, ratio, ratio <= 1.0 + 1e-8, lam2, float(gamma), eta_norm)
