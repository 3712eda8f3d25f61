"""
Gaussian effective-information proxy.

    EI_G(J) = 1/2 log det(I + alpha J^T J)   (nats)

plus emergence (macro EI minus summed part EI), its positive part and the
normalized score, the alpha sensitivity, the small-alpha Frobenius
approximation and alpha selection by bisection.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import svds

from .circuit import (
    Circuit,
    Partition,
    macro_jacobian,
    part_jacobian,
    validate_circuit,
    validate_partition,
)
from .errors import CircuitError, ConfigError, NumericalError
from .linear_map import LinearMap
from .logdet import exact_logdet_spd, hutchinson_trace, hutchpp_logdet, slq_logdet
from .rng import STREAM_PROBES, stream
from .settings import default_seed
from .sheaf import operator_norm

logger = logging.getLogger(__name__)

# 高速モードの標準誤差がこの割合を超えたら低信頼とする
LOW_CONFIDENCE_RATIO = 0.25
# 小 α 近似のガード α σ_max² < 0.1
SMALL_ALPHA_GUARD = 0.1


@dataclass(frozen=True)
class EIConfig:
    """
    EI 計算の設定

    Attributes:
        alpha: SNR スケール σx²/σξ²（デフォルト: 1.0）
        epsilon: 正規化の下限（デフォルト: 1e-8）
        mode: "exact" または "fast"
        probes_part: パート項のプローブ数（推奨 4-8、デフォルト: 6）
        probes_macro: マクロ項のプローブ数（推奨 8-12、デフォルト: 10）
        lanczos_steps: プローブごとの Lanczos ステップ数（デフォルト: 30）
        seed: 乱数シード（デフォルト: EICS_SEED または 0）
        fast_estimator: "slq"、"hutchpp"、"frobenius"
        top_k: 厳密モードで上位 k 個の特異値だけを使う（None なら全て）
    """
    alpha: float = 1.0
    epsilon: float = 1e-8
    mode: str = "exact"
    probes_part: int = 6
    probes_macro: int = 10
    lanczos_steps: int = 30
    seed: int = field(default_factory=default_seed)
    fast_estimator: str = "slq"
    top_k: Optional[int] = None

    def __post_init__(self):
        if not (self.alpha > 0 and np.isfinite(self.alpha)):
            raise ConfigError(f"alpha は正の有限値である必要があります: {self.alpha}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon は正である必要があります: {self.epsilon}")
        if self.mode not in ("exact", "fast"):
            raise ConfigError(f"mode は exact か fast です: {self.mode}")
        if self.fast_estimator not in ("slq", "hutchpp", "frobenius"):
            raise ConfigError(f"未知の推定法です: {self.fast_estimator}")
        for name in ("probes_part", "probes_macro", "lanczos_steps"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} は1以上である必要があります")
        if self.top_k is not None and int(self.top_k) < 1:
            raise ConfigError(f"top_k は1以上である必要があります: {self.top_k}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EIEstimate:
    """
    1つの写像に対する EI の値

    Attributes:
        value: EI（nats）
        std_error: 標準誤差（厳密モードでは 0）
        mode: "exact" / "fast"
        method: "svd"、"eigh"、"top-k"、"slq"、"hutchpp"、"frobenius"、"small-alpha"
        n_probes: 使用プローブ数
        low_confidence: 標準誤差が推定値の 25% を超えた場合 True
        warnings: 警告
    """
    value: float
    std_error: float = 0.0
    mode: str = "exact"
    method: str = "svd"
    n_probes: int = 0
    low_confidence: bool = False
    warnings: List[str] = field(default_factory=list)


@dataclass
class EIReport:
    """
    創発 ΔEI の計算結果

    Attributes:
        ei_macro: EI(J_M)
        ei_parts: パートごとの EI
        part_labels: パート名
        delta_ei: EI(J_M) − Σ EI(J_v)（負もありうる）
        delta_ei_plus: max(0, delta_ei)
        normalized: delta_ei_plus / (ε + ei_macro)
        alpha, epsilon, mode, method: 評価条件
        probes_macro, probes_part: プローブ数（高速モード）
        ei_macro_se: マクロ項の標準誤差
        ei_parts_se: パート項の標準誤差
        delta_ei_se: ΔEI の標準誤差（二乗和の平方根で合成）
        low_confidence: いずれかの項が低信頼
        warnings: 警告
    """
    ei_macro: float
    ei_parts: List[float]
    part_labels: List[str]
    delta_ei: float
    delta_ei_plus: float
    normalized: float
    alpha: float
    epsilon: float
    mode: str
    method: str
    probes_macro: int = 0
    probes_part: int = 0
    ei_macro_se: float = 0.0
    ei_parts_se: List[float] = field(default_factory=list)
    delta_ei_se: float = 0.0
    low_confidence: bool = False
    warnings: List[str] = field(default_factory=list)


# ----------------------------------------------------------------------
# 内部ヘルパー
# ----------------------------------------------------------------------
def _singular_values(J: LinearMap, top_k: Optional[int] = None) -> Tuple[np.ndarray, str]:
    m, n = J.shape
    if top_k is not None and top_k < min(m, n) - 1 and not J.is_dense:
        s = svds(J.as_operator(), k=int(top_k), return_singular_vectors=False, random_state=0)
        return np.sort(s)[::-1], "top-k"
    s = scipy.linalg.svdvals(J.to_dense()) if min(m, n) > 0 else np.zeros(0)
    if not np.all(np.isfinite(s)):
        raise NumericalError("特異値が有限ではありません")
    if top_k is not None:
        return np.sort(s)[::-1][:int(top_k)], "top-k"
    return s, "svd"


def _gram_matvec(J: LinearMap, alpha: float):
    """小さい側の I + α JᵀJ（または I + α JJᵀ）の作用と次元"""
    m, n = J.shape
    if n <= m:
        return (lambda v: v + alpha * J.rmatvec(J.matvec(v))), n
    return (lambda v: v + alpha * J.matvec(J.rmatvec(v))), m


def _check_alpha(alpha: float):
    if not (alpha > 0 and np.isfinite(alpha)):
        raise ConfigError(f"alpha は正の有限値である必要があります: {alpha}")


# ----------------------------------------------------------------------
# 公開 API
# ----------------------------------------------------------------------
def ei_gaussian(
    J: LinearMap,
    alpha: float,
    mode: str = "exact",
    config: Optional[EIConfig] = None,
    probes: Optional[int] = None,
    term: int = 0,
) -> EIEstimate:
    """
    ガウス EI プロキシ ½ log det(I + α JᵀJ)（nats）

    厳密モード: 密行列は SVD、行列フリーは小さい側のグラム行列を固有値分解
    （Cholesky フォールバック）。高速モード: JVP/VJP だけを用いた確率的推定。

    Args:
        J: 写像
        alpha: SNR スケール（> 0）
        mode: "exact" または "fast"
        config: プローブ数やシード（省略時は EIConfig() の既定値）
        probes: プローブ数（省略時は config.probes_macro）
        term: 乱数ストリームを分けるための項番号

    Returns:
        EIEstimate: 値と標準誤差

    Raises:
        NumericalError: 特異値が有限でない場合
    """
    _check_alpha(alpha)
    config = config or EIConfig()
    if mode not in ("exact", "fast"):
        raise ConfigError(f"mode は exact か fast です: {mode}")

    if mode == "exact":
        if J.is_dense or config.top_k is not None:
            s, method = _singular_values(J, config.top_k)
            value = 0.5 * float(np.sum(np.log1p(alpha * s ** 2)))
        else:
            matvec, dim = _gram_matvec(J, alpha)
            A = np.column_stack([matvec(e) for e in np.eye(dim)])
            value = 0.5 * exact_logdet_spd(A)
            method = "eigh"
        if not np.isfinite(value):
            raise NumericalError(f"EI が有限ではありません: {value}")
        return EIEstimate(value=value, mode="exact", method=method)

    n_probes = int(probes or config.probes_macro)
    rng = stream(config.seed, STREAM_PROBES, term)
    if config.fast_estimator == "frobenius":
        est = hutchinson_trace(lambda v: J.rmatvec(J.matvec(v)), J.shape[1], n_probes, rng)
        value, se = 0.5 * alpha * est.value, 0.5 * alpha * est.std_error
    else:
        matvec, dim = _gram_matvec(J, alpha)
        estimator = slq_logdet if config.fast_estimator == "slq" else hutchpp_logdet
        est = estimator(matvec, dim, n_probes, config.lanczos_steps, rng)
        value, se = 0.5 * est.value, 0.5 * est.std_error

    if not np.isfinite(value):
        raise NumericalError(f"EI の推定値が有限ではありません: {value}")
    result = EIEstimate(value=value, std_error=se, mode="fast", method=config.fast_estimator, n_probes=est.n_probes)
    if not np.isfinite(se) or se > LOW_CONFIDENCE_RATIO * abs(value):
        result.low_confidence = True
        msg = f"高速モードの標準誤差が大きいため低信頼です (値 {value:.4g}, 標準誤差 {se:.4g})"
        result.warnings.append(msg)
        logger.warning(msg)
    return result


def ei_small_alpha(J: LinearMap, alpha: float, config: Optional[EIConfig] = None) -> EIEstimate:
    """
    小 α 近似 (α/2)‖J‖²_F

    α σ_max² ≥ 0.1 の場合は警告を付けて値を返す。行列フリーの写像では
    JᵀJ のトレースをハッチンソン推定する。
    """
    _check_alpha(alpha)
    config = config or EIConfig()
    warnings = []
    sigma = operator_norm(J, seed=config.seed)
    if alpha * sigma ** 2 >= SMALL_ALPHA_GUARD:
        msg = f"小 α 近似の適用範囲外です (α σ_max² = {alpha * sigma ** 2:.4g} ≥ {SMALL_ALPHA_GUARD})"
        logger.warning(msg)
        warnings.append(msg)

    if J.is_dense:
        value = 0.5 * alpha * float(np.sum(J.matrix ** 2))
        return EIEstimate(value=value, mode="exact", method="small-alpha", warnings=warnings)

    rng = stream(config.seed, STREAM_PROBES)
    est = hutchinson_trace(lambda v: J.rmatvec(J.matvec(v)), J.shape[1], config.probes_macro, rng)
    return EIEstimate(
        value=0.5 * alpha * est.value,
        std_error=0.5 * alpha * est.std_error,
        mode="fast",
        method="small-alpha",
        n_probes=est.n_probes,
        warnings=warnings,
    )


def ei_alpha_sensitivity(J: LinearMap, alpha: float) -> float:
    """
    ∂EI/∂α = ½ tr[(I + α JᵀJ)⁻¹ JᵀJ] = ½ Σ σ_i² / (1 + α σ_i²)

    Returns:
        float: nats / α
    """
    if not (alpha >= 0 and np.isfinite(alpha)):
        raise ConfigError(f"alpha は非負の有限値である必要があります: {alpha}")
    s, _ = _singular_values(J)
    return 0.5 * float(np.sum(s ** 2 / (1.0 + alpha * s ** 2)))


def _macro_map(circuit: Circuit, partition: Partition, part_maps: List[LinearMap]) -> LinearMap:
    if partition.macro == "circuit":
        return macro_jacobian(circuit, circuit.inputs, circuit.outputs)
    shapes = {m.shape for m in part_maps}
    if len(shapes) != 1:
        raise CircuitError(f"parallel-sum にはパートのヤコビアンの形状が揃っている必要があります: {sorted(shapes)}")
    total = part_maps[0]
    for m in part_maps[1:]:
        total = total + m
    return total


def delta_ei(circuit: Circuit, partition: Optional[Partition] = None, config: Optional[EIConfig] = None) -> EIReport:
    """
    創発 ΔEI = EI(J_M) − Σ_parts EI(J_v) と正規化値 ΔEI⁺ / (ε + EI(J_M))

    Args:
        circuit: 回路
        partition: 分割（省略時はノードごと）
        config: EI の設定

    Returns:
        EIReport: 各項と正規化創発

    Raises:
        CircuitError: 回路またはパーティションが不正な場合
    """
    config = config or EIConfig()
    validate_circuit(circuit).raise_if_invalid()
    partition = partition or Partition.per_node(circuit)
    problems = validate_partition(circuit, partition)
    if problems:
        raise CircuitError("パーティションが不正です: " + "; ".join(problems), problems)

    part_maps = [part_jacobian(circuit, p) for p in partition.parts]
    J_M = _macro_map(circuit, partition, part_maps)

    macro = ei_gaussian(J_M, config.alpha, config.mode, config, probes=config.probes_macro, term=0)
    parts = [
        ei_gaussian(m, config.alpha, config.mode, config, probes=config.probes_part, term=i + 1)
        for i, m in enumerate(part_maps)
    ]

    ei_parts = [p.value for p in parts]
    d = macro.value - float(np.sum(ei_parts))
    d_plus = max(0.0, d)
    normalized = d_plus / (config.epsilon + macro.value)

    se_terms = [macro.std_error] + [p.std_error for p in parts]
    warnings = list(macro.warnings) + [w for p in parts for w in p.warnings]
    if J_M.structurally_zero:
        warnings.append("入力から出力への経路がないためマクロヤコビアンは零写像です")

    return EIReport(
        ei_macro=macro.value,
        ei_parts=ei_parts,
        part_labels=[p.label for p in partition.parts],
        delta_ei=d,
        delta_ei_plus=d_plus,
        normalized=normalized,
        alpha=config.alpha,
        epsilon=config.epsilon,
        mode=config.mode,
        method=macro.method,
        probes_macro=macro.n_probes,
        probes_part=parts[0].n_probes if parts else 0,
        ei_macro_se=macro.std_error,
        ei_parts_se=[p.std_error for p in parts],
        delta_ei_se=float(np.sqrt(np.sum(np.square(se_terms)))),
        low_confidence=macro.low_confidence or any(p.low_confidence for p in parts),
        warnings=warnings,
    )


@dataclass
class AlphaSelection:
    """
    α 選択の結果

    Attributes:
        alpha: 選ばれた α
        ei: その α での EI(J_M)
        iterations: 二分法の反復回数
        converged: 目標区間に入ったか
    """
    alpha: float
    ei: float
    iterations: int
    converged: bool


def select_alpha(J_M: LinearMap, target_range: Tuple[float, float], max_iter: int = 100) -> AlphaSelection:
    """
    EI(J_M) が目標区間 [low, high] に入るよう log α 上の二分法で α を選ぶ

    EI は α に対して単調増加なので、J_M ≠ 0 なら必ず収束する。

    Args:
        J_M: マクロヤコビアン
        target_range: (low, high)、0 < low ≤ high（nats）
        max_iter: 最大反復回数

    Raises:
        NumericalError: 実行不可能な場合（J_M = 0、オーバーフロー）
    """
    low, high = float(target_range[0]), float(target_range[1])
    if not (0 < low <= high):
        raise ConfigError(f"目標区間は 0 < low ≤ high である必要があります: {target_range}")

    s, _ = _singular_values(J_M)
    if s.size == 0 or float(np.max(s)) == 0.0:
        raise NumericalError("J_M が零写像のため、どの α でも EI = 0 です（実行不可能）")

    def ei(alpha: float) -> float:
        return 0.5 * float(np.sum(np.log1p(alpha * s ** 2)))

    tol = 1e-12 * max(1.0, high)

    def inside(value: float) -> bool:
        return low - tol <= value <= high + tol

    log_lo, log_hi = 0.0, 0.0
    while ei(np.exp(log_hi)) < low:
        log_hi += np.log(10.0)
        if log_hi > np.log(1e300):
            raise NumericalError(f"α → ∞ でも EI が下限 {low} に届きません（最大 EI {ei(np.exp(log_hi)):.4g}）")
    while ei(np.exp(log_lo)) > high:
        log_lo -= np.log(10.0)
        if log_lo < np.log(1e-300):
            raise NumericalError(f"α → 0 でも EI が上限 {high} を下回りません")

    for alpha_candidate in (np.exp(log_lo), np.exp(log_hi)):
        if inside(ei(alpha_candidate)):
            return AlphaSelection(float(alpha_candidate), ei(alpha_candidate), 0, True)

    mid = 0.5 * (log_lo + log_hi)
    for it in range(1, max_iter + 1):
        mid = 0.5 * (log_lo + log_hi)
        value = ei(np.exp(mid))
        if inside(value):
            return AlphaSelection(float(np.exp(mid)), value, it, True)
        if value < low:
            log_lo = mid
        else:
            log_hi = mid

    alpha = float(np.exp(mid))
    logger.warning("α の二分法が %d 回で収束しませんでした (EI = %.6g)", max_iter, ei(alpha))
    return AlphaSelection(alpha, ei(alpha), max_iter, False)
