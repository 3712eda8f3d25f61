"""
Effective-Information Consistency Score.

    EICS = normalized emergence / (1 + C_sh)

Composes the sheaf inconsistency and the Gaussian emergence proxy computed
on the same single-pass activation state, together with the two ablations
(consistency factor alone, emergence alone) and threshold selection.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from .circuit import ActivationState, Circuit, Partition, validate_circuit
from .ei import EIConfig, EIReport, delta_ei
from .errors import CircuitError, ConfigError, NumericalError
from .sheaf import (
    EdgeWeighting,
    SheafReport,
    SpectralReport,
    circuit_spectral_gap,
    least_squares_section,
    sheaf_inconsistency,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScoreOptions:
    """
    スコア計算のオプション

    Attributes:
        csh_on: "raw"（観測活性化 a）または "projected"（最小二乗切断 ŝ）
        compute_lambda2: λ2 診断を計算するか（スコアには影響しない）
        weighting: λ2 の辺重み（デフォルト: 逆作用素ノルム）
        beta: λ2 の正則化
    """
    csh_on: str = "raw"
    compute_lambda2: bool = False
    weighting: EdgeWeighting = field(default_factory=lambda: EdgeWeighting("inverse-operator-norm"))
    beta: float = 0.0

    def __post_init__(self):
        if self.csh_on not in ("raw", "projected"):
            raise ConfigError(f"csh_on は raw か projected です: {self.csh_on}")
        if self.beta < 0:
            raise ConfigError(f"beta は非負である必要があります: {self.beta}")

    def to_dict(self) -> dict:
        return {
            "csh_on": self.csh_on,
            "compute_lambda2": self.compute_lambda2,
            "weighting": self.weighting.scheme,
            "beta": self.beta,
        }


class EICSResult:
    """EICS の計算結果を格納するクラス"""

    def __init__(
        self,
        score: float,
        sheaf: SheafReport,
        ei: EIReport,
        config: EIConfig,
        options: ScoreOptions,
        spectral: Optional[SpectralReport] = None,
    ):
        self.score = score
        self.sheaf = sheaf
        self.ei = ei
        self.config = config
        self.options = options
        self.spectral = spectral

    @property
    def c_sh(self) -> float:
        return self.sheaf.c_sh

    @property
    def consistency_factor(self) -> float:
        return 1.0 / (1.0 + self.sheaf.c_sh)

    @property
    def emergence(self) -> float:
        return self.ei.normalized

    @property
    def ablation_a1(self) -> float:
        """整合性因子のみ"""
        return self.consistency_factor

    @property
    def ablation_a2(self) -> float:
        """正規化創発のみ"""
        return self.emergence

    @property
    def lambda2(self) -> Optional[float]:
        return self.spectral.lambda2 if self.spectral is not None else None

    @property
    def seed(self) -> int:
        return self.config.seed

    @property
    def warnings(self) -> List[str]:
        extra = self.spectral.warnings if self.spectral is not None else []
        return list(self.ei.warnings) + list(extra)

    def to_dict(self) -> Dict[str, object]:
        """結果ファイル用の辞書（設定のスナップショットを含む）"""
        spectral = None
        if self.spectral is not None:
            spectral = {
                "lambda2": self.spectral.lambda2,
                "beta": self.spectral.beta,
                "scheme": self.spectral.scheme,
                "operator_norms": self.spectral.operator_norms,
                "weights": self.spectral.weights,
                "connected": self.spectral.connected,
            }
        return {
            "score": self.score,
            "c_sh": self.c_sh,
            "consistency_factor": self.consistency_factor,
            "emergence": self.emergence,
            "ablation_a1": self.ablation_a1,
            "ablation_a2": self.ablation_a2,
            "lambda2": self.lambda2,
            "seed": self.seed,
            "sheaf": {
                "residual_norms": self.sheaf.residual_norms,
                "numerator": self.sheaf.numerator,
                "denominator": self.sheaf.denominator,
                "epsilon": self.sheaf.epsilon,
                "degenerate": self.sheaf.degenerate,
                "map_applications": self.sheaf.map_applications,
            },
            "ei": asdict(self.ei),
            "spectral": spectral,
            "config": self.config.to_dict(),
            "options": self.options.to_dict(),
            "warnings": self.warnings,
        }

    def __repr__(self):
        return (f"EICSResult(score={self.score:.6f}, "
                f"c_sh={self.c_sh:.6f}, "
                f"emergence={self.emergence:.6f})")


def compose_score(c_sh: float, emergence: float) -> float:
    """
    EICS = emergence / (1 + C_sh)

    Raises:
        NumericalError: 入力が有限でない、または C_sh < 0 の場合
    """
    if not (np.isfinite(c_sh) and np.isfinite(emergence)):
        raise NumericalError(f"スコアの入力が有限ではありません: C_sh={c_sh}, emergence={emergence}")
    if c_sh < 0:
        raise NumericalError(f"C_sh は非負である必要があります: {c_sh}")
    return float(emergence) / (1.0 + float(c_sh))


def eics_score(
    circuit: Circuit,
    a: ActivationState,
    partition: Optional[Partition] = None,
    config: Optional[EIConfig] = None,
    options: Optional[ScoreOptions] = None,
) -> EICSResult:
    """
    単一の活性化状態から EICS を計算する

    同じ状態 a に対して不整合エネルギーと創発を評価する。入力側の
    サンプリングは行わないため、同じ入力とシードからは同じ結果が得られる。

    Args:
        circuit: 回路
        a: 活性化状態
        partition: 分割（省略時はノードごと）
        config: EI の設定
        options: スコアのオプション

    Returns:
        EICSResult: スコアと各成分

    Raises:
        CircuitError: 回路または活性化が不正な場合
        NumericalError: 数値計算に失敗した場合
    """
    config = config or EIConfig()
    options = options or ScoreOptions()
    validate_circuit(circuit).raise_if_invalid()
    a.check(circuit)

    state = a
    if options.csh_on == "projected":
        section, energy = least_squares_section(circuit, a)
        logger.debug("最小二乗切断へ射影しました（除去エネルギー %.6g）", energy)
        state = ActivationState(dict(section.items()))

    sheaf_report = sheaf_inconsistency(circuit, state, config.epsilon)
    ei_report = delta_ei(circuit, partition, config)
    score = compose_score(sheaf_report.c_sh, ei_report.normalized)

    spectral = None
    if options.compute_lambda2:
        spectral = circuit_spectral_gap(circuit, options.weighting, options.beta, seed=config.seed)
        sheaf_report.lambda2 = spectral.lambda2
        sheaf_report.beta = spectral.beta

    return EICSResult(score, sheaf_report, ei_report, config, options, spectral)


@dataclass
class ThresholdResult:
    """
    閾値選択の結果（score ≥ tau を陽性と予測）

    Attributes:
        tau: 選ばれた閾値
        auroc: 順位統計による AUROC
        f1: tau での F1
    """
    tau: float
    auroc: float
    f1: float


def _f1(predicted: np.ndarray, labels: np.ndarray) -> float:
    tp = float(np.sum(predicted & labels))
    fp = float(np.sum(predicted & ~labels))
    fn = float(np.sum(~predicted & labels))
    return 0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn)


def threshold_select(scores: Sequence[Tuple[float, bool]]) -> ThresholdResult:
    """
    AUROC を計算し、F1 を最大化する閾値を選ぶ

    候補は最小スコアと、隣り合う相異なるスコアの中点。同点の場合は
    最も低い閾値を採用する。

    Args:
        scores: (スコア, ラベル) のリスト

    Returns:
        ThresholdResult: 閾値、AUROC、F1

    Raises:
        CircuitError: 陽性と陰性の両方が含まれない場合
    """
    if not scores:
        raise CircuitError("スコアが空です")
    values = np.array([float(s) for s, _ in scores])
    labels = np.array([bool(l) for _, l in scores])
    n_pos = int(np.sum(labels))
    n_neg = labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise CircuitError("陽性と陰性の両方のラベルが必要です")
    if not np.all(np.isfinite(values)):
        raise NumericalError("スコアに非有限値が含まれています")

    # 同順位は平均順位（すべて同点なら 0.5）
    ranks = rankdata(values)
    auroc = (float(np.sum(ranks[labels])) - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)

    unique = np.unique(values)
    candidates = np.concatenate([unique[:1], 0.5 * (unique[:-1] + unique[1:])])
    best_tau, best_f1 = float(candidates[0]), -1.0
    for tau in candidates:
        f1 = _f1(values >= tau, labels)
        if f1 > best_f1:
            best_tau, best_f1 = float(tau), f1
    return ThresholdResult(best_tau, auroc, best_f1)


def print_result(result: EICSResult):
    """結果を見やすく表示"""
    print("\n" + "=" * 60)
    print("EICS 計算結果")
    print("=" * 60)
    print(f"\nEICS: {result.score:.6f}")
    print(f"  不整合エネルギー C_sh: {result.c_sh:.6f}")
    print(f"  整合性因子 1/(1+C_sh) (A1): {result.consistency_factor:.6f}")
    print(f"  正規化創発 ΔẼI (A2): {result.emergence:.6f}")
    print(f"  EI(J_M): {result.ei.ei_macro:.6f} nats")
    print(f"  ΔEI: {result.ei.delta_ei:.6f} nats")
    if result.lambda2 is not None:
        print(f"  λ2: {result.lambda2:.6f}")
    for w in result.warnings:
        print(f"  ⚠️  {w}")
    print("=" * 60)
