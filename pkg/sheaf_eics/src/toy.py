"""
Two-branch toy circuit and noise sweep.

Six nodes n1..n6 of dimension D joined by W13, W23, W34, W35, W46, W56.
Branch 2 maps are mixed toward branch 1 by `align`; the noise scale tau
decoheres W35 and W56 toward fresh random maps (h = min(1, tau/2)) and adds
tau * N(0, I) to every node activation.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from .baselines import ActivationBatch, ear, eac
from .circuit import (
    ActivationState,
    Circuit,
    EdgeSpec,
    NodeSpec,
    PartSpec,
    Partition,
    forward_activations,
)
from .ei import EIConfig, delta_ei
from .eics import compose_score
from .errors import ConfigError
from .linear_map import LinearMap
from .rng import STREAM_BASELINE, STREAM_DECOHERENCE, STREAM_MAIN, stream
from .sheaf import sheaf_inconsistency

logger = logging.getLogger(__name__)

NODES = ("n1", "n2", "n3", "n4", "n5", "n6")
EDGES = (("n1", "n3"), ("n2", "n3"), ("n3", "n4"), ("n3", "n5"), ("n4", "n6"), ("n5", "n6"))
# 行列のスケール（第1層 0.8、それ以外 0.9）
SCALE_FIRST = 0.8
SCALE_REST = 0.9

CSV_COLUMNS = [
    "tau", "eics_mean", "eics_se", "csh_mean", "csh_se",
    "invcsh_mean", "invcsh_se", "dei_mean", "dei_se", "n_seeds",
]
BASELINE_COLUMNS = ["eac_mean", "eac_se", "ear_mean", "ear_se"]


@dataclass(frozen=True)
class ToyConfig:
    """
    トイ回路とスイープの設定

    Attributes:
        dim: ノード次元 D（デフォルト: 32）
        align: 分岐間の整列度 [0, 1]（デフォルト: 0.9）
        alpha: SNR スケール（デフォルト: 1.0）
        taus: ノイズスケールのグリッド（デフォルト: [0, 2] の 11 点）
        n_seeds: τ ごとのシード数（デフォルト: 100）
        base_seed: 最初のシード（デフォルト: 1000）
        epsilon: 正規化の下限（デフォルト: 1e-8）
        mode: EI の評価モード "exact" / "fast"
        node_noise: ノードノイズ τ·N(0, I) を加えるか
        clean_forward: True なら活性化を元の写像で計算し、辺にはデコヒーレンス後の写像を載せる
        with_baselines: EAC / EAR も計算するか
        baseline_batch: EAR のバッチサイズ
    """
    dim: int = 32
    align: float = 0.9
    alpha: float = 1.0
    taus: Tuple[float, ...] = tuple(float(t) for t in np.linspace(0.0, 2.0, 11))
    n_seeds: int = 100
    base_seed: int = 1000
    epsilon: float = 1e-8
    mode: str = "exact"
    node_noise: bool = True
    clean_forward: bool = False
    with_baselines: bool = False
    baseline_batch: int = 64

    def __post_init__(self):
        object.__setattr__(self, "taus", tuple(float(t) for t in self.taus))
        if int(self.dim) < 1:
            raise ConfigError(f"dim は1以上である必要があります: {self.dim}")
        if not 0.0 <= self.align <= 1.0:
            raise ConfigError(f"align は [0, 1] の範囲である必要があります: {self.align}")
        if not self.alpha > 0:
            raise ConfigError(f"alpha は正である必要があります: {self.alpha}")
        if not self.taus:
            raise ConfigError("taus が空です")
        if any(t < 0 for t in self.taus):
            raise ConfigError(f"tau は非負である必要があります: {self.taus}")
        if int(self.n_seeds) < 1:
            raise ConfigError(f"n_seeds は1以上である必要があります: {self.n_seeds}")
        if int(self.baseline_batch) < 1:
            raise ConfigError(f"baseline_batch は1以上である必要があります: {self.baseline_batch}")
        if self.mode not in ("exact", "fast"):
            raise ConfigError(f"mode は exact か fast です: {self.mode}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["taus"] = list(self.taus)
        return d


@dataclass
class ToyMetrics:
    """
    1つの (τ, seed) での指標

    Attributes:
        c_sh: 不整合エネルギー
        emergence: 正規化創発 ΔẼI
        eics: EICS
        consistency: 1/(1+C_sh)
        eac: EAC（with_baselines のときのみ）
        ear: EAR（with_baselines のときのみ）
    """
    c_sh: float
    emergence: float
    eics: float
    consistency: float
    eac: Optional[float] = None
    ear: Optional[float] = None


def rand_matrix(dim: int, scale: float, rng: np.random.Generator) -> np.ndarray:
    """scale · N(0, 1) / √D の正方行列"""
    return scale * rng.normal(size=(dim, dim)) / np.sqrt(dim)


def branch_matrices(cfg: ToyConfig, rng: np.random.Generator) -> Dict[str, np.ndarray]:
    """
    分岐の写像を生成（分岐2は align で分岐1と混合）

    Returns:
        Dict: "W13" などのキーで6つの行列
    """
    D, align = cfg.dim, cfg.align
    U = rand_matrix(D, SCALE_FIRST, rng)
    A = rand_matrix(D, SCALE_REST, rng)
    W = rand_matrix(D, SCALE_REST, rng)
    return {
        "W13": U,
        "W23": (1 - align) * rand_matrix(D, SCALE_FIRST, rng) + align * U,
        "W34": A,
        "W35": (1 - align) * rand_matrix(D, SCALE_REST, rng) + align * A,
        "W46": W,
        "W56": (1 - align) * rand_matrix(D, SCALE_REST, rng) + align * W,
    }


def decoherence(tau: float) -> float:
    """h = min(1, τ/2)"""
    return min(1.0, tau / 2.0)


def decohere(cfg: ToyConfig, mats: Dict[str, np.ndarray], tau: float, seed: int) -> Dict[str, np.ndarray]:
    """W56 と W35 を新しい乱数行列へ h だけ混ぜる（デコヒーレンス用ストリーム）"""
    h = decoherence(tau)
    rng = stream(seed, STREAM_DECOHERENCE)
    out = dict(mats)
    out["W56"] = (1 - h) * mats["W56"] + h * rand_matrix(cfg.dim, SCALE_REST, rng)
    out["W35"] = (1 - h) * mats["W35"] + h * rand_matrix(cfg.dim, SCALE_REST, rng)
    return out


def _circuit_from(cfg: ToyConfig, mats: Dict[str, np.ndarray]) -> Circuit:
    nodes = [NodeSpec(n, cfg.dim) for n in NODES]
    edges = [EdgeSpec(u, v, LinearMap.dense(mats[f"W{u[1]}{v[1]}"])) for u, v in EDGES]
    return Circuit(nodes, edges, inputs=["n1", "n2"], outputs=["n6"])


def branch_partition() -> Partition:
    """2分岐のパーティション（n3, n6 を共有する辺素なパス、マクロは分岐の和）"""
    return Partition(
        parts=(
            PartSpec(nodes=("n1", "n3", "n4", "n6"), inputs=("n1",), outputs=("n6",), name="branch1"),
            PartSpec(nodes=("n2", "n3", "n5", "n6"), inputs=("n2",), outputs=("n6",), name="branch2"),
        ),
        kind="paths",
        macro="parallel-sum",
    )


def build_toy_circuit(cfg: ToyConfig, seed: int, tau: float = 0.0) -> Tuple[Circuit, Partition]:
    """
    トイ回路を構築

    Args:
        cfg: 設定
        seed: シード
        tau: ノイズスケール（W35, W56 のデコヒーレンスに使用）

    Returns:
        (Circuit, Partition): 回路と2分岐パーティション
    """
    mats = decohere(cfg, branch_matrices(cfg, stream(seed, STREAM_MAIN)), tau, seed)
    return _circuit_from(cfg, mats), branch_partition()


def _noisy_forward(cfg: ToyConfig, forward: Circuit, tau: float, rng: np.random.Generator) -> ActivationState:
    D = cfg.dim
    clean = forward_activations(forward, {"n1": rng.normal(size=D), "n2": rng.normal(size=D)})
    if not cfg.node_noise:
        return clean
    return ActivationState({n: clean[n] + tau * rng.normal(size=D) for n in NODES})


def metrics_at_tau(cfg: ToyConfig, tau: float, seed: int) -> ToyMetrics:
    """
    1つの (τ, seed) で C_sh、ΔẼI、EICS を計算

    活性化は a3 = W13 a1 + W23 a2, a4 = W34 a3, a5 = W35 a3,
    a6 = W46 a4 + W56 a5 で計算し、各ノードに τ·N(0, I) を加える。
    """
    if tau < 0:
        raise ConfigError(f"tau は非負である必要があります: {tau}")
    rng = stream(seed, STREAM_MAIN)
    clean_mats = branch_matrices(cfg, rng)
    mats = decohere(cfg, clean_mats, tau, seed)
    circuit = _circuit_from(cfg, mats)
    forward = _circuit_from(cfg, clean_mats) if cfg.clean_forward else circuit
    partition = branch_partition()

    a = _noisy_forward(cfg, forward, tau, rng)
    c_sh = sheaf_inconsistency(circuit, a, cfg.epsilon).c_sh
    ei_cfg = EIConfig(alpha=cfg.alpha, epsilon=cfg.epsilon, mode=cfg.mode, seed=seed)
    emergence = delta_ei(circuit, partition, ei_cfg).normalized
    metrics = ToyMetrics(
        c_sh=c_sh,
        emergence=emergence,
        eics=compose_score(c_sh, emergence),
        consistency=1.0 / (1.0 + c_sh),
    )

    if cfg.with_baselines:
        metrics.eac = eac(circuit, a).value
        brng = stream(seed, STREAM_BASELINE)
        batch = ActivationBatch(_noisy_forward(cfg, forward, tau, brng) for _ in range(cfg.baseline_batch))
        metrics.ear = ear(circuit, batch).value
    return metrics


@dataclass
class SweepRow:
    """
    τ ごとの集計（平均と標準誤差 ddof=1 / √N）

    n_seeds = 1 のとき標準誤差は NaN。
    """
    tau: float
    eics_mean: float
    eics_se: float
    csh_mean: float
    csh_se: float
    invcsh_mean: float
    invcsh_se: float
    dei_mean: float
    dei_se: float
    n_seeds: int
    eac_mean: Optional[float] = None
    eac_se: Optional[float] = None
    ear_mean: Optional[float] = None
    ear_se: Optional[float] = None


@dataclass
class SweepResult:
    """
    スイープ結果

    Attributes:
        config: 使用した設定
        rows: τ ごとの集計
        samples: (τ, seed) ごとの指標（pandas DataFrame）
        warnings: 警告
    """
    config: ToyConfig
    rows: List[SweepRow]
    samples: pd.DataFrame
    warnings: List[str] = field(default_factory=list)

    @property
    def columns(self) -> List[str]:
        return CSV_COLUMNS + (BASELINE_COLUMNS if self.config.with_baselines else [])

    @property
    def frame(self) -> pd.DataFrame:
        """集計表（CSV と同じ列）"""
        return pd.DataFrame([asdict(r) for r in self.rows])[self.columns]

    def to_csv(self, path: Optional[str] = None) -> str:
        """
        集計表を CSV に変換（実数は17桁、NaN は空欄）

        Args:
            path: 指定すればファイルにも書き出す
        """
        text = self.frame.to_csv(index=False, float_format="%.17g", na_rep="", lineterminator="\n")
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as f:
                f.write(text)
        return text

    def plot_data_csv(self, path: Optional[str] = None) -> str:
        """図の3曲線 (EICS, 1/(1+C_sh), ΔẼI) のデータ"""
        frame = self.frame.rename(columns={"eics_mean": "eics", "invcsh_mean": "invcsh", "dei_mean": "dei"})
        text = frame[["tau", "eics", "invcsh", "dei"]].to_csv(
            index=False, float_format="%.17g", na_rep="", lineterminator="\n"
        )
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as f:
                f.write(text)
        return text

    def gnuplot_script(self, data_path: str, output: str = "fig_toy_noise_curve.pdf") -> str:
        """plot_data_csv の出力を描画する gnuplot スクリプト"""
        return "\n".join([
            "set terminal pdfcairo size 6.2in,4.2in",
            f"set output '{output}'",
            "set datafile separator ','",
            "set key autotitle columnhead",
            "set xlabel 'Noise scale tau'",
            "set ylabel 'Score (unitless)'",
            "set title 'Toy sanity-check: effect of noise on EICS and components'",
            "set grid",
            f"plot '{data_path}' using 1:2 with linespoints title 'EICS', \\",
            f"     '{data_path}' using 1:3 with lines dashtype 2 title '1/(1+C_sh)', \\",
            f"     '{data_path}' using 1:4 with lines dashtype 3 title 'normalized emergence'",
            "",
        ])


def _evaluate(args: Tuple[ToyConfig, int, int]) -> Tuple[int, int, ToyMetrics]:
    cfg, tau_index, seed_index = args
    tau = cfg.taus[tau_index]
    return tau_index, seed_index, metrics_at_tau(cfg, tau, cfg.base_seed + seed_index)


def _mean_se(values: pd.Series) -> Tuple[float, float]:
    # pandas の sem は ddof=1 / √N（N=1 なら NaN）
    return float(values.mean()), float(values.sem(ddof=1))


def sweep(cfg: Optional[ToyConfig] = None, jobs: int = 1) -> SweepResult:
    """
    τ のグリッドとシード base_seed + k について metrics_at_tau を評価し集計する

    Args:
        cfg: 設定（デフォルト: ToyConfig()）
        jobs: 並列プロセス数（集計順は (τ, seed) の順で固定）

    Returns:
        SweepResult: 集計行とサンプル
    """
    cfg = cfg or ToyConfig()
    if jobs < 1:
        raise ConfigError(f"jobs は1以上である必要があります: {jobs}")
    tasks = [(cfg, i, k) for i in range(len(cfg.taus)) for k in range(cfg.n_seeds)]
    logger.info("スイープ開始: τ %d 点 × シード %d (jobs=%d)", len(cfg.taus), cfg.n_seeds, jobs)

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_evaluate, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        results = [_evaluate(t) for t in tasks]
    results.sort(key=lambda r: (r[0], r[1]))

    records = []
    for tau_index, seed_index, m in results:
        record = {"tau_index": tau_index, "tau": cfg.taus[tau_index], "seed": cfg.base_seed + seed_index}
        record.update(asdict(m))
        records.append(record)
    samples = pd.DataFrame(records)

    rows = []
    for tau_index, group in samples.groupby("tau_index", sort=True):
        eics_m, eics_s = _mean_se(group["eics"])
        csh_m, csh_s = _mean_se(group["c_sh"])
        inv_m, inv_s = _mean_se(group["consistency"])
        dei_m, dei_s = _mean_se(group["emergence"])
        row = SweepRow(
            tau=float(cfg.taus[tau_index]),
            eics_mean=eics_m, eics_se=eics_s,
            csh_mean=csh_m, csh_se=csh_s,
            invcsh_mean=inv_m, invcsh_se=inv_s,
            dei_mean=dei_m, dei_se=dei_s,
            n_seeds=int(len(group)),
        )
        if cfg.with_baselines:
            row.eac_mean, row.eac_se = _mean_se(group["eac"])
            row.ear_mean, row.ear_se = _mean_se(group["ear"])
        rows.append(row)

    warnings = []
    if cfg.n_seeds == 1:
        msg = "n_seeds = 1 のため標準誤差は定義されません（NaN）"
        logger.warning(msg)
        warnings.append(msg)
    return SweepResult(cfg, rows, samples, warnings)


def print_sweep(result: SweepResult):
    """スイープ結果を見やすく表示"""
    print("\n" + "=" * 70)
    print("トイ回路のノイズスイープ")
    print("=" * 70)
    print(f"{'tau':>6} {'EICS':>10} {'1/(1+C_sh)':>12} {'ΔẼI':>10} {'C_sh':>10}")
    for r in result.rows:
        print(f"{r.tau:6.2f} {r.eics_mean:10.4f} {r.invcsh_mean:12.4f} {r.dei_mean:10.4f} {r.csh_mean:10.4f}")
    for w in result.warnings:
        print(f"⚠️  {w}")
    print("=" * 70)
