"""
Command-line interface.

    python -m src.cli score      --circuit c.json --activations a.json [--output r.json]
    python -m src.cli toy-sweep  [--taus 0 0.5 1] [--n-seeds 100] [--output sweep.csv]
    python -m src.cli lambda2    --circuit c.json [--weighting unit] [--beta 0]
    python -m src.cli baselines  --circuit c.json [--activations a.json] [--batch b.json]
    python -m src.cli validate   --circuit c.json

Exit codes: 0 ok, 2 input error, 3 numeric error.
"""

import argparse
import datetime
import logging
import sys
from dataclasses import replace
from typing import List, Optional

from .baselines import ear, eac
from .circuit import validate_circuit, validate_partition
from .ei import EIConfig
from .eics import ScoreOptions, eics_score
from .errors import CircuitError, ConfigError, NumericalError
from .file_formats import (
    load_activations,
    load_batch,
    load_circuit_with_partition,
    load_config,
    save_result,
    save_sweep_csv,
)
from .settings import configure_logging, default_jobs
from .sheaf import EdgeWeighting, circuit_spectral_gap
from .toy import ToyConfig, sweep

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3


def _timestamp(args) -> Optional[str]:
    if not getattr(args, "timestamp", False):
        return None
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def _overrides(args, mapping) -> dict:
    """None でない CLI 引数だけを設定フィールドへ対応付ける"""
    return {field: getattr(args, name) for name, field in mapping.items() if getattr(args, name, None) is not None}


def _ei_config(args) -> EIConfig:
    base = load_config(args.config)[0] if args.config else EIConfig()
    values = _overrides(args, {
        "alpha": "alpha",
        "epsilon": "epsilon",
        "mode": "mode",
        "probes_part": "probes_part",
        "probes_macro": "probes_macro",
        "lanczos_steps": "lanczos_steps",
        "estimator": "fast_estimator",
        "seed": "seed",
    })
    return replace(base, **values)


# ----------------------------------------------------------------------
# サブコマンド
# ----------------------------------------------------------------------
def cmd_score(args) -> int:
    """スコアを計算して結果ファイルを書き出す"""
    config = _ei_config(args)
    circuit, file_partition = load_circuit_with_partition(args.circuit)
    a = load_activations(args.activations)

    partition = None
    if args.partition == "file":
        if file_partition is None:
            raise CircuitError(f"{args.circuit}: パーティションが定義されていません")
        partition = file_partition
    options = ScoreOptions(
        csh_on=args.csh_on,
        compute_lambda2=args.lambda2,
        weighting=EdgeWeighting(args.weighting),
        beta=args.beta,
    )
    result = eics_score(circuit, a, partition, config, options)

    if args.output:
        save_result(result, args.output, timestamp=_timestamp(args))
    line = (f"✓ EICS = {result.score:.6f} "
            f"(C_sh = {result.c_sh:.6f}, ΔẼI = {result.emergence:.6f}")
    if result.lambda2 is not None:
        line += f", λ2 = {result.lambda2:.6f}"
    if config.mode == "fast":
        line += f", ΔEI SE = {result.ei.delta_ei_se:.3g}"
    print(line + ")")
    for w in result.warnings:
        print(f"⚠️  {w}")
    return EXIT_OK


def cmd_toy_sweep(args) -> int:
    """トイ回路のノイズスイープ（CSV とプロット用データ）"""
    base = load_config(args.config)[1] if args.config else ToyConfig()
    values = _overrides(args, {
        "dim": "dim",
        "align": "align",
        "alpha": "alpha",
        "epsilon": "epsilon",
        "n_seeds": "n_seeds",
        "seed": "base_seed",
        "mode": "mode",
    })
    if args.taus is not None:
        values["taus"] = tuple(args.taus)
    if args.with_baselines:
        values["with_baselines"] = True
    cfg = replace(base, **values)

    result = sweep(cfg, jobs=args.jobs)
    if args.output:
        save_sweep_csv(result, args.output)
    else:
        sys.stdout.write(result.to_csv())
    if args.plot_data:
        result.plot_data_csv(args.plot_data)
    if args.gnuplot:
        with open(args.gnuplot, "w", encoding="utf-8", newline="") as f:
            f.write(result.gnuplot_script(args.plot_data or "plot_data.csv"))
    if args.result:
        save_result(result, args.result, timestamp=_timestamp(args))

    first, last = result.rows[0], result.rows[-1]
    print(f"✓ {len(result.rows)} 点 × {cfg.n_seeds} シード: "
          f"EICS {first.eics_mean:.4f} (τ={first.tau:g}) → {last.eics_mean:.4f} (τ={last.tau:g})",
          file=sys.stderr if not args.output else sys.stdout)
    for w in result.warnings:
        print(f"⚠️  {w}", file=sys.stderr)
    return EXIT_OK


def cmd_lambda2(args) -> int:
    """λ2 と辺ごとの作用素ノルムを表示"""
    circuit, _ = load_circuit_with_partition(args.circuit)
    seed = args.seed if args.seed is not None else EIConfig().seed
    report = circuit_spectral_gap(circuit, EdgeWeighting(args.weighting), args.beta, seed=seed)

    print(f"λ2 = {report.lambda2:.10g} (weighting = {report.scheme}, β = {report.beta:g})")
    for edge_id, norm in report.operator_norms.items():
        print(f"  {edge_id}: ‖ρ‖_op = {norm:.6g}, w = {report.weights[edge_id]:.6g}")
    for w in report.warnings:
        print(f"⚠️  {w}")
    if args.output:
        save_result(report, args.output, config={"weighting": args.weighting, "beta": args.beta, "seed": seed},
                    timestamp=_timestamp(args))
    return EXIT_OK


def cmd_baselines(args) -> int:
    """EAC（活性化ファイル）と EAR（バッチファイル）"""
    if not args.activations and not args.batch:
        raise ConfigError("--activations か --batch の少なくとも一方を指定してください")
    circuit, _ = load_circuit_with_partition(args.circuit)
    payload = {}
    if args.activations:
        report = eac(circuit, load_activations(args.activations))
        payload["eac"] = report
        print(f"✓ EAC = {report.value:.6f} (除外 {len(report.skipped_edges)} 本)")
        for w in report.warnings:
            print(f"⚠️  {w}")
    if args.batch:
        report = ear(circuit, load_batch(args.batch), ridge=args.ridge)
        payload["ear"] = report
        print(f"✓ EAR = {report.value:.6f} (N = {report.n_samples})")
    if args.output:
        save_result(payload, args.output, kind="baselines", config={"ridge": args.ridge},
                    timestamp=_timestamp(args))
    return EXIT_OK


def cmd_validate(args) -> int:
    """回路ファイルを検証（ファイルは変更しない）"""
    circuit, partition = load_circuit_with_partition(args.circuit, validate=False)
    violations = list(validate_circuit(circuit).violations)
    if partition is not None and not violations:
        violations += validate_partition(circuit, partition)
    if violations:
        print(f"✗ {args.circuit}: {len(violations)} 件の違反", file=sys.stderr)
        for v in violations:
            print(f"  - {v}", file=sys.stderr)
        return EXIT_INPUT
    stats = circuit.get_statistics()
    print(f"✓ {args.circuit}: ノード {stats['num_nodes']}, 辺 {stats['num_edges']}, 総次元 {stats['total_dim']}")
    return EXIT_OK


# ----------------------------------------------------------------------
# 引数
# ----------------------------------------------------------------------
def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--verbose", action="store_true", help="DEBUG ログを表示")
    p.add_argument("--timestamp", action="store_true", help="結果ファイルにタイムスタンプを記録")


def _add_ei(p: argparse.ArgumentParser):
    defaults = EIConfig.__dataclass_fields__
    p.add_argument("--config", help="設定ファイル (kind: config)")
    p.add_argument("--alpha", type=float, help=f"SNR スケール α (デフォルト: {defaults['alpha'].default})")
    p.add_argument("--epsilon", type=float, help=f"正規化の下限 (デフォルト: {defaults['epsilon'].default})")
    p.add_argument("--mode", choices=["exact", "fast"], help="EI の評価モード (デフォルト: exact)")
    p.add_argument("--seed", type=int, help="乱数シード（score: デフォルト EICS_SEED または 0、toy-sweep: 最初のシード 1000）")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eics",
        description="Effective-Information Consistency Score for linearized circuits",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="EICS を計算")
    p.add_argument("--circuit", required=True)
    p.add_argument("--activations", required=True)
    p.add_argument("--output", help="結果ファイル (JSON)")
    _add_ei(p)
    p.add_argument("--probes-part", type=int, help="パート項のプローブ数 (デフォルト: 6)")
    p.add_argument("--probes-macro", type=int, help="マクロ項のプローブ数 (デフォルト: 10)")
    p.add_argument("--lanczos-steps", type=int, help="Lanczos ステップ数 (デフォルト: 30)")
    p.add_argument("--estimator", choices=["slq", "hutchpp", "frobenius"], help="高速モードの推定法 (デフォルト: slq)")
    p.add_argument("--partition", choices=["per-node", "file"], default="per-node")
    p.add_argument("--csh-on", choices=["raw", "projected"], default="raw")
    p.add_argument("--weighting", choices=["unit", "inverse-operator-norm"], default="inverse-operator-norm")
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--lambda2", action="store_true", help="λ2 診断も計算")
    _add_common(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("toy-sweep", help="トイ回路のノイズスイープ")
    _add_ei(p)
    p.add_argument("--taus", type=float, nargs="+", help="τ のグリッド (デフォルト: [0, 2] の 11 点)")
    p.add_argument("--n-seeds", type=int, help="シード数 (デフォルト: 100)")
    p.add_argument("--dim", type=int, help="ノード次元 (デフォルト: 32)")
    p.add_argument("--align", type=float, help="分岐の整列度 (デフォルト: 0.9)")
    p.add_argument("--jobs", type=int, default=None, help="並列プロセス数 (デフォルト: EICS_JOBS または 1)")
    p.add_argument("--output", help="集計 CSV（省略時は標準出力）")
    p.add_argument("--plot-data", help="図の3曲線のデータ CSV")
    p.add_argument("--gnuplot", help="gnuplot スクリプトの出力先")
    p.add_argument("--result", help="結果ファイル (JSON)")
    p.add_argument("--with-baselines", action="store_true", help="EAC / EAR も集計")
    _add_common(p)
    p.set_defaults(func=cmd_toy_sweep)

    p = sub.add_parser("lambda2", help="層ラプラシアンのスペクトルギャップ")
    p.add_argument("--circuit", required=True)
    p.add_argument("--weighting", choices=["unit", "inverse-operator-norm"], default="unit")
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--seed", type=int)
    p.add_argument("--output")
    _add_common(p)
    p.set_defaults(func=cmd_lambda2)

    p = sub.add_parser("baselines", help="ベースライン EAC / EAR")
    p.add_argument("--circuit", required=True)
    p.add_argument("--activations")
    p.add_argument("--batch")
    p.add_argument("--ridge", type=float, default=None, help="EAR のリッジ係数 (デフォルト: スケールに応じて自動)")
    p.add_argument("--output")
    _add_common(p)
    p.set_defaults(func=cmd_baselines)

    p = sub.add_parser("validate", help="回路ファイルを検証")
    p.add_argument("--circuit", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    CLI のエントリポイント

    Returns:
        int: 終了コード（0 正常、2 入力エラー、3 数値エラー）
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    if getattr(args, "jobs", 1) is None:
        args.jobs = default_jobs()

    try:
        return args.func(args)
    except NumericalError as e:
        print(f"✗ 数値エラー: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (CircuitError, ConfigError) as e:
        print(f"✗ 入力エラー: {e}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as e:
        print(f"✗ 入力エラー: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
