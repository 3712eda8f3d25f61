#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Basic Example: EICS on the two-branch toy circuit

Builds the toy circuit, runs one forward pass with node noise, and scores
the activations in exact and fast mode.
"""

import sys
import os

import numpy as np

# パスを追加
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.circuit import ActivationState, forward_activations
from src.ei import EIConfig
from src.eics import ScoreOptions, eics_score, print_result
from src.sheaf import EdgeWeighting
from src.toy import ToyConfig, build_toy_circuit


def main():
    """メイン関数"""

    print("=" * 70)
    print("Effective-Information Consistency Score - Basic Example")
    print("=" * 70)

    # ステップ1: 回路の生成
    print("\n[ステップ1] トイ回路の生成")

    cfg = ToyConfig(dim=16, align=0.9)
    tau = 0.5
    circuit, partition = build_toy_circuit(cfg, seed=42, tau=tau)
    stats = circuit.get_statistics()

    print(f"  ノード数: {stats['num_nodes']}")
    print(f"  辺数: {stats['num_edges']}")
    print(f"  総次元: {stats['total_dim']}")
    print(f"  パーティション: {[p.label for p in partition.parts]} ({partition.macro})")

    # ステップ2: 活性化の計算
    print("\n[ステップ2] 順伝播とノードノイズ")

    rng = np.random.default_rng(42)
    clean = forward_activations(circuit, {"n1": rng.normal(size=cfg.dim), "n2": rng.normal(size=cfg.dim)})
    a = ActivationState({n: clean[n] + tau * rng.normal(size=cfg.dim) for n in circuit.node_ids})
    print(f"  τ = {tau}")

    # ステップ3: スコアの計算
    print("\n[ステップ3] EICS の計算（厳密モード）")

    options = ScoreOptions(compute_lambda2=True, weighting=EdgeWeighting("inverse-operator-norm"))
    result = eics_score(circuit, a, partition, EIConfig(seed=42), options)
    print_result(result)

    print("\n[ステップ4] 高速モード（確率的 Lanczos 求積）との比較")
    fast = eics_score(circuit, a, partition, EIConfig(mode="fast", seed=42))
    print(f"  厳密: EICS = {result.score:.6f}, EI(J_M) = {result.ei.ei_macro:.6f}")
    print(f"  高速: EICS = {fast.score:.6f}, EI(J_M) = {fast.ei.ei_macro:.6f} ± {fast.ei.ei_macro_se:.2g}")

    if fast.ei.low_confidence:
        print("\n⚠️  高速モードの推定は低信頼です（プローブ数を増やしてください）")
    else:
        print("\n✓ 計算が完了しました！")

    return result


if __name__ == "__main__":
    result = main()
