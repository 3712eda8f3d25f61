"""
Named random streams.

Every stochastic step draws from a Philox counter-based generator keyed by a
(seed, stream) pair, so results do not depend on evaluation order or worker count.
"""

import numpy as np

# ストリーム番号の割り当て
STREAM_MAIN = 0
STREAM_DECOHERENCE = 1
STREAM_PROBES = 2
STREAM_OPERATOR_NORM = 3
STREAM_LANCZOS = 4
STREAM_BASELINE = 5


def stream(seed: int, stream_id: int, *extra: int) -> np.random.Generator:
    """
    (seed, stream_id, ...) から独立な乱数生成器を作る

    Args:
        seed: 64bit シード
        stream_id: ストリーム番号
        extra: 追加のキー（項の番号など）

    Returns:
        np.random.Generator: Philox ベースの生成器
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, int(stream_id), *[int(x) for x in extra]]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def rademacher(rng: np.random.Generator, size) -> np.ndarray:
    """±1 のラデマッハーベクトル"""
    return rng.integers(0, 2, size=size).astype(float) * 2.0 - 1.0
