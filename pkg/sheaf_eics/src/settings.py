"""
Runtime settings loaded from the environment (.env supported).
"""

import logging
import os
from typing import Optional

from dotenv import load_dotenv

from .errors import ConfigError

# .envファイルを読み込む
load_dotenv()

TOOL_VERSION = "1.0.0"
FORMAT_VERSION = "eics/1"

DEFAULT_SEED = 0
DEFAULT_JOBS = 1


def _int_from_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError as e:
        raise ConfigError(f"環境変数 {name} は整数である必要があります: {raw!r}") from e


def default_seed() -> int:
    """
    既定シードを取得（EICS_SEED が設定されていればそれを優先）

    Returns:
        int: シード値
    """
    return _int_from_env("EICS_SEED", DEFAULT_SEED)


def default_jobs() -> int:
    """スイープの既定並列数（EICS_JOBS）"""
    jobs = _int_from_env("EICS_JOBS", DEFAULT_JOBS)
    if jobs < 1:
        raise ConfigError(f"EICS_JOBS は1以上である必要があります: {jobs}")
    return jobs


def configure_logging(verbose: bool = False, stream: Optional[object] = None):
    """
    CLI用のロギング設定

    Args:
        verbose: True なら DEBUG、False なら WARNING
        stream: 出力先（デフォルト: stderr）
    """
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=stream,
        force=True,
    )
