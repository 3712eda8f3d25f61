"""
Exception hierarchy for the EICS toolkit.

CLI exit codes are derived from these classes: CircuitError -> 2, NumericalError -> 3.
"""

from typing import List, Optional


class EICSError(Exception):
    """パッケージ共通の基底例外"""


class CircuitError(EICSError, ValueError):
    """
    回路・パーティション・活性化の不整合を表す例外

    Attributes:
        violations (List[str]): 検出された違反の一覧（検証由来の場合）
    """

    def __init__(self, message: str, violations: Optional[List[str]] = None):
        super().__init__(message)
        self.violations = list(violations or [])


class FileFormatError(CircuitError):
    """ファイル形式の不正（フィールドパスや行番号をメッセージに含める）"""


class ConfigError(EICSError, ValueError):
    """設定値の不正"""


class NumericalError(EICSError, ArithmeticError):
    """数値計算の失敗（非有限値、特異な正規方程式、スペクトルギャップ消失など）"""
