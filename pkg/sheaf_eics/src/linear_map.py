"""
Linear maps attached to circuit edges.

A LinearMap is either a dense matrix or a matrix-free scipy LinearOperator
(apply / apply-adjoint callbacks with a declared shape). Both forms support the
same operations, so every algorithm in the package accepts either.
"""

from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from .errors import CircuitError
from .rng import stream, STREAM_PROBES


class LinearMap:
    """
    辺のヤコビアン（制限写像）を表すクラス

    Attributes:
        shape (Tuple[int, int]): (出力次元, 入力次元)
        structurally_zero (bool): 寄与する経路が存在しないことを示すフラグ
    """

    def __init__(
        self,
        matrix: Optional[np.ndarray] = None,
        operator: Optional[LinearOperator] = None,
        structurally_zero: bool = False,
    ):
        """
        Args:
            matrix: 密行列（operator と排他）
            operator: scipy の LinearOperator（matrix と排他）
            structurally_zero: 経路なしによる零写像かどうか
        """
        if (matrix is None) == (operator is None):
            raise CircuitError("LinearMap には matrix か operator のどちらか一方を指定してください")

        if matrix is not None:
            matrix = np.array(matrix, dtype=float)
            if matrix.ndim != 2:
                raise CircuitError(f"行列は2次元である必要があります: ndim={matrix.ndim}")
            # 共有しても壊れないように読み取り専用にする
            matrix.setflags(write=False)
            self._shape = (int(matrix.shape[0]), int(matrix.shape[1]))
        else:
            self._shape = (int(operator.shape[0]), int(operator.shape[1]))

        self._matrix = matrix
        self._operator = operator
        self.structurally_zero = structurally_zero

    # ------------------------------------------------------------------
    # 構築
    # ------------------------------------------------------------------
    @classmethod
    def dense(cls, matrix) -> "LinearMap":
        return cls(matrix=matrix)

    @classmethod
    def from_callbacks(
        cls,
        apply: Callable[[np.ndarray], np.ndarray],
        apply_adjoint: Callable[[np.ndarray], np.ndarray],
        shape: Tuple[int, int],
    ) -> "LinearMap":
        """
        コールバック対（apply, apply_adjoint）から行列フリーな写像を作る

        Args:
            apply: x -> Jx
            apply_adjoint: y -> J^T y
            shape: (出力次元, 入力次元)
        """
        op = LinearOperator(
            shape=tuple(shape),
            matvec=lambda x: np.asarray(apply(np.ravel(x)), dtype=float),
            rmatvec=lambda y: np.asarray(apply_adjoint(np.ravel(y)), dtype=float),
            dtype=float,
        )
        return cls(operator=op)

    @classmethod
    def from_operator(cls, operator: LinearOperator) -> "LinearMap":
        return cls(operator=operator)

    @classmethod
    def zeros(cls, rows: int, cols: int, structurally_zero: bool = True) -> "LinearMap":
        return cls(matrix=np.zeros((rows, cols)), structurally_zero=structurally_zero)

    @classmethod
    def identity(cls, dim: int) -> "LinearMap":
        return cls(matrix=np.eye(dim))

    @classmethod
    def hstack(cls, maps: Sequence["LinearMap"]) -> "LinearMap":
        """[A | B | ...] を作る（行数は一致している必要がある）"""
        if not maps:
            raise CircuitError("hstack には1つ以上の写像が必要です")
        rows = maps[0].shape[0]
        if any(m.shape[0] != rows for m in maps):
            raise CircuitError(f"hstack の行数が一致しません: {[m.shape for m in maps]}")
        if all(m.is_dense for m in maps):
            return cls(matrix=np.hstack([m._matrix for m in maps]))

        widths = [m.shape[1] for m in maps]
        offsets = np.concatenate([[0], np.cumsum(widths)])

        def matvec(x):
            x = np.ravel(x)
            out = np.zeros(rows)
            for m, lo, hi in zip(maps, offsets[:-1], offsets[1:]):
                out += m.matvec(x[lo:hi])
            return out

        def rmatvec(y):
            y = np.ravel(y)
            return np.concatenate([m.rmatvec(y) for m in maps])

        op = LinearOperator((rows, int(offsets[-1])), matvec=matvec, rmatvec=rmatvec, dtype=float)
        return cls(operator=op)

    @classmethod
    def vstack(cls, maps: Sequence["LinearMap"]) -> "LinearMap":
        """[A; B; ...] を作る（列数は一致している必要がある）"""
        if not maps:
            raise CircuitError("vstack には1つ以上の写像が必要です")
        cols = maps[0].shape[1]
        if any(m.shape[1] != cols for m in maps):
            raise CircuitError(f"vstack の列数が一致しません: {[m.shape for m in maps]}")
        if all(m.is_dense for m in maps):
            return cls(matrix=np.vstack([m._matrix for m in maps]))

        heights = [m.shape[0] for m in maps]
        offsets = np.concatenate([[0], np.cumsum(heights)])

        def matvec(x):
            x = np.ravel(x)
            return np.concatenate([m.matvec(x) for m in maps])

        def rmatvec(y):
            y = np.ravel(y)
            out = np.zeros(cols)
            for m, lo, hi in zip(maps, offsets[:-1], offsets[1:]):
                out += m.rmatvec(y[lo:hi])
            return out

        op = LinearOperator((int(offsets[-1]), cols), matvec=matvec, rmatvec=rmatvec, dtype=float)
        return cls(operator=op)

    # ------------------------------------------------------------------
    # 属性
    # ------------------------------------------------------------------
    @property
    def shape(self) -> Tuple[int, int]:
        return self._shape

    @property
    def is_dense(self) -> bool:
        return self._matrix is not None

    @property
    def matrix(self) -> Optional[np.ndarray]:
        """密行列（operator 形式なら None）"""
        return self._matrix

    # ------------------------------------------------------------------
    # 作用
    # ------------------------------------------------------------------
    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        if x.shape[0] != self._shape[1]:
            raise CircuitError(f"入力次元が一致しません: 期待 {self._shape[1]}, 実際 {x.shape[0]}")
        if self._matrix is not None:
            return self._matrix @ x
        return np.asarray(self._operator.matvec(x), dtype=float).ravel()

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float).ravel()
        if y.shape[0] != self._shape[0]:
            raise CircuitError(f"出力次元が一致しません: 期待 {self._shape[0]}, 実際 {y.shape[0]}")
        if self._matrix is not None:
            return self._matrix.T @ y
        return np.asarray(self._operator.rmatvec(y), dtype=float).ravel()

    def matmat(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self._matrix is not None:
            return self._matrix @ X
        return np.column_stack([self.matvec(X[:, j]) for j in range(X.shape[1])]) \
            if X.shape[1] > 0 else np.zeros((self._shape[0], 0))

    def rmatmat(self, Y: np.ndarray) -> np.ndarray:
        Y = np.asarray(Y, dtype=float)
        if self._matrix is not None:
            return self._matrix.T @ Y
        return np.column_stack([self.rmatvec(Y[:, j]) for j in range(Y.shape[1])]) \
            if Y.shape[1] > 0 else np.zeros((self._shape[1], 0))

    def to_dense(self) -> np.ndarray:
        """密行列に変換（operator 形式なら単位ベクトルを作用させる）"""
        if self._matrix is not None:
            return np.array(self._matrix)
        return self.matmat(np.eye(self._shape[1]))

    def as_operator(self) -> LinearOperator:
        if self._operator is not None:
            return self._operator
        return aslinearoperator(self._matrix)

    # ------------------------------------------------------------------
    # 代数
    # ------------------------------------------------------------------
    def compose(self, other: "LinearMap") -> "LinearMap":
        """self ∘ other（先に other を作用させる）"""
        if self._shape[1] != other.shape[0]:
            raise CircuitError(f"合成できない形状です: {self._shape} ∘ {other.shape}")
        zero = self.structurally_zero or other.structurally_zero
        if self.is_dense and other.is_dense:
            return LinearMap(matrix=self._matrix @ other._matrix, structurally_zero=zero)
        return LinearMap(operator=self.as_operator() @ other.as_operator(), structurally_zero=zero)

    def __matmul__(self, other: "LinearMap") -> "LinearMap":
        return self.compose(other)

    def __add__(self, other: "LinearMap") -> "LinearMap":
        if self._shape != other.shape:
            raise CircuitError(f"形状が一致しません: {self._shape} + {other.shape}")
        zero = self.structurally_zero and other.structurally_zero
        if self.is_dense and other.is_dense:
            return LinearMap(matrix=self._matrix + other._matrix, structurally_zero=zero)
        return LinearMap(operator=self.as_operator() + other.as_operator(), structurally_zero=zero)

    def scaled(self, c: float) -> "LinearMap":
        if self.is_dense:
            return LinearMap(matrix=float(c) * self._matrix, structurally_zero=self.structurally_zero)
        return LinearMap(operator=float(c) * self.as_operator(), structurally_zero=self.structurally_zero)

    def adjoint_mismatch(self, seed: int = 0, probes: int = 5) -> float:
        """
        <Jx, y> と <x, J^T y> の最大相対誤差（adjoint が正しければ ~1e-16）

        Args:
            seed: 乱数シード
            probes: ランダムプローブ数
        """
        rng = stream(seed, STREAM_PROBES)
        worst = 0.0
        for _ in range(probes):
            x = rng.standard_normal(self._shape[1])
            y = rng.standard_normal(self._shape[0])
            Jx = self.matvec(x)
            Jty = self.rmatvec(y)
            lhs = float(Jx @ y)
            rhs = float(x @ Jty)
            scale = max(np.linalg.norm(Jx) * np.linalg.norm(y), np.linalg.norm(x) * np.linalg.norm(Jty), 1e-300)
            worst = max(worst, abs(lhs - rhs) / scale)
        return worst

    def __repr__(self):
        kind = "dense" if self.is_dense else "operator"
        flag = ", structurally_zero" if self.structurally_zero else ""
        return f"LinearMap({kind}, shape={self._shape}{flag})"
