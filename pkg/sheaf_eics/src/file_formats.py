"""
File formats (JSON documents with version "eics/1") and canonical serialization.

Documents:
    circuit      nodes, edges with row-major dense matrices, inputs, outputs,
                 optional partition
    activations  one vector per node
    batch        list of activation samples
    config       "ei" and "toy" sections
    result       config snapshot, result payload, tool version, timestamp

Canonical output: keys sorted, two-space indent, reals with 17 significant
digits, NaN/inf as null, newline-terminated.
"""

import json
import logging
import math
from dataclasses import asdict, fields, is_dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .baselines import ActivationBatch, EACReport, EARReport
from .circuit import (
    ActivationState,
    Circuit,
    EdgeSpec,
    NodeSpec,
    PartSpec,
    Partition,
    validate_circuit,
)
from .ei import EIConfig
from .eics import EICSResult
from .errors import CircuitError, ConfigError, FileFormatError
from .linear_map import LinearMap
from .settings import FORMAT_VERSION, TOOL_VERSION
from .sheaf import SpectralReport
from .toy import SweepResult, ToyConfig

logger = logging.getLogger(__name__)


# ----------------------------------------------------------------------
# 読み込みの共通処理
# ----------------------------------------------------------------------
def _read_json(path: str) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise FileFormatError(f"{path}: ファイルを読み込めません: {e.strerror or e}") from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise FileFormatError(f"{path}: 行 {e.lineno} 列 {e.colno}: JSON の解析に失敗しました: {e.msg}") from e


def _field(doc: Any, key: str, where: str, expected: type = None) -> Any:
    if not isinstance(doc, dict):
        raise FileFormatError(f"{where or '<root>'}: オブジェクトである必要があります")
    path = f"{where}.{key}" if where else key
    if key not in doc:
        raise FileFormatError(f"{path}: 必須フィールドがありません")
    value = doc[key]
    # true/false は整数として受け付けない
    if expected is not None and (not isinstance(value, expected) or (expected is int and isinstance(value, bool))):
        raise FileFormatError(f"{path}: 型が不正です（{expected.__name__} が必要）")
    return value


def _check_header(doc: Any, kind: str, source: str):
    version = _field(doc, "version", "", str)
    if version != FORMAT_VERSION:
        raise FileFormatError(f"{source}: 未知のバージョンです: {version!r}（{FORMAT_VERSION} のみ対応）")
    actual = doc.get("kind", "circuit")
    if actual != kind:
        raise FileFormatError(f"{source}: kind が {kind!r} ではありません: {actual!r}")


def _vector(value: Any, where: str) -> np.ndarray:
    if not isinstance(value, list):
        raise FileFormatError(f"{where}: 数値の配列である必要があります")
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise FileFormatError(f"{where}: 数値の配列である必要があります") from None
    if arr.ndim != 1:
        raise FileFormatError(f"{where}: 1次元の配列である必要があります")
    return arr


def _str_list(value: Any, where: str) -> List[str]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise FileFormatError(f"{where}: 文字列の配列である必要があります")
    return list(value)


# ----------------------------------------------------------------------
# 回路
# ----------------------------------------------------------------------
def _parse_partition(doc: Any) -> Partition:
    kind = doc.get("kind", "nodes") if isinstance(doc, dict) else None
    parts_doc = _field(doc, "parts", "partition", list)
    parts = []
    for i, p in enumerate(parts_doc):
        where = f"partition.parts[{i}]"
        nodes = _str_list(_field(p, "nodes", where), f"{where}.nodes")
        inputs = _str_list(p.get("inputs", []), f"{where}.inputs")
        outputs = _str_list(p.get("outputs", []), f"{where}.outputs")
        name = p.get("name", "")
        if not isinstance(name, str):
            raise FileFormatError(f"{where}.name: 文字列である必要があります")
        parts.append(PartSpec(tuple(nodes), tuple(inputs), tuple(outputs), name))
    return Partition(tuple(parts), kind=kind, macro=doc.get("macro", "circuit"))


def circuit_from_dict(doc: Any, source: str = "<circuit>", validate: bool = True) -> Tuple[Circuit, Optional[Partition]]:
    """
    回路ドキュメントを解析

    Args:
        doc: JSON ドキュメント
        source: エラーメッセージ用の名前
        validate: 回路の不変条件を検査するか

    Returns:
        (Circuit, Optional[Partition])

    Raises:
        FileFormatError: ドキュメントが不正な場合（フィールドのパスを示す）
        CircuitError: 回路の検証に失敗した場合
    """
    _check_header(doc, "circuit", source)

    nodes = []
    for i, n in enumerate(_field(doc, "nodes", "", list)):
        where = f"nodes[{i}]"
        nid = _field(n, "id", where, str)
        dim = _field(n, "dim", where, int)
        nodes.append(NodeSpec(nid, dim))

    edges = []
    for i, e in enumerate(_field(doc, "edges", "", list)):
        where = f"edges[{i}]"
        src = _field(e, "src", where, str)
        dst = _field(e, "dst", where, str)
        rows = _field(e, "rows", where, int)
        cols = _field(e, "cols", where, int)
        values = _field(e, "matrix", where, list)
        try:
            flat = np.array(values, dtype=float).ravel()
        except (TypeError, ValueError):
            raise FileFormatError(f"{where}.matrix: 数値の配列である必要があります") from None
        if rows < 0 or cols < 0 or flat.shape[0] != rows * cols:
            raise FileFormatError(f"{where}.matrix: 要素数 {flat.shape[0]} が rows×cols = {rows}×{cols} と一致しません")
        if not np.all(np.isfinite(flat)):
            raise FileFormatError(f"{where}.matrix: 非有限値が含まれています")
        edges.append(EdgeSpec(src, dst, LinearMap.dense(flat.reshape(rows, cols))))

    inputs = _str_list(_field(doc, "inputs", ""), "inputs")
    outputs = _str_list(_field(doc, "outputs", ""), "outputs")
    circuit = Circuit(nodes, edges, inputs, outputs)
    partition = _parse_partition(doc["partition"]) if doc.get("partition") is not None else None

    if validate:
        report = validate_circuit(circuit)
        if not report.is_valid:
            raise CircuitError(f"{source}: 回路が不正です: " + "; ".join(report.violations), report.violations)
    return circuit, partition


def circuit_to_dict(circuit: Circuit, partition: Optional[Partition] = None) -> Dict[str, Any]:
    """
    回路をドキュメントに変換（密行列の辺のみ）

    Raises:
        FileFormatError: 行列フリーの辺が含まれる場合
    """
    edges = []
    for e in circuit.edges:
        if not e.map.is_dense:
            raise FileFormatError(f"辺 {e.edge_id} は行列フリーのため保存できません（密行列のみ対応）")
        rows, cols = e.map.shape
        edges.append({
            "src": e.src,
            "dst": e.dst,
            "rows": rows,
            "cols": cols,
            "matrix": e.map.matrix.ravel().tolist(),
        })
    doc = {
        "version": FORMAT_VERSION,
        "kind": "circuit",
        "nodes": [{"id": n.id, "dim": n.dim} for n in circuit.nodes],
        "edges": edges,
        "inputs": list(circuit.inputs),
        "outputs": list(circuit.outputs),
    }
    if partition is not None:
        doc["partition"] = {
            "kind": partition.kind,
            "macro": partition.macro,
            "parts": [
                {"nodes": list(p.nodes), "inputs": list(p.inputs), "outputs": list(p.outputs), "name": p.name}
                for p in partition.parts
            ],
        }
    return doc


def load_circuit_with_partition(path: str, validate: bool = True) -> Tuple[Circuit, Optional[Partition]]:
    """回路ファイルを読み込み、パーティション（あれば）とともに返す"""
    return circuit_from_dict(_read_json(path), source=path, validate=validate)


def load_circuit(path: str) -> Circuit:
    """
    回路ファイルを読み込んで検証済みの Circuit を返す

    Raises:
        FileFormatError: ファイルが不正な場合
        CircuitError: 回路の検証に失敗した場合
    """
    circuit, _ = load_circuit_with_partition(path)
    return circuit


def save_circuit(circuit: Circuit, path: str, partition: Optional[Partition] = None):
    """回路を正準形式で保存"""
    _write_text(path, canonical_json(circuit_to_dict(circuit, partition)))


# ----------------------------------------------------------------------
# 活性化・バッチ・設定
# ----------------------------------------------------------------------
def _parse_state(doc: Any, where: str) -> ActivationState:
    if not isinstance(doc, dict):
        raise FileFormatError(f"{where}: ノードID → 配列 のオブジェクトである必要があります")
    return ActivationState({k: _vector(v, f"{where}.{k}") for k, v in doc.items()})


def load_activations(path: str) -> ActivationState:
    """活性化ファイル {version, kind: "activations", activations: {node: [...]}} を読み込む"""
    doc = _read_json(path)
    _check_header(doc, "activations", path)
    return _parse_state(_field(doc, "activations", ""), "activations")


def activations_to_dict(a: ActivationState) -> Dict[str, Any]:
    return {
        "version": FORMAT_VERSION,
        "kind": "activations",
        "activations": {k: v.tolist() for k, v in a.items()},
    }


def save_activations(a: ActivationState, path: str):
    _write_text(path, canonical_json(activations_to_dict(a)))


def load_batch(path: str) -> ActivationBatch:
    """バッチファイル {version, kind: "batch", samples: [{node: [...]}, ...]} を読み込む"""
    doc = _read_json(path)
    _check_header(doc, "batch", path)
    samples = _field(doc, "samples", "", list)
    if not samples:
        raise FileFormatError("samples: 1つ以上のサンプルが必要です")
    return ActivationBatch(_parse_state(s, f"samples[{i}]") for i, s in enumerate(samples))


def save_batch(batch: ActivationBatch, path: str):
    doc = {
        "version": FORMAT_VERSION,
        "kind": "batch",
        "samples": [{k: v.tolist() for k, v in s.items()} for s in batch],
    }
    _write_text(path, canonical_json(doc))


def _dataclass_from(cls, doc: Any, where: str):
    if not isinstance(doc, dict):
        raise FileFormatError(f"{where}: オブジェクトである必要があります")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise FileFormatError(f"{where}: 未知のフィールドです: {unknown}")
    for f in fields(cls):
        if f.name in doc and isinstance(doc[f.name], bool) and type(f.default) is not bool:
            raise FileFormatError(f"{where}.{f.name}: 型が不正です（真偽値は使えません）")
    try:
        return cls(**doc)
    except (ConfigError, TypeError) as e:
        raise FileFormatError(f"{where}: {e}") from e


def load_config(path: str) -> Tuple[EIConfig, ToyConfig]:
    """
    設定ファイル {version, kind: "config", ei: {...}, toy: {...}} を読み込む

    省略したセクションとフィールドは既定値になる。
    """
    doc = _read_json(path)
    _check_header(doc, "config", path)
    ei = _dataclass_from(EIConfig, doc.get("ei", {}), "ei")
    toy = _dataclass_from(ToyConfig, doc.get("toy", {}), "toy")
    return ei, toy


# ----------------------------------------------------------------------
# 正準 JSON
# ----------------------------------------------------------------------
def _plain(obj: Any) -> Any:
    """numpy 型やデータクラスを JSON の基本型に変換"""
    if is_dataclass(obj) and not isinstance(obj, type):
        return _plain(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def _format_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    text = format(x, ".17g")
    return "0" if text == "-0" else text


def _encode(obj: Any, indent: int) -> str:
    pad = "  " * (indent + 1)
    end = "  " * indent
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k, ensure_ascii=False)}: {_encode(obj[k], indent + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(f"{pad}{_encode(v, indent + 1)}" for v in obj) + "\n" + end + "]"
    raise FileFormatError(f"JSON に変換できない型です: {type(obj).__name__}")


def canonical_json(obj: Any) -> str:
    """キー順固定、実数17桁、NaN は null、末尾改行つきの JSON テキスト"""
    return _encode(_plain(obj), 0) + "\n"


def _write_text(path: str, text: str):
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    except OSError as e:
        raise FileFormatError(f"{path}: 書き込めません: {e.strerror or e}") from e


# ----------------------------------------------------------------------
# 結果ファイル
# ----------------------------------------------------------------------
def result_document(
    result: Any,
    kind: Optional[str] = None,
    config: Optional[Dict[str, Any]] = None,
    timestamp: Optional[str] = None,
) -> Dict[str, Any]:
    """
    結果ファイルのドキュメントを組み立てる

    Args:
        result: EICSResult、SweepResult、SpectralReport、EACReport、EARReport、または辞書
        kind: 結果の種別（辞書を渡す場合は必須）
        config: 設定のスナップショット（型から決まらない場合）
        timestamp: タイムスタンプ（None なら null、既定の出力を再現可能に保つ）
    """
    if isinstance(result, EICSResult):
        kind = kind or "score"
        config = config or {"ei": result.config.to_dict(), "options": result.options.to_dict()}
        payload = result.to_dict()
    elif isinstance(result, SweepResult):
        kind = kind or "sweep"
        config = config or {"toy": result.config.to_dict()}
        payload = {"rows": [asdict(r) for r in result.rows], "warnings": result.warnings}
    elif isinstance(result, SpectralReport):
        kind = kind or "lambda2"
        payload = asdict(result)
    elif isinstance(result, (EACReport, EARReport)):
        kind = kind or "baselines"
        payload = asdict(result)
    elif isinstance(result, dict):
        if kind is None:
            raise ConfigError("辞書の結果を保存するには kind を指定してください")
        payload = result
    else:
        raise ConfigError(f"保存できない結果の型です: {type(result).__name__}")
    return {
        "version": FORMAT_VERSION,
        "kind": kind,
        "tool_version": TOOL_VERSION,
        "config": config or {},
        "result": payload,
        "timestamp": timestamp,
    }


def save_result(
    result: Any,
    path: str,
    kind: Optional[str] = None,
    config: Optional[Dict[str, Any]] = None,
    timestamp: Optional[str] = None,
):
    """
    結果を正準 JSON で保存（同じ入力からはバイト単位で同一のファイル）

    Raises:
        FileFormatError: 書き込めない場合
    """
    _write_text(path, canonical_json(result_document(result, kind, config, timestamp)))
    logger.info("結果を保存しました: %s", path)


def load_result(path: str) -> Dict[str, Any]:
    """
    結果ファイルを読み込む（バージョンと必須フィールドを検査）

    Returns:
        Dict: ドキュメント全体
    """
    doc = _read_json(path)
    version = _field(doc, "version", "", str)
    if version != FORMAT_VERSION:
        raise FileFormatError(f"{path}: 未知のバージョンです: {version!r}")
    for key in ("kind", "tool_version", "config", "result"):
        _field(doc, key, "")
    if "timestamp" not in doc:
        raise FileFormatError("timestamp: 必須フィールドがありません")
    return doc


def save_sweep_csv(result: SweepResult, path: str):
    """スイープの集計表を CSV で保存（ヘッダー + τ ごとに1行）"""
    try:
        result.to_csv(path)
    except OSError as e:
        raise FileFormatError(f"{path}: 書き込めません: {e.strerror or e}") from e
