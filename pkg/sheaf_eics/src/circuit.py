"""
Circuit model: DAG of typed nodes with linear edge maps.

Builds the macro-Jacobian (inputs -> outputs) and part Jacobians by forward
accumulation in topological order. Multiple in-edges of a node sum, edge maps
along a path compose by product.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from .errors import CircuitError
from .linear_map import LinearMap

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NodeSpec:
    """
    ノード（活性化空間）

    Attributes:
        id (str): ノードID
        dim (int): 活性化の次元 d_v
    """
    id: str
    dim: int


@dataclass(frozen=True)
class EdgeSpec:
    """
    有向辺と制限写像 ρ_{u→v}

    Attributes:
        src (str): 始点ノード
        dst (str): 終点ノード
        map (LinearMap): dim(dst) × dim(src) の線形写像
    """
    src: str
    dst: str
    map: LinearMap

    @property
    def edge_id(self) -> str:
        return f"{self.src}->{self.dst}"


@dataclass
class ValidationReport:
    """検証結果（violations が空なら妥当）"""
    violations: List[str] = field(default_factory=list)

    @property
    def is_valid(self) -> bool:
        return not self.violations

    def raise_if_invalid(self):
        if self.violations:
            raise CircuitError("回路が不正です: " + "; ".join(self.violations), self.violations)


class Circuit:
    """
    回路（DAG）を表すクラス

    Attributes:
        nodes (Tuple[NodeSpec]): ノード（宣言順）
        edges (Tuple[EdgeSpec]): 辺（宣言順）
        inputs (Tuple[str]): 入力ノード
        outputs (Tuple[str]): 出力ノード
        graph (nx.DiGraph): NetworkX の有向グラフ
    """

    def __init__(
        self,
        nodes: Sequence[NodeSpec],
        edges: Sequence[EdgeSpec],
        inputs: Sequence[str],
        outputs: Sequence[str],
    ):
        self.nodes = tuple(nodes)
        self.edges = tuple(edges)
        self.inputs = tuple(inputs)
        self.outputs = tuple(outputs)

        self._dims = {n.id: int(n.dim) for n in self.nodes}
        self.graph = nx.DiGraph()
        self.graph.add_nodes_from(n.id for n in self.nodes)
        for e in self.edges:
            self.graph.add_edge(e.src, e.dst)

    # ------------------------------------------------------------------
    @property
    def node_ids(self) -> List[str]:
        return [n.id for n in self.nodes]

    def dim(self, node_id: str) -> int:
        try:
            return self._dims[node_id]
        except KeyError:
            raise CircuitError(f"存在しないノードです: {node_id!r}") from None

    @property
    def total_dim(self) -> int:
        return sum(self._dims.values())

    def offsets(self) -> Dict[str, Tuple[int, int]]:
        """積み上げた状態ベクトル内での各ノードの範囲（宣言順）"""
        result = {}
        start = 0
        for n in self.nodes:
            result[n.id] = (start, start + n.dim)
            start += n.dim
        return result

    def sorted_edges(self) -> List[EdgeSpec]:
        """辺ID順（総和順序を固定するため）"""
        return sorted(self.edges, key=lambda e: (e.src, e.dst))

    def in_edges(self, node_id: str) -> List[EdgeSpec]:
        return sorted((e for e in self.edges if e.dst == node_id), key=lambda e: e.src)

    def out_edges(self, node_id: str) -> List[EdgeSpec]:
        return sorted((e for e in self.edges if e.src == node_id), key=lambda e: e.dst)

    def edge(self, src: str, dst: str) -> EdgeSpec:
        for e in self.edges:
            if e.src == src and e.dst == dst:
                return e
        raise CircuitError(f"存在しない辺です: {src}->{dst}")

    def with_edge_map(self, src: str, dst: str, new_map: LinearMap) -> "Circuit":
        """1本の辺の写像だけを差し替えた新しい回路を返す"""
        edges = [EdgeSpec(e.src, e.dst, new_map) if (e.src, e.dst) == (src, dst) else e for e in self.edges]
        return Circuit(self.nodes, edges, self.inputs, self.outputs)

    def get_statistics(self) -> Dict[str, object]:
        """
        回路の統計情報を取得

        Returns:
            Dict: ノード数、辺数、総次元、連結性など
        """
        return {
            "num_nodes": len(self.nodes),
            "num_edges": len(self.edges),
            "total_dim": self.total_dim,
            "num_inputs": len(self.inputs),
            "num_outputs": len(self.outputs),
            "is_dag": nx.is_directed_acyclic_graph(self.graph),
            "is_connected": bool(self.nodes) and nx.is_weakly_connected(self.graph),
        }

    def __repr__(self):
        return f"Circuit(nodes={len(self.nodes)}, edges={len(self.edges)})"


class NodeAssignment:
    """
    ノードごとのベクトル割り当て（活性化状態 a や 0-コチェイン s）

    作成後は変更不可。
    """

    def __init__(self, vectors: Mapping[str, Iterable[float]]):
        data = {}
        for key, vec in vectors.items():
            arr = np.array(vec, dtype=float).ravel()
            arr.setflags(write=False)
            data[str(key)] = arr
        self._data = data

    def __getitem__(self, node_id: str) -> np.ndarray:
        return self._data[node_id]

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._data

    def keys(self):
        return self._data.keys()

    def items(self):
        return self._data.items()

    def __len__(self):
        return len(self._data)

    def check(self, circuit: Circuit):
        """
        回路との整合性を確認（ノード集合、次元、有限性）

        Raises:
            CircuitError: 整合しない場合
        """
        problems = []
        expected = set(circuit.node_ids)
        actual = set(self._data)
        if expected != actual:
            missing = sorted(expected - actual)
            extra = sorted(actual - expected)
            problems.append(f"ノード集合が一致しません (不足: {missing}, 余分: {extra})")
        for node in circuit.nodes:
            if node.id in self._data:
                vec = self._data[node.id]
                if vec.shape[0] != node.dim:
                    problems.append(f"ノード {node.id} の次元が一致しません: 期待 {node.dim}, 実際 {vec.shape[0]}")
                elif not np.all(np.isfinite(vec)):
                    problems.append(f"ノード {node.id} に非有限値が含まれています")
        if problems:
            raise CircuitError("; ".join(problems), problems)

    def stacked(self, circuit: Circuit) -> np.ndarray:
        """回路の宣言順に連結したベクトル"""
        return np.concatenate([self._data[n.id] for n in circuit.nodes]) if circuit.nodes else np.zeros(0)

    @classmethod
    def from_stacked(cls, circuit: Circuit, vector: np.ndarray) -> "NodeAssignment":
        vector = np.asarray(vector, dtype=float).ravel()
        if vector.shape[0] != circuit.total_dim:
            raise CircuitError(f"ベクトル長が一致しません: 期待 {circuit.total_dim}, 実際 {vector.shape[0]}")
        return cls({nid: vector[lo:hi] for nid, (lo, hi) in circuit.offsets().items()})

    def scaled(self, c: float) -> "NodeAssignment":
        return NodeAssignment({k: c * v for k, v in self._data.items()})

    def __repr__(self):
        return f"{type(self).__name__}({', '.join(f'{k}:{v.shape[0]}' for k, v in self._data.items())})"


class ActivationState(NodeAssignment):
    """単一の順伝播で得られた活性化 a = {a_v}"""


@dataclass(frozen=True)
class PartSpec:
    """
    パーティションの1パート

    Attributes:
        nodes: パートに含まれるノード
        inputs: パート入力（空なら内部に入辺を持たないノードから推定）
        outputs: パート出力（空なら内部に出辺を持たないノードから推定）
        name: 表示名
    """
    nodes: Tuple[str, ...]
    inputs: Tuple[str, ...] = ()
    outputs: Tuple[str, ...] = ()
    name: str = ""

    @property
    def label(self) -> str:
        return self.name or "+".join(self.nodes)


@dataclass(frozen=True)
class Partition:
    """
    回路の分割（EI のパート項）

    Attributes:
        parts: パートのリスト
        kind: "nodes"（ノード素）または "paths"（辺素、ノード共有可）
        macro: "circuit"（回路の入力→出力のマクロヤコビアン）または
               "parallel-sum"（パートのヤコビアンの和）
    """
    parts: Tuple[PartSpec, ...]
    kind: str = "nodes"
    macro: str = "circuit"

    @classmethod
    def per_node(cls, circuit: Circuit) -> "Partition":
        """ノードごとに1パート（既定の分割）"""
        return cls(parts=tuple(PartSpec(nodes=(nid,), name=nid) for nid in circuit.node_ids))


# ----------------------------------------------------------------------
# 検証
# ----------------------------------------------------------------------
def validate_circuit(circuit: Circuit) -> ValidationReport:
    """
    回路の不変条件をすべて検査する（例外は投げない）

    Args:
        circuit: 回路

    Returns:
        ValidationReport: 違反の一覧（空なら妥当）
    """
    violations = []
    ids = [n.id for n in circuit.nodes]
    known = set(ids)

    if not ids:
        violations.append("ノードがありません")
    for nid in sorted({i for i in ids if ids.count(i) > 1}):
        violations.append(f"ノードIDが重複しています: {nid}")
    for n in circuit.nodes:
        if int(n.dim) < 1:
            violations.append(f"ノード {n.id} の次元は1以上である必要があります: {n.dim}")

    seen_edges = set()
    for e in circuit.edges:
        dangling = [x for x in (e.src, e.dst) if x not in known]
        if dangling:
            violations.append(f"辺 {e.edge_id} が存在しないノードを参照しています: {dangling}")
            continue
        if (e.src, e.dst) in seen_edges:
            violations.append(f"辺が重複しています: {e.edge_id}")
        seen_edges.add((e.src, e.dst))
        expected = (circuit.dim(e.dst), circuit.dim(e.src))
        if tuple(e.map.shape) != expected:
            violations.append(f"辺 {e.edge_id} の写像の形状が一致しません: 期待 {expected}, 実際 {tuple(e.map.shape)}")

    if not nx.is_directed_acyclic_graph(circuit.graph):
        cycle = nx.find_cycle(circuit.graph)
        u, v = cycle[0][0], cycle[0][1]
        violations.append(f"閉路があります（辺 {u}->{v} を含む）")

    if not circuit.inputs:
        violations.append("入力ノードが指定されていません")
    if not circuit.outputs:
        violations.append("出力ノードが指定されていません")
    for nid in list(circuit.inputs) + list(circuit.outputs):
        if nid not in known:
            violations.append(f"入出力が存在しないノードを参照しています: {nid}")

    valid_inputs = [i for i in circuit.inputs if i in known]
    reachable = set(valid_inputs)
    for i in valid_inputs:
        reachable |= nx.descendants(circuit.graph, i)
    for o in circuit.outputs:
        if o in known and o not in reachable:
            violations.append(f"出力 {o} はどの入力からも到達できません")

    return ValidationReport(violations)


def validate_partition(circuit: Circuit, partition: Partition) -> List[str]:
    """
    パーティションの妥当性を検査する

    Returns:
        List[str]: 違反の一覧
    """
    violations = []
    known = set(circuit.node_ids)
    if partition.kind not in ("nodes", "paths"):
        violations.append(f"未知のパーティション種別です: {partition.kind}")
    if partition.macro not in ("circuit", "parallel-sum"):
        violations.append(f"未知のマクロ指定です: {partition.macro}")
    if not partition.parts:
        violations.append("パートがありません")

    covered = set()
    node_owner: Dict[str, str] = {}
    edge_owner: Dict[Tuple[str, str], str] = {}
    for part in partition.parts:
        unknown = [n for n in part.nodes if n not in known]
        if unknown:
            violations.append(f"パート {part.label} が存在しないノードを参照しています: {unknown}")
            continue
        members = set(part.nodes)
        for n in list(part.inputs) + list(part.outputs):
            if n not in members:
                violations.append(f"パート {part.label} の入出力 {n} がパートに含まれていません")
        covered |= members
        if partition.kind == "nodes":
            for n in part.nodes:
                if n in node_owner:
                    violations.append(f"ノード {n} がパート {node_owner[n]} と {part.label} に重複しています")
                node_owner[n] = part.label
        else:
            for e in circuit.edges:
                if e.src in members and e.dst in members:
                    key = (e.src, e.dst)
                    if key in edge_owner:
                        violations.append(f"辺 {e.edge_id} がパート {edge_owner[key]} と {part.label} に重複しています")
                    edge_owner[key] = part.label

    missing = known - covered
    if missing:
        violations.append(f"どのパートにも含まれないノードがあります: {sorted(missing)}")
    return violations


# ----------------------------------------------------------------------
# 位相順序とヤコビアン
# ----------------------------------------------------------------------
def topological_order(circuit: Circuit) -> List[str]:
    """
    辞書順タイブレーク付きのトポロジカル順序

    Args:
        circuit: 回路

    Returns:
        List[str]: ノードIDの列（すべての辺が前向き）

    Raises:
        CircuitError: 閉路がある場合（閉路上の辺を1本示す）
    """
    try:
        return list(nx.lexicographical_topological_sort(circuit.graph))
    except nx.NetworkXUnfeasible:
        cycle = nx.find_cycle(circuit.graph)
        u, v = cycle[0][0], cycle[0][1]
        raise CircuitError(f"閉路が検出されました（辺 {u}->{v}）", [f"cycle:{u}->{v}"]) from None


def _accumulate(
    circuit: Circuit,
    edges: Sequence[EdgeSpec],
    order: Sequence[str],
    sources: Sequence[str],
) -> Dict[str, Dict[str, LinearMap]]:
    """
    前向き累積: 各ノードについて {source: ∂a_node/∂a_source} を求める

    source ノードは自由変数として扱い、その入辺は切断する。
    """
    incoming: Dict[str, List[EdgeSpec]] = {}
    for e in sorted(edges, key=lambda e: (e.src, e.dst)):
        incoming.setdefault(e.dst, []).append(e)

    source_set = set(sources)
    blocks: Dict[str, Dict[str, LinearMap]] = {}
    for node in order:
        if node in source_set:
            blocks[node] = {node: LinearMap.identity(circuit.dim(node))}
            continue
        acc: Dict[str, LinearMap] = {}
        for e in incoming.get(node, []):
            for src, jac in blocks.get(e.src, {}).items():
                term = e.map.compose(jac)
                acc[src] = acc[src] + term if src in acc else term
        blocks[node] = acc
    return blocks


def _assemble(
    circuit: Circuit,
    blocks: Dict[str, Dict[str, LinearMap]],
    from_nodes: Sequence[str],
    to_nodes: Sequence[str],
) -> LinearMap:
    rows = []
    any_path = False
    for t in to_nodes:
        row = []
        for f in from_nodes:
            jac = blocks.get(t, {}).get(f)
            if jac is None:
                row.append(LinearMap.zeros(circuit.dim(t), circuit.dim(f)))
            else:
                any_path = True
                row.append(jac)
        rows.append(LinearMap.hstack(row) if len(row) > 1 else row[0])
    result = LinearMap.vstack(rows) if len(rows) > 1 else rows[0]
    result.structurally_zero = not any_path
    return result


def macro_jacobian(circuit: Circuit, from_nodes: Sequence[str], to_nodes: Sequence[str]) -> LinearMap:
    """
    積み上げた from 活性化に対する積み上げた to 活性化の全微分 J_M

    Args:
        circuit: 回路
        from_nodes: 入力側ノード（自由変数として扱う）
        to_nodes: 出力側ノード

    Returns:
        LinearMap: ブロック構造のマクロヤコビアン。経路がなければ零写像
        （structurally_zero=True）
    """
    from_nodes = list(from_nodes)
    to_nodes = list(to_nodes)
    for nid in from_nodes + to_nodes:
        circuit.dim(nid)
    if not from_nodes or not to_nodes:
        raise CircuitError("from / to ノードは空にできません")

    order = topological_order(circuit)
    blocks = _accumulate(circuit, circuit.edges, order, from_nodes)
    result = _assemble(circuit, blocks, from_nodes, to_nodes)
    if result.structurally_zero:
        logger.info("from %s から to %s への経路がありません（零写像）", from_nodes, to_nodes)
    return result


def _part_boundary(circuit: Circuit, part: PartSpec, internal: List[EdgeSpec]) -> Tuple[List[str], List[str]]:
    has_in = {e.dst for e in internal}
    has_out = {e.src for e in internal}
    inputs = list(part.inputs) or [n for n in part.nodes if n not in has_in]
    outputs = list(part.outputs) or [n for n in part.nodes if n not in has_out]
    return inputs, outputs


def part_jacobian(circuit: Circuit, part: PartSpec) -> LinearMap:
    """
    パートのヤコビアン J_v

    - 単一ノード: 全入辺の写像の横連結 [A | B | ...]（入辺なしなら単位写像）
    - 複数ノード: パート内部の辺に限定した前向き累積（パート入力→パート出力）

    Raises:
        CircuitError: パートが連結でない場合
    """
    nodes = list(part.nodes)
    for nid in nodes:
        circuit.dim(nid)
    if len(nodes) == 1:
        node = nodes[0]
        in_edges = circuit.in_edges(node)
        if not in_edges:
            return LinearMap.identity(circuit.dim(node))
        maps = [e.map for e in in_edges]
        return LinearMap.hstack(maps) if len(maps) > 1 else maps[0]

    members = set(nodes)
    internal = [e for e in circuit.edges if e.src in members and e.dst in members]
    sub = nx.DiGraph()
    sub.add_nodes_from(nodes)
    sub.add_edges_from((e.src, e.dst) for e in internal)
    if not nx.is_weakly_connected(sub):
        raise CircuitError(f"パート {part.label} が連結ではありません")

    inputs, outputs = _part_boundary(circuit, part, internal)
    order = [n for n in topological_order(circuit) if n in members]
    blocks = _accumulate(circuit, internal, order, inputs)
    return _assemble(circuit, blocks, inputs, outputs)


def forward_activations(circuit: Circuit, sources: Mapping[str, Iterable[float]]) -> ActivationState:
    """
    与えられたソース活性化を線形な辺で伝播させる（入辺の寄与は和をとる）

    Args:
        circuit: 回路
        sources: 入辺を持たないノードの活性化（入辺を持つノードを指定すると上書き）

    Returns:
        ActivationState: 全ノードの活性化（大域切断になる）
    """
    values: Dict[str, np.ndarray] = {}
    for node in topological_order(circuit):
        if node in sources:
            values[node] = np.asarray(sources[node], dtype=float).ravel()
            continue
        in_edges = circuit.in_edges(node)
        if not in_edges:
            raise CircuitError(f"ソースノード {node} の活性化が与えられていません")
        values[node] = sum((e.map.matvec(values[e.src]) for e in in_edges), np.zeros(circuit.dim(node)))
    return ActivationState(values)
