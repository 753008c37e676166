"""Composite multi-relation code graph: assembly, validation, serialization.

All six relations share the AST's node set. Assembly validates the structural
invariants (AST is a tree, CFG has one entry/exit with full reachability, the
token-sequence relation is a simple path over the leaves, computed-from edges
stay inside their assignment) and rejects functions over the node cap.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from ..errors import GraphInvariantError, NodeCapExceeded
from .astnodes import AstNode, FunctionAst, LEAF_TYPES, NodeType
from .cfg import build_cfg, cfg_node_ids
from .dataflow import build_dfg
from .edges import EdgeSet, RELATIONS, Relation
from .lexer import tokenize
from .parser import parse_function

NODE_CAP = 500

DOT_COLORS = {
    Relation.AST: "purple",
    Relation.CFG: "green3",
    Relation.NCS: "red",
    Relation.DFG_R: "orange",
    Relation.DFG_W: "blue",
    Relation.DFG_C: "brown",
}


@dataclass(frozen=True)
class CodeGraph:
    nodes: tuple[AstNode, ...]
    edge_sets: dict[Relation, EdgeSet]
    label: int | None
    source_hash: str

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def edges(self, relation: Relation) -> list[tuple[int, int]]:
        return self.edge_sets[relation].sorted_edges()

    def to_json_dict(self, relations: tuple[Relation, ...] = RELATIONS) -> dict:
        return {
            "nodes": [
                {"id": n.id, "type": n.node_type.value, "code": n.code}
                for n in self.nodes
            ],
            "edges": {r.value: [list(e) for e in self.edges(r)] for r in relations},
            "label": self.label,
            "source_hash": self.source_hash,
        }

    @staticmethod
    def from_json_dict(data: dict) -> "CodeGraph":
        children: dict[int, list[int]] = {rec["id"]: [] for rec in data["nodes"]}
        parent: dict[int, int | None] = {rec["id"]: None for rec in data["nodes"]}
        for s, t in data["edges"].get(Relation.AST.value, []):
            children[s].append(t)
            parent[t] = s
        nodes = tuple(
            AstNode(
                id=rec["id"],
                node_type=NodeType(rec["type"]),
                code=rec["code"],
                children=tuple(sorted(children[rec["id"]])),
                parent=parent[rec["id"]],
            )
            for rec in sorted(data["nodes"], key=lambda r: r["id"])
        )
        edge_sets = {
            Relation(name): EdgeSet.of(Relation(name), pairs)
            for name, pairs in data["edges"].items()
        }
        for rel in RELATIONS:
            edge_sets.setdefault(rel, EdgeSet.of(rel, ()))
        return CodeGraph(
            nodes=nodes,
            edge_sets=edge_sets,
            label=data.get("label"),
            source_hash=data.get("source_hash", ""),
        )


def source_digest(source: str) -> str:
    return hashlib.sha256(source.encode("utf-8")).hexdigest()


def build_ncs(ast: FunctionAst) -> EdgeSet:
    """Chain consecutive token-bearing leaves in source order."""
    leaves = ast.leaf_ids()
    return EdgeSet.of(Relation.NCS, zip(leaves, leaves[1:]))


def ast_edge_set(ast_or_nodes) -> EdgeSet:
    nodes = ast_or_nodes.nodes if isinstance(ast_or_nodes, FunctionAst) else ast_or_nodes
    pairs = [(n.id, c) for n in nodes for c in n.children]
    return EdgeSet.of(Relation.AST, pairs)


def _reachable(start: int, adjacency: dict[int, list[int]]) -> set[int]:
    seen = {start}
    stack = [start]
    while stack:
        for nxt in adjacency.get(stack.pop(), ()):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def validate_graph(graph: CodeGraph, cfg_ids: list[int] | None = None) -> None:
    """Check the structural invariants; raise GraphInvariantError on failure."""
    m = graph.num_nodes
    for rel, es in graph.edge_sets.items():
        for s, t in es.edges:
            if not (0 <= s < m and 0 <= t < m):
                raise GraphInvariantError(f"{rel.value} edge ({s},{t}) out of range")

    ast_edges = graph.edge_sets[Relation.AST].edges
    if len(ast_edges) != m - 1:
        raise GraphInvariantError(f"AST has {len(ast_edges)} edges for {m} nodes")
    indeg = {i: 0 for i in range(m)}
    down: dict[int, list[int]] = {i: [] for i in range(m)}
    for s, t in ast_edges:
        indeg[t] += 1
        down[s].append(t)
    roots = [i for i in range(m) if indeg[i] == 0]
    if roots != [0] or any(v > 1 for v in indeg.values()):
        raise GraphInvariantError("AST edges do not form a tree rooted at node 0")
    if len(_reachable(0, down)) != m:
        raise GraphInvariantError("AST tree does not span all nodes")

    entries = [n.id for n in graph.nodes if n.node_type == NodeType.ENTRY]
    exits = [n.id for n in graph.nodes if n.node_type == NodeType.EXIT]
    if len(entries) != 1 or len(exits) != 1:
        raise GraphInvariantError("CFG must have exactly one Entry and one Exit")
    cfg_edges = graph.edge_sets[Relation.CFG].edges
    fwd: dict[int, list[int]] = {}
    bwd: dict[int, list[int]] = {}
    for s, t in cfg_edges:
        fwd.setdefault(s, []).append(t)
        bwd.setdefault(t, []).append(s)
    touched = {v for e in cfg_edges for v in e}
    expected = set(cfg_ids) if cfg_ids is not None else touched | {entries[0], exits[0]}
    from_entry = _reachable(entries[0], fwd)
    to_exit = _reachable(exits[0], bwd)
    unreachable = expected - from_entry
    if unreachable:
        raise GraphInvariantError(f"CFG nodes unreachable from Entry: {sorted(unreachable)}")
    stuck = expected - to_exit
    if stuck:
        raise GraphInvariantError(f"CFG nodes that cannot reach Exit: {sorted(stuck)}")
    if touched - expected:
        raise GraphInvariantError("CFG edges touch non-statement nodes")

    leaves = [n.id for n in graph.nodes if n.node_type in LEAF_TYPES]
    want_ncs = frozenset(zip(leaves, leaves[1:]))
    if graph.edge_sets[Relation.NCS].edges != want_ncs:
        raise GraphInvariantError("NCS edges are not the source-order leaf chain")

    for s, t in graph.edge_sets[Relation.DFG_C].edges:
        if _enclosing_assign(graph.nodes, s) is None or (
            _enclosing_assign(graph.nodes, s) != _enclosing_assign(graph.nodes, t)
        ):
            raise GraphInvariantError(f"computed-from edge ({s},{t}) escapes its assignment")


def _enclosing_assign(nodes: tuple[AstNode, ...], node_id: int) -> int | None:
    cur = nodes[node_id].parent
    while cur is not None:
        if nodes[cur].node_type == NodeType.ASSIGN:
            return cur
        cur = nodes[cur].parent
    return None


def assemble_graph(
    ast: FunctionAst,
    edge_sets: dict[Relation, EdgeSet],
    label: int | None,
    source: str,
    cap: int = NODE_CAP,
) -> CodeGraph:
    m = len(ast.nodes)
    if m > cap:
        raise NodeCapExceeded(m, cap)
    sets = dict(edge_sets)
    sets.setdefault(Relation.AST, ast_edge_set(ast))
    graph = CodeGraph(
        nodes=ast.nodes,
        edge_sets=sets,
        label=label,
        source_hash=source_digest(source),
    )
    validate_graph(graph, cfg_ids=cfg_node_ids(ast))
    return graph


def build_code_graph(source: str, label: int | None = None, cap: int = NODE_CAP) -> CodeGraph:
    """Source text to validated composite graph, end to end."""
    tokens = tokenize(source)
    ast = parse_function(tokens)
    cfg = build_cfg(ast)
    dfg_r, dfg_w, dfg_c = build_dfg(ast, cfg)
    sets = {
        Relation.AST: ast_edge_set(ast),
        Relation.CFG: cfg,
        Relation.NCS: build_ncs(ast),
        Relation.DFG_R: dfg_r,
        Relation.DFG_W: dfg_w,
        Relation.DFG_C: dfg_c,
    }
    return assemble_graph(ast, sets, label, source, cap=cap)


def graph_to_dot(graph: CodeGraph, relations: tuple[Relation, ...] = RELATIONS) -> str:
    """Graphviz rendering with one color per relation and a legend."""
    lines = ["digraph code {", "  node [shape=box, fontsize=10];"]
    for n in graph.nodes:
        code = n.code.replace("\\", "\\\\").replace('"', '\\"')
        lines.append(f'  n{n.id} [label="{n.id}: {n.node_type.value}\\n{code}"];')
    for rel in relations:
        color = DOT_COLORS[rel]
        for s, t in graph.edges(rel):
            lines.append(f'  n{s} -> n{t} [color={color}];')
    legend = "\\l".join(f"{r.value}: {DOT_COLORS[r]}" for r in relations)
    lines.append(f'  legend [shape=note, label="{legend}\\l"];')
    lines.append("}")
    return "\n".join(lines)


def graph_to_json(graph: CodeGraph, relations: tuple[Relation, ...] = RELATIONS) -> str:
    return json.dumps(graph.to_json_dict(relations), indent=2, sort_keys=True)
