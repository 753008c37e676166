"""Variable dataflow relations over identifier leaf occurrences.

Three relations, all attached to Identifier leaves:

  last-read     edge from an occurrence to every occurrence of the same
                variable that is its most recent read along some CFG path
  last-write    edge from an occurrence to every write of the same variable
                that reaches it (standard reaching definitions)
  computed-from edge from an assignment's left-hand identifier to each
                identifier read on its right-hand side

The first two are computed by an iterative forward fixpoint over the CFG so
loops contribute edges; within a statement, right-hand-side reads happen
before the left-hand-side write. A parameter occurrence acts as both the
initial write of the variable and a read (it consumes the incoming argument),
which is what places parameters at the head of both chains.
"""

from __future__ import annotations

from typing import NamedTuple

from ..errors import UnresolvedVariable
from .astnodes import AstNode, FunctionAst, NodeType
from .cfg import cfg_node_ids
from .edges import EdgeSet, Relation


class Occurrence(NamedTuple):
    leaf: int  # Identifier leaf node id
    var: str
    read: bool
    write: bool


def _expr_reads(ast: FunctionAst, node: AstNode, out: list[int]) -> None:
    """Identifier leaves read inside an expression subtree, in source order.

    Call callees are function names, not variable occurrences, and are
    skipped; call arguments are reads.
    """
    if node.node_type == NodeType.IDENTIFIER:
        out.append(node.id)
        return
    children = ast.children_of(node.id)
    if node.node_type == NodeType.CALL:
        children = children[1:]
    for child in children:
        _expr_reads(ast, child, out)


def _declared_variables(ast: FunctionAst) -> dict[str, int]:
    """Map of variable name to its declaring leaf (param or decl name)."""
    declared: dict[str, int] = {}
    for node in ast.nodes:
        if node.node_type == NodeType.PARAM:
            leaf = ast.nodes[node.children[0]]
            declared[leaf.code] = leaf.id
        elif node.node_type == NodeType.DECL:
            child = ast.nodes[node.children[0]]
            if child.node_type == NodeType.ASSIGN:
                child = ast.nodes[child.children[0]]
            declared[child.code] = child.id
    return declared


def occurrence_events(ast: FunctionAst) -> dict[int, list[Occurrence]]:
    """Ordered variable occurrences per CFG node.

    Raises UnresolvedVariable for expression identifiers with no declaration.
    """
    declared = _declared_variables(ast)

    def reads_of(expr_id: int) -> list[Occurrence]:
        leaves: list[int] = []
        _expr_reads(ast, ast.nodes[expr_id], leaves)
        events = []
        for leaf in leaves:
            name = ast.nodes[leaf].code
            if name not in declared:
                raise UnresolvedVariable(name)
            events.append(Occurrence(leaf, name, read=True, write=False))
        return events

    def assign_events(assign: AstNode) -> list[Occurrence]:
        lhs, _op, rhs = ast.children_of(assign.id)
        if lhs.code not in declared:
            raise UnresolvedVariable(lhs.code)
        events = reads_of(rhs.id)
        events.append(Occurrence(lhs.id, lhs.code, read=False, write=True))
        return events

    events_by_node: dict[int, list[Occurrence]] = {}
    for node_id in cfg_node_ids(ast):
        node = ast.nodes[node_id]
        kind = node.node_type
        if kind == NodeType.ENTRY:
            events = []
            for param in (n for n in ast.nodes if n.node_type == NodeType.PARAM):
                leaf = ast.nodes[param.children[0]]
                events.append(Occurrence(leaf.id, leaf.code, read=True, write=True))
            events_by_node[node_id] = events
        elif kind == NodeType.DECL:
            child = ast.nodes[node.children[0]]
            if child.node_type == NodeType.ASSIGN:
                events_by_node[node_id] = assign_events(child)
            else:
                events_by_node[node_id] = [
                    Occurrence(child.id, child.code, read=False, write=True)
                ]
        elif kind == NodeType.ASSIGN:
            events_by_node[node_id] = assign_events(node)
        elif kind == NodeType.CALL:
            events = []
            for arg in node.children[1:]:
                events.extend(reads_of(arg))
            events_by_node[node_id] = events
        elif kind in (NodeType.RETURN, NodeType.CONDITION):
            events = []
            for child in node.children:
                events.extend(reads_of(child))
            events_by_node[node_id] = events
        else:
            events_by_node[node_id] = []
    return events_by_node


def _fixpoint(
    node_ids: list[int],
    preds: dict[int, list[int]],
    events: dict[int, list[Occurrence]],
    *,
    track_reads: bool,
) -> dict[int, dict[str, frozenset[int]]]:
    """Converged IN-states of a forward may-analysis over occurrence sets."""

    def transfer(state: dict[str, frozenset[int]], node: int) -> dict[str, frozenset[int]]:
        state = dict(state)
        for occ in events[node]:
            hits = occ.read if track_reads else occ.write
            if hits:
                state[occ.var] = frozenset((occ.leaf,))
        return state

    in_states: dict[int, dict[str, frozenset[int]]] = {n: {} for n in node_ids}
    out_states: dict[int, dict[str, frozenset[int]]] = {n: {} for n in node_ids}
    changed = True
    while changed:
        changed = False
        for node in node_ids:
            merged: dict[str, frozenset[int]] = {}
            for p in preds[node]:
                for var, occs in out_states[p].items():
                    merged[var] = merged.get(var, frozenset()) | occs
            out = transfer(merged, node)
            if merged != in_states[node] or out != out_states[node]:
                in_states[node] = merged
                out_states[node] = out
                changed = True
    return in_states


def build_dfg(ast: FunctionAst, cfg: EdgeSet) -> tuple[EdgeSet, EdgeSet, EdgeSet]:
    """Last-read, last-write, and computed-from edge sets."""
    events = occurrence_events(ast)
    node_ids = sorted(events.keys())
    preds: dict[int, list[int]] = {n: [] for n in node_ids}
    for s, t in cfg.sorted_edges():
        preds[t].append(s)

    in_reads = _fixpoint(node_ids, preds, events, track_reads=True)
    in_writes = _fixpoint(node_ids, preds, events, track_reads=False)

    dfg_r: set[tuple[int, int]] = set()
    dfg_w: set[tuple[int, int]] = set()
    for node in node_ids:
        reads = dict(in_reads[node])
        writes = dict(in_writes[node])
        for occ in events[node]:
            for prev in reads.get(occ.var, ()):
                if prev != occ.leaf:
                    dfg_r.add((occ.leaf, prev))
            for prev in writes.get(occ.var, ()):
                if prev != occ.leaf:
                    dfg_w.add((occ.leaf, prev))
            if occ.read:
                reads[occ.var] = frozenset((occ.leaf,))
            if occ.write:
                writes[occ.var] = frozenset((occ.leaf,))

    dfg_c: set[tuple[int, int]] = set()
    for node in ast.nodes:
        if node.node_type != NodeType.ASSIGN:
            continue
        lhs, _op, rhs = ast.children_of(node.id)
        rhs_reads: list[int] = []
        _expr_reads(ast, rhs, rhs_reads)
        for leaf in rhs_reads:
            if leaf != lhs.id:
                dfg_c.add((lhs.id, leaf))

    return (
        EdgeSet.of(Relation.DFG_R, dfg_r),
        EdgeSet.of(Relation.DFG_W, dfg_w),
        EdgeSet.of(Relation.DFG_C, dfg_c),
    )
