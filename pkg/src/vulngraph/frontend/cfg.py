"""Control-flow graph over AST statement and condition nodes.

CFG vertices are the statement-level nodes (Decl, Assign, Call, Return at
statement position, the init/update parts of a for), the Condition nodes of
if/while/for, and the synthetic Entry/Exit. Branch targets follow the usual
structure: a condition has a true successor and a false/join successor, loops
add a back edge, returns jump to Exit.

Unreachable statements simply end up with no predecessors here; the graph
assembly step rejects such functions.
"""

from __future__ import annotations

from .astnodes import AstNode, FunctionAst, NodeType
from .edges import EdgeSet, Relation

_SIMPLE_STMTS = (NodeType.DECL, NodeType.ASSIGN, NodeType.CALL)


def _function_parts(ast: FunctionAst) -> tuple[int, AstNode, int]:
    entry = body = exit_ = None
    for child in ast.children_of(0):
        if child.node_type == NodeType.ENTRY:
            entry = child.id
        elif child.node_type == NodeType.BLOCK:
            body = child
        elif child.node_type == NodeType.EXIT:
            exit_ = child.id
    return entry, body, exit_


def build_cfg(ast: FunctionAst) -> EdgeSet:
    entry, body, exit_ = _function_parts(ast)
    edges: set[tuple[int, int]] = set()

    def wire(preds: list[int], target: int) -> None:
        for p in preds:
            edges.add((p, target))

    def walk_block(block: AstNode, preds: list[int]) -> list[int]:
        for child_id in block.children:
            preds = walk_stmt(ast.nodes[child_id], preds)
        return preds

    def walk_stmt(stmt: AstNode, preds: list[int]) -> list[int]:
        kind = stmt.node_type
        if kind in _SIMPLE_STMTS:
            wire(preds, stmt.id)
            return [stmt.id]
        if kind == NodeType.RETURN:
            wire(preds, stmt.id)
            edges.add((stmt.id, exit_))
            return []
        if kind == NodeType.IF:
            children = ast.children_of(stmt.id)
            cond, then_block = children[0], children[1]
            wire(preds, cond.id)
            frontier = walk_block(then_block, [cond.id])
            if len(children) == 3:
                frontier = frontier + walk_block(children[2], [cond.id])
            else:
                frontier = frontier + [cond.id]
            return list(dict.fromkeys(frontier))
        if kind == NodeType.WHILE:
            cond, body_block = ast.children_of(stmt.id)
            wire(preds, cond.id)
            back = walk_block(body_block, [cond.id])
            wire(back, cond.id)
            return [cond.id]
        if kind == NodeType.FOR:
            init, cond, update, body_block = ast.children_of(stmt.id)
            wire(preds, init.id)
            edges.add((init.id, cond.id))
            back = walk_block(body_block, [cond.id])
            wire(back, update.id)
            edges.add((update.id, cond.id))
            return [cond.id]
        raise AssertionError(f"unexpected statement node {kind}")

    frontier = walk_block(body, [entry])
    wire(frontier, exit_)
    return EdgeSet.of(Relation.CFG, edges)


def cfg_node_ids(ast: FunctionAst) -> list[int]:
    """All node ids that participate in the CFG, in pre-order."""
    entry, body, exit_ = _function_parts(ast)
    ids = [entry, exit_]

    def walk_block(block: AstNode) -> None:
        for child_id in block.children:
            walk_stmt(ast.nodes[child_id])

    def walk_stmt(stmt: AstNode) -> None:
        kind = stmt.node_type
        if kind in _SIMPLE_STMTS or kind == NodeType.RETURN:
            ids.append(stmt.id)
        elif kind == NodeType.IF:
            children = ast.children_of(stmt.id)
            ids.append(children[0].id)
            walk_block(children[1])
            if len(children) == 3:
                walk_block(children[2])
        elif kind == NodeType.WHILE:
            cond, body_block = ast.children_of(stmt.id)
            ids.append(cond.id)
            walk_block(body_block)
        elif kind == NodeType.FOR:
            init, cond, update, body_block = ast.children_of(stmt.id)
            ids.extend([init.id, cond.id, update.id])
            walk_block(body_block)

    walk_block(body)
    return sorted(ids)
