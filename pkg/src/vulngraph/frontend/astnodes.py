"""AST node types for the C subset.

Every later graph relation (CFG, DFG, NCS) is defined over this node set, so
node identity matters: ids are pre-order ranks and are stable for identical
source text.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class NodeType(Enum):
    FUNCTION = "Function"
    PARAM_LIST = "ParamList"
    PARAM = "Param"
    BLOCK = "Block"
    DECL = "Decl"
    IF = "If"
    WHILE = "While"
    FOR = "For"
    RETURN = "Return"
    ASSIGN = "Assign"
    BINARY_EXPR = "BinaryExpr"
    UNARY_EXPR = "UnaryExpr"
    CALL = "Call"
    IDENTIFIER = "Identifier"
    LITERAL = "Literal"
    OPERATOR = "Operator"
    CONDITION = "Condition"
    ENTRY = "Entry"
    EXIT = "Exit"


# Node types whose instances own exactly one source token. These are the AST
# leaves; Entry/Exit are synthetic and childless but own no tokens, so they do
# not count as leaves for NCS purposes.
LEAF_TYPES = frozenset({NodeType.IDENTIFIER, NodeType.LITERAL, NodeType.OPERATOR})

NODE_TYPES = tuple(NodeType)
NODE_TYPE_INDEX = {t: i for i, t in enumerate(NODE_TYPES)}
NUM_NODE_TYPES = len(NODE_TYPES)


@dataclass(frozen=True)
class AstNode:
    id: int
    node_type: NodeType
    code: str
    children: tuple[int, ...]
    parent: int | None
    token_index: int | None = None  # owned source token, leaves only

    @property
    def is_leaf(self) -> bool:
        return self.node_type in LEAF_TYPES


@dataclass(frozen=True)
class FunctionAst:
    """A parsed function: nodes in pre-order, plus the token bookkeeping
    needed to check that parsing loses nothing."""

    nodes: tuple[AstNode, ...]
    tokens: tuple  # the Token list the parser consumed
    structural_owner: dict[int, int]  # token index -> node id, non-leaf tokens

    @property
    def root(self) -> AstNode:
        return self.nodes[0]

    def __len__(self) -> int:
        return len(self.nodes)

    def leaf_ids(self) -> list[int]:
        """Token-bearing leaves in pre-order, which equals source order."""
        return [n.id for n in self.nodes if n.is_leaf]

    def children_of(self, node_id: int) -> tuple[AstNode, ...]:
        return tuple(self.nodes[c] for c in self.nodes[node_id].children)
