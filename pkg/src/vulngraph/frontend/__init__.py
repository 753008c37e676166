from .astnodes import (
    AstNode,
    FunctionAst,
    LEAF_TYPES,
    NODE_TYPES,
    NODE_TYPE_INDEX,
    NUM_NODE_TYPES,
    NodeType,
)
from .cfg import build_cfg, cfg_node_ids
from .dataflow import Occurrence, build_dfg, occurrence_events
from .edges import EdgeSet, RELATIONS, Relation
from .graph import (
    CodeGraph,
    NODE_CAP,
    assemble_graph,
    ast_edge_set,
    build_code_graph,
    build_ncs,
    graph_to_dot,
    graph_to_json,
    source_digest,
    validate_graph,
)
from .lexer import Token, tokenize
from .parser import parse_function

__all__ = [
    "AstNode",
    "CodeGraph",
    "EdgeSet",
    "FunctionAst",
    "LEAF_TYPES",
    "NODE_CAP",
    "NODE_TYPES",
    "NODE_TYPE_INDEX",
    "NUM_NODE_TYPES",
    "NodeType",
    "Occurrence",
    "RELATIONS",
    "Relation",
    "Token",
    "assemble_graph",
    "ast_edge_set",
    "build_cfg",
    "build_code_graph",
    "build_dfg",
    "build_ncs",
    "cfg_node_ids",
    "graph_to_dot",
    "graph_to_json",
    "occurrence_events",
    "parse_function",
    "source_digest",
    "tokenize",
    "validate_graph",
]
