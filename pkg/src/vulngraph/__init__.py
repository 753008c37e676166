"""Vulnerability detection over composite code graphs.

A C-subset frontend turns each function into a multi-relation graph (syntax
tree, control flow, three dataflow relations, token sequence); gated graph
recurrent layers learn node states over it; a convolutional or flat readout
maps the node states to a vulnerable/benign probability.
"""

from .frontend import CodeGraph, Relation, build_code_graph, graph_to_dot, tokenize

__version__ = "0.1.0"

__all__ = [
    "CodeGraph",
    "Relation",
    "__version__",
    "build_code_graph",
    "graph_to_dot",
    "tokenize",
]
