"""Edge relations over the shared AST node set."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class Relation(Enum):
    AST = "AST"
    CFG = "CFG"
    NCS = "NCS"
    DFG_R = "DFG_R"
    DFG_W = "DFG_W"
    DFG_C = "DFG_C"


RELATIONS = tuple(Relation)


@dataclass(frozen=True)
class EdgeSet:
    relation: Relation
    edges: frozenset[tuple[int, int]]

    @staticmethod
    def of(relation: Relation, pairs) -> "EdgeSet":
        edges = frozenset((int(s), int(t)) for s, t in pairs)
        for s, t in edges:
            if s == t:
                raise ValueError(f"self-loop {s} in relation {relation.value}")
        return EdgeSet(relation, edges)

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def __len__(self) -> int:
        return len(self.edges)
