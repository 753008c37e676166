"""Exception types shared across the package."""

from __future__ import annotations


class VulnGraphError(Exception):
    """Base class for all domain errors raised by this package."""


class LexError(VulnGraphError):
    def __init__(self, position: int, message: str = "illegal character"):
        self.position = position
        super().__init__(f"{message} at offset {position}")


class ParseError(VulnGraphError):
    def __init__(self, found: str, expected: str, position: int | None = None):
        self.found = found
        self.expected = expected
        self.position = position
        at = f" at offset {position}" if position is not None else ""
        super().__init__(f"expected {expected}, found {found}{at}")


class UnsupportedConstruct(VulnGraphError):
    """Legal C, but outside the supported subset."""


class UnresolvedVariable(VulnGraphError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"identifier {name!r} has no declaration or parameter")


class NodeCapExceeded(VulnGraphError):
    def __init__(self, count: int, cap: int):
        self.count = count
        self.cap = cap
        super().__init__(f"graph has {count} nodes, cap is {cap}")


class GraphInvariantError(VulnGraphError):
    """A structural invariant of the assembled graph does not hold."""


class ShapeMismatch(VulnGraphError):
    pass


class HiddenTooSmall(VulnGraphError):
    def __init__(self, z: int, d: int):
        self.z = z
        self.d = d
        super().__init__(f"hidden size {z} is smaller than feature size {d}")


class UnsupportedAggregator(VulnGraphError):
    pass


class TooFewColumns(VulnGraphError):
    pass


class NonFiniteGradient(VulnGraphError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"non-finite gradient for parameter {name!r}")


class EmptyCorpus(VulnGraphError):
    pass


class EmptyDataset(VulnGraphError):
    pass


class SingleClassDataset(VulnGraphError):
    pass


class InsufficientPositives(VulnGraphError):
    pass


class ConfigError(VulnGraphError):
    pass


class CheckpointError(VulnGraphError):
    pass
