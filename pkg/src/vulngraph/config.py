"""Run configuration: every hyperparameter in one serializable record.

The exact configuration is embedded in checkpoints and evaluation reports, so
results can always be traced back to their settings. Execution details that do
not change results (thread count, file paths) are deliberately not part of it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace

from .errors import ConfigError
from .frontend import NUM_NODE_TYPES, RELATIONS, Relation

ALL_RELATION_NAMES = tuple(r.value for r in RELATIONS)


@dataclass(frozen=True)
class RunConfig:
    # model
    d_code: int = 100
    z: int = 200
    steps: int = 6
    relations: tuple[str, ...] = ALL_RELATION_NAMES
    reverse_edges: bool = False
    aggregator: str = "sum"
    readout: str = "conv"
    conv_channels: int = 8
    conv_mlp_hidden: tuple[int, ...] = ()
    flat_mlp_hidden: tuple[int, ...] = (16,)
    m_max: int = 500
    mask_padding: bool = True
    # embedding corpus training
    window: int = 5
    negatives: int = 5
    embed_epochs: int = 5
    finetune_embeddings: bool = False
    # optimization
    lam: float = 1e-4
    lr: float = 1e-4
    batch_size: int = 128
    patience: int = 100
    max_epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.z < self.d:
            raise ConfigError(
                f"hidden size {self.z} must be at least d_code + #node-types = {self.d}"
            )
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if not self.relations:
            raise ConfigError("at least one relation is required")
        for name in self.relations:
            if name not in ALL_RELATION_NAMES:
                raise ConfigError(f"unknown relation {name!r}")
        if self.readout not in ("conv", "flat"):
            raise ConfigError(f"unknown readout {self.readout!r}")
        if self.lam < 0:
            raise ConfigError("lam must be >= 0")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")

    @property
    def d(self) -> int:
        return self.d_code + NUM_NODE_TYPES

    @property
    def relation_enums(self) -> tuple[Relation, ...]:
        return tuple(Relation(name) for name in self.relations)

    def with_overrides(self, **kwargs) -> "RunConfig":
        return replace(self, **kwargs)

    def to_json_dict(self) -> dict:
        data = asdict(self)
        for key in ("relations", "conv_mlp_hidden", "flat_mlp_hidden"):
            data[key] = list(data[key])
        return data

    @staticmethod
    def from_json_dict(data: dict) -> "RunConfig":
        kwargs = dict(data)
        for key in ("relations", "conv_mlp_hidden", "flat_mlp_hidden"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return RunConfig(**kwargs)

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "RunConfig":
        return RunConfig.from_json_dict(json.loads(text))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:12]


# The published configuration: word2vec dimension 100, hidden states 200,
# 6 propagation steps, batch 128, Adam at 1e-4.
def paper_config(**overrides) -> RunConfig:
    return RunConfig().with_overrides(**overrides)


# Small setup for tests and laptop runs. The hidden size is the smallest
# round value that still fits the 16-dim code embedding plus the type one-hot.
def desk_config(**overrides) -> RunConfig:
    base = RunConfig(
        d_code=16,
        z=40,
        steps=4,
        batch_size=16,
        lr=2e-3,
        patience=100,
        max_epochs=100,
        embed_epochs=3,
        m_max=96,
    )
    return base.with_overrides(**overrides)
