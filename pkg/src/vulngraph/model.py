"""End-to-end network: initial states -> gated graph layers -> readout -> loss.

Parameters live in one ordered name->array dict so the optimizer, the
checkpoint format and the finite-difference harness can all iterate them
uniformly. Arrays with ndim >= 2 are weights (L2-regularized); vectors are
biases. The backward pass returns exact reverse-mode gradients for every
parameter and, optionally, for the input feature rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NonFiniteGradient
from .ggnn import AdjacencyTensor, GruWeights, ggnn_backward, ggnn_forward
from .readout import (
    ConvStage,
    conv_readout,
    conv_readout_backward,
    default_conv_stages,
    flat_readout,
    flat_readout_backward,
)

PROB_EPS = 1e-12


@dataclass(frozen=True)
class NetConfig:
    """Shape and wiring of the network, independent of training settings."""

    d: int
    z: int
    steps: int
    rel_names: tuple[str, ...]
    reverse_edges: bool = False
    aggregator: str = "sum"
    readout: str = "conv"  # conv | flat
    conv_channels: int = 8
    conv_mlp_hidden: tuple[int, ...] = ()
    flat_mlp_hidden: tuple[int, ...] = (16,)
    m_max: int = 500
    mask_padding: bool = True

    def __post_init__(self):
        if self.z < self.d:
            raise ConfigError(f"hidden size {self.z} < feature size {self.d}")
        if self.steps < 1:
            raise ConfigError("at least one propagation step is required")
        if not self.rel_names:
            raise ConfigError("at least one relation is required")
        if self.readout not in ("conv", "flat"):
            raise ConfigError(f"unknown readout {self.readout!r}")

    @property
    def rel_keys(self) -> tuple[str, ...]:
        keys = list(self.rel_names)
        if self.reverse_edges:
            keys += [name + "_rev" for name in self.rel_names]
        return tuple(keys)

    @property
    def conv_stages(self) -> tuple[ConvStage, ...]:
        return default_conv_stages(self.conv_channels)


@dataclass(frozen=True)
class GraphSample:
    """One graph as the network consumes it."""

    adj: AdjacencyTensor
    x: np.ndarray  # (m, d)
    label: int | None = None
    token_rows: tuple[np.ndarray, ...] | None = None  # for embedding finetuning


def _glorot(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _mlp_params(
    rng: np.random.Generator, prefix: str, in_dim: int, hidden: tuple[int, ...]
) -> dict[str, np.ndarray]:
    params: dict[str, np.ndarray] = {}
    dims = [in_dim, *hidden, 1]
    for i in range(len(dims) - 1):
        params[f"{prefix}.l{i}.W"] = _glorot(rng, (dims[i + 1], dims[i]), dims[i], dims[i + 1])
        params[f"{prefix}.l{i}.b"] = np.zeros(dims[i + 1])
    return params


def conv_output_columns(cfg: NetConfig, cols: int) -> int:
    rows, out_cols = cfg.m_max, cols
    channels = 1
    for stage in cfg.conv_stages:
        rows, out_cols = stage.out_shape(rows, out_cols)
        channels = stage.out_channels
    return out_cols * channels


def init_params(cfg: NetConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """Fresh parameter dict; construction order is the canonical order."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for key in cfg.rel_keys:
        params[f"msg.{key}.W"] = _glorot(rng, (cfg.z, cfg.z), cfg.z, cfg.z)
    params["msg.b"] = np.zeros(cfg.z)
    for name in GruWeights._fields:
        if name.startswith("b"):
            params[f"gru.{name}"] = np.zeros(cfg.z)
        else:
            params[f"gru.{name}"] = _glorot(rng, (cfg.z, cfg.z), cfg.z, cfg.z)
    if cfg.readout == "flat":
        params.update(_mlp_params(rng, "flat", cfg.z + cfg.d, cfg.flat_mlp_hidden))
    else:
        cin = 1
        for i, stage in enumerate(cfg.conv_stages):
            fan = (cin * stage.width, stage.out_channels * stage.width)
            params[f"conv.s{i}.F"] = _glorot(
                rng, (stage.out_channels, cin, stage.width), fan[0], fan[1]
            )
            params[f"conv.s{i}.b"] = np.zeros(stage.out_channels)
            cin = stage.out_channels
        params.update(
            _mlp_params(
                rng, "conv.zmlp", conv_output_columns(cfg, cfg.z + cfg.d), cfg.conv_mlp_hidden
            )
        )
        params.update(
            _mlp_params(rng, "conv.ymlp", conv_output_columns(cfg, cfg.z), cfg.conv_mlp_hidden)
        )
    return params


def weight_names(params: dict[str, np.ndarray]) -> list[str]:
    return [k for k, v in params.items() if v.ndim >= 2]


def l2_penalty(params: dict[str, np.ndarray]) -> float:
    return float(sum(np.sum(params[k] ** 2) for k in weight_names(params)))


def _flat_layers(params: dict[str, np.ndarray]) -> list[tuple[np.ndarray, np.ndarray]]:
    layers = []
    i = 0
    while f"flat.l{i}.W" in params:
        layers.append((params[f"flat.l{i}.W"], params[f"flat.l{i}.b"]))
        i += 1
    return layers


def forward(
    params: dict[str, np.ndarray], cfg: NetConfig, sample: GraphSample
) -> tuple[float, tuple]:
    """Probability that the graph is vulnerable, plus the backprop cache."""
    m, d = sample.x.shape
    h0 = np.zeros((m, cfg.z))
    h0[:, :d] = sample.x
    h_final, ggnn_cache = ggnn_forward(
        sample.adj, h0, params, cfg.rel_keys, cfg.steps, cfg.aggregator
    )
    if cfg.readout == "flat":
        logit, ro_cache = flat_readout(h_final, sample.x, _flat_layers(params))
    else:
        logit, ro_cache = conv_readout(
            h_final, sample.x, params, cfg.conv_stages, cfg.m_max, cfg.mask_padding
        )
    prob = float(1.0 / (1.0 + np.exp(-logit)))
    return prob, (ggnn_cache, ro_cache, prob)


def predict_probability(params: dict[str, np.ndarray], cfg: NetConfig, sample: GraphSample) -> float:
    return forward(params, cfg, sample)[0]


def loss(probability: float, label: int, params: dict[str, np.ndarray], lam: float) -> float:
    """Cross entropy of the clamped probability plus L2 over weight matrices."""
    p = min(max(probability, PROB_EPS), 1.0 - PROB_EPS)
    data = -(label * np.log(p) + (1 - label) * np.log(1.0 - p))
    return float(data + lam * l2_penalty(params))


def backward(
    params: dict[str, np.ndarray],
    cfg: NetConfig,
    sample: GraphSample,
    label: int,
    lam: float = 0.0,
    check_finite: bool = True,
) -> tuple[float, dict[str, np.ndarray], np.ndarray]:
    """Loss, exact parameter gradients, and the input-feature gradient."""
    prob, (ggnn_cache, ro_cache, _) = forward(params, cfg, sample)
    value = loss(prob, label, params, lam)

    dlogit = prob - label  # d(bce)/d(logit) through the sigmoid
    if cfg.readout == "flat":
        dh, dx, mlp_grads = flat_readout_backward(dlogit, ro_cache, _flat_layers(params))
        grads = {f"flat.l{i}.W": g[0] for i, g in enumerate(mlp_grads)}
        grads.update({f"flat.l{i}.b": g[1] for i, g in enumerate(mlp_grads)})
    else:
        dh, dx, grads = conv_readout_backward(dlogit, ro_cache, params, cfg.conv_stages)

    ggnn_grads, dh0 = ggnn_backward(dh, ggnn_cache, params)
    grads.update(ggnn_grads)
    dx = dx + dh0[:, : sample.x.shape[1]]

    if lam != 0.0:
        for name in weight_names(params):
            grads[name] = grads[name] + 2.0 * lam * params[name]
    ordered = {name: grads[name] for name in params}
    if check_finite:
        for name, g in ordered.items():
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient(name)
    return value, ordered, dx
