"""Graph-level prediction heads.

Two readouts over the final node states H and initial features X:

  flat  sigmoid( sum_j MLP([H_j, x_j]) ) — permutation invariant.
  conv  rows padded to a fixed node capacity, then per stage a 1-D
        convolution along the feature axis, ReLU and max-pooling; the second
        stage's pool also merges adjacent node rows. One path runs on [H, X],
        the other on H alone, sharing the stage filters; a terminal MLP per
        path maps each surviving row to a scalar, the two scalar vectors are
        multiplied elementwise and averaged into the logit. Depends on node
        order, which is canonical (AST pre-order).

Max-pool backward routes the gradient to the first occurrence of the maximum
in each window; ReLU uses subgradient 0 at 0. Both choices are fixed so runs
are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import NodeCapExceeded, ShapeMismatch, TooFewColumns


# -- per-row MLP ---------------------------------------------------------


def mlp_forward(x: np.ndarray, layers: list[tuple[np.ndarray, np.ndarray]]) -> tuple[np.ndarray, tuple]:
    """Rows of x through linear layers with ReLU between them; last layer is
    linear with a single output, returned as a vector."""
    acts = [x]
    pres = []
    out = x
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        if out.shape[1] != w.shape[1]:
            raise ShapeMismatch(f"MLP layer {i} expects {w.shape[1]} columns, got {out.shape[1]}")
        pre = out @ w.T + b
        pres.append(pre)
        out = pre if i == last else np.maximum(pre, 0.0)
        acts.append(out)
    return out[:, 0], (acts, pres)


def mlp_backward(
    dout: np.ndarray, cache: tuple, layers: list[tuple[np.ndarray, np.ndarray]]
) -> tuple[np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
    acts, pres = cache
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(layers)
    d = dout[:, None]
    for i in range(len(layers) - 1, -1, -1):
        w, _b = layers[i]
        if i < len(layers) - 1:
            d = d * (pres[i] > 0.0)
        dw = d.T @ acts[i]
        db = d.sum(axis=0)
        grads[i] = (dw, db)
        d = d @ w
    return d, grads


# -- flat readout --------------------------------------------------------


def flat_readout(
    h: np.ndarray, x: np.ndarray, layers: list[tuple[np.ndarray, np.ndarray]]
) -> tuple[float, tuple]:
    """Pre-sigmoid logit: sum over nodes of a per-node MLP on [H_j, x_j]."""
    if h.shape[0] != x.shape[0]:
        raise ShapeMismatch(f"H has {h.shape[0]} rows, X has {x.shape[0]}")
    joint = np.concatenate([h, x], axis=1)
    per_node, mlp_cache = mlp_forward(joint, layers)
    return float(per_node.sum()), (mlp_cache, h.shape[1])


def flat_readout_backward(
    dlogit: float, cache: tuple, layers: list[tuple[np.ndarray, np.ndarray]]
) -> tuple[np.ndarray, np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
    mlp_cache, z = cache
    n = mlp_cache[0][0].shape[0]
    djoint, grads = mlp_backward(np.full(n, dlogit), mlp_cache, layers)
    return djoint[:, :z], djoint[:, z:], grads


# -- conv primitives -----------------------------------------------------


def conv1d(x: np.ndarray, filters: np.ndarray, bias: np.ndarray) -> tuple[np.ndarray, tuple]:
    """Valid 1-D convolution along the feature axis of (rows, cols, cin)."""
    rows, cols, cin = x.shape
    cout, f_cin, width = filters.shape
    if f_cin != cin:
        raise ShapeMismatch(f"filter expects {f_cin} channels, input has {cin}")
    if cols < width:
        raise TooFewColumns(f"{cols} columns, filter width {width}")
    windows = sliding_window_view(x, width, axis=1)  # (rows, cols', cin, width)
    rows_, cols_ = windows.shape[0], windows.shape[1]
    flat = windows.reshape(rows_ * cols_, cin * width)
    out = (flat @ filters.reshape(cout, cin * width).T).reshape(rows_, cols_, cout) + bias
    return out, (x, flat)


def conv1d_backward(
    dout: np.ndarray, cache: tuple, filters: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x, flat = cache
    cout, cin, width = filters.shape
    dout_flat = dout.reshape(-1, cout)
    dfilters = (dout_flat.T @ flat).reshape(cout, cin, width)
    dbias = dout.sum(axis=(0, 1))
    dx = np.zeros_like(x)
    out_cols = dout.shape[1]
    for w in range(width):
        dx[:, w:w + out_cols, :] += dout @ filters[:, :, w]
    return dx, dfilters, dbias


def relu(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mask = x > 0.0
    return x * mask, mask


def maxpool2d(
    x: np.ndarray, window: tuple[int, int], stride: tuple[int, int]
) -> tuple[np.ndarray, tuple]:
    """Max pooling over (rows, cols) of a (rows, cols, ch) tensor."""
    rows, cols, ch = x.shape
    wr, wc = window
    sr, sc = stride
    if rows < wr or cols < wc:
        raise TooFewColumns(f"input {rows}x{cols} smaller than pool window {wr}x{wc}")
    view = sliding_window_view(x, (wr, wc), axis=(0, 1))[::sr, ::sc]
    out_r, out_c = view.shape[0], view.shape[1]
    flat = view.reshape(out_r, out_c, ch, wr * wc)
    arg = flat.argmax(axis=3)
    out = np.take_along_axis(flat, arg[..., None], axis=3)[..., 0]
    return out, (x.shape, window, stride, arg)


def maxpool2d_backward(dout: np.ndarray, cache: tuple) -> np.ndarray:
    shape, (wr, wc), (sr, sc), arg = cache
    out_r, out_c, ch = dout.shape
    rr = (np.arange(out_r) * sr)[:, None, None] + arg // wc
    cc = (np.arange(out_c) * sc)[None, :, None] + arg % wc
    kk = np.broadcast_to(np.arange(ch)[None, None, :], arg.shape)
    linear = (rr * shape[1] + cc) * shape[2] + kk
    flat = np.bincount(
        linear.ravel(), weights=dout.ravel(), minlength=shape[0] * shape[1] * shape[2]
    )
    return flat.reshape(shape)


# -- conv readout --------------------------------------------------------


@dataclass(frozen=True)
class ConvStage:
    """Geometry of one conv-ReLU-maxpool stage."""

    width: int
    out_channels: int
    pool_cols: int
    pool_col_stride: int
    pool_rows: int = 1
    pool_row_stride: int = 1

    def out_shape(self, rows: int, cols: int) -> tuple[int, int]:
        conv_cols = cols - self.width + 1
        if conv_cols < 1:
            raise TooFewColumns(f"{cols} columns for filter width {self.width}")
        pooled_cols = (conv_cols - self.pool_cols) // self.pool_col_stride + 1
        pooled_rows = (rows - self.pool_rows) // self.pool_row_stride + 1
        if pooled_cols < 1 or pooled_rows < 1:
            raise TooFewColumns(f"pool {self.pool_rows}x{self.pool_cols} too large")
        return pooled_rows, pooled_cols


# Filter/pool geometry from the experimental setup: width-3 filters with a
# (1,3)/(1,2) pool, then width-1 filters with a (2,2)/(1,2) pool that also
# merges adjacent node rows.
def default_conv_stages(channels: int = 8) -> tuple[ConvStage, ...]:
    return (
        ConvStage(width=3, out_channels=channels, pool_cols=3, pool_col_stride=2),
        ConvStage(
            width=1,
            out_channels=1,
            pool_cols=2,
            pool_col_stride=2,
            pool_rows=2,
            pool_row_stride=1,
        ),
    )


def conv_sigma(
    x: np.ndarray, filters: np.ndarray, bias: np.ndarray, stage: ConvStage
) -> tuple[np.ndarray, tuple]:
    """One MAXPOOL(ReLU(CONV(.))) stage."""
    conv_out, conv_cache = conv1d(x, filters, bias)
    act, mask = relu(conv_out)
    pooled, pool_cache = maxpool2d(
        act, (stage.pool_rows, stage.pool_cols), (stage.pool_row_stride, stage.pool_col_stride)
    )
    return pooled, (conv_cache, mask, pool_cache)


def conv_sigma_backward(
    dout: np.ndarray, cache: tuple, filters: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    conv_cache, mask, pool_cache = cache
    dact = maxpool2d_backward(dout, pool_cache)
    dconv = dact * mask
    return conv1d_backward(dconv, conv_cache, filters)


def _stage_params(params: dict[str, np.ndarray], i: int) -> tuple[np.ndarray, np.ndarray]:
    return params[f"conv.s{i}.F"], params[f"conv.s{i}.b"]


def _mlp_layers(params: dict[str, np.ndarray], prefix: str) -> list[tuple[np.ndarray, np.ndarray]]:
    layers = []
    i = 0
    while f"{prefix}.l{i}.W" in params:
        layers.append((params[f"{prefix}.l{i}.W"], params[f"{prefix}.l{i}.b"]))
        i += 1
    return layers


def surviving_row_mask(m: int, padded_rows: int, stages: tuple[ConvStage, ...]) -> np.ndarray:
    """Rows of the final stage output whose node-axis receptive field touches
    a real (non padding) node row."""
    rows = padded_rows
    for stage in stages:
        rows = (rows - stage.pool_rows) // stage.pool_row_stride + 1
    starts = np.arange(rows)
    for stage in reversed(stages):
        starts = starts * stage.pool_row_stride
    return starts < m


def row_receptive_overhead(stages: tuple[ConvStage, ...]) -> int:
    """Extra node rows (beyond the row itself) one output row can see."""
    size, stride = 1, 1
    for stage in stages:
        size += (stage.pool_rows - 1) * stride
        stride *= stage.pool_row_stride
    return size - 1


def conv_readout(
    h: np.ndarray,
    x: np.ndarray,
    params: dict[str, np.ndarray],
    stages: tuple[ConvStage, ...],
    m_max: int,
    mask_padding: bool = True,
) -> tuple[float, tuple]:
    """Pre-sigmoid logit of the two-path convolutional head."""
    m, z = h.shape
    if x.shape[0] != m:
        raise ShapeMismatch(f"H has {m} rows, X has {x.shape[0]}")
    if m > m_max:
        raise NodeCapExceeded(m, m_max)

    # Masked-out rows contribute nothing to the averaged logit or to any
    # gradient, so when masking is on, padding can stop at the deepest row
    # the surviving outputs can see.
    if mask_padding:
        padded_rows = min(m_max, m + row_receptive_overhead(stages))
    else:
        padded_rows = m_max

    def run_path(mat: np.ndarray) -> tuple[np.ndarray, list, tuple]:
        padded = np.zeros((padded_rows, mat.shape[1], 1))
        padded[:m, :, 0] = mat
        out = padded
        caches = []
        for i, stage in enumerate(stages):
            filters, bias = _stage_params(params, i)
            out, c = conv_sigma(out, filters, bias, stage)
            caches.append(c)
        flat = out.reshape(out.shape[0], -1)
        return flat, caches, out.shape

    z_flat, z_caches, z_shape = run_path(np.concatenate([h, x], axis=1))
    y_flat, y_caches, y_shape = run_path(h)
    if z_flat.shape[0] != y_flat.shape[0]:
        raise ShapeMismatch("conv paths pooled to different row counts")

    zs, zmlp_cache = mlp_forward(z_flat, _mlp_layers(params, "conv.zmlp"))
    ys, ymlp_cache = mlp_forward(y_flat, _mlp_layers(params, "conv.ymlp"))
    prod = zs * ys
    if mask_padding:
        mask = surviving_row_mask(m, padded_rows, stages)
    else:
        mask = np.ones(prod.shape[0], dtype=bool)
    logit = float(prod[mask].sum() / mask.sum())
    cache = (m, z, z_caches, y_caches, zmlp_cache, ymlp_cache, zs, ys, mask, z_shape, y_shape)
    return logit, cache


def conv_readout_backward(
    dlogit: float,
    cache: tuple,
    params: dict[str, np.ndarray],
    stages: tuple[ConvStage, ...],
) -> tuple[np.ndarray, np.ndarray, dict[str, np.ndarray]]:
    m, z, z_caches, y_caches, zmlp_cache, ymlp_cache, zs, ys, mask, z_shape, y_shape = cache
    dprod = np.where(mask, dlogit / mask.sum(), 0.0)
    dzs = dprod * ys
    dys = dprod * zs

    grads: dict[str, np.ndarray] = {}
    dz_flat, zmlp_grads = mlp_backward(dzs, zmlp_cache, _mlp_layers(params, "conv.zmlp"))
    dy_flat, ymlp_grads = mlp_backward(dys, ymlp_cache, _mlp_layers(params, "conv.ymlp"))
    for i, (dw, db) in enumerate(zmlp_grads):
        grads[f"conv.zmlp.l{i}.W"] = dw
        grads[f"conv.zmlp.l{i}.b"] = db
    for i, (dw, db) in enumerate(ymlp_grads):
        grads[f"conv.ymlp.l{i}.W"] = dw
        grads[f"conv.ymlp.l{i}.b"] = db

    for i in range(len(stages)):
        grads[f"conv.s{i}.F"] = np.zeros_like(params[f"conv.s{i}.F"])
        grads[f"conv.s{i}.b"] = np.zeros_like(params[f"conv.s{i}.b"])

    def back_path(dflat: np.ndarray, caches: list, out_shape: tuple) -> np.ndarray:
        d = dflat.reshape(out_shape)
        for i in range(len(stages) - 1, -1, -1):
            filters, _bias = _stage_params(params, i)
            dx, dfilters, dbias = conv_sigma_backward(d, caches[i], filters)
            grads[f"conv.s{i}.F"] += dfilters
            grads[f"conv.s{i}.b"] += dbias
            d = dx
        return d[:, :, 0]

    dz_pad = back_path(dz_flat, z_caches, z_shape)
    dy_pad = back_path(dy_flat, y_caches, y_shape)

    djoint = dz_pad[:m]
    dh = djoint[:, :z] + dy_pad[:m]
    dx = djoint[:, z:]
    return dh, dx, grads
