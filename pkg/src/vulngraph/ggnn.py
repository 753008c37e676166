"""Gated graph recurrent layers.

One propagation round transforms every node state with a per-relation weight
matrix, sums the transformed states of in-neighbors per relation, aggregates
across relations, and feeds the result through a GRU cell together with the
previous state. T rounds give each node a receptive field of radius T.

Every forward function returns a cache with exactly the arrays its backward
needs; backward passes are hand-derived and checked against central finite
differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ShapeMismatch, UnsupportedAggregator
from .frontend import CodeGraph, Relation

AGGREGATORS = ("sum", "mean", "max")


@dataclass(frozen=True)
class AdjacencyTensor:
    """Per-relation sparse edge lists over m nodes.

    Keys are relation names; a reversed relation is stored under
    "<name>_rev". An edge (s, t) means t receives a message from s.
    """

    num_nodes: int
    pairs: dict[str, tuple[np.ndarray, np.ndarray]]

    @staticmethod
    def from_edges(num_nodes: int, edges: dict[str, list[tuple[int, int]]]) -> "AdjacencyTensor":
        pairs = {}
        for key, pair_list in edges.items():
            if pair_list:
                arr = np.asarray(sorted(pair_list), dtype=np.int64)
                pairs[key] = (arr[:, 0], arr[:, 1])
            else:
                empty = np.zeros(0, dtype=np.int64)
                pairs[key] = (empty, empty)
        return AdjacencyTensor(num_nodes=num_nodes, pairs=pairs)

    @staticmethod
    def from_code_graph(
        graph: CodeGraph,
        relations: tuple[Relation, ...],
        reverse_edges: bool = False,
    ) -> "AdjacencyTensor":
        edges: dict[str, list[tuple[int, int]]] = {}
        for rel in relations:
            pairs = graph.edges(rel)
            edges[rel.value] = pairs
            if reverse_edges:
                edges[rel.value + "_rev"] = [(t, s) for s, t in pairs]
        return AdjacencyTensor.from_edges(graph.num_nodes, edges)

    def dense(self, key: str) -> np.ndarray:
        a = np.zeros((self.num_nodes, self.num_nodes))
        src, dst = self.pairs[key]
        a[src, dst] = 1.0
        return a


class GruWeights(NamedTuple):
    wu: np.ndarray
    uu: np.ndarray
    bu: np.ndarray
    wr: np.ndarray
    ur: np.ndarray
    br: np.ndarray
    wh: np.ndarray
    uh: np.ndarray
    bh: np.ndarray


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def message_pass(
    h: np.ndarray,
    src: np.ndarray,
    dst: np.ndarray,
    w: np.ndarray,
    b: np.ndarray,
) -> tuple[np.ndarray, tuple]:
    """Sum of transformed in-neighbor states per node for one relation."""
    m, z = h.shape
    if w.shape != (z, z) or b.shape != (z,):
        raise ShapeMismatch(f"message weights {w.shape}/{b.shape} vs state width {z}")
    transformed = h @ w.T + b
    out = np.zeros_like(h)
    np.add.at(out, dst, transformed[src])
    return out, (h, src, dst)


def message_pass_backward(
    dout: np.ndarray, cache: tuple, w: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    h, src, dst = cache
    dtrans = np.zeros_like(dout)
    np.add.at(dtrans, src, dout[dst])
    dh = dtrans @ w
    dw = dtrans.T @ h
    db = dtrans.sum(axis=0)
    return dh, dw, db


def aggregate(messages: list[np.ndarray], mode: str = "sum") -> tuple[np.ndarray, tuple]:
    """Combine per-relation message tensors into one (m, z) tensor."""
    if mode == "concat":
        raise UnsupportedAggregator("concat changes the state width; no projection is configured")
    if mode not in AGGREGATORS:
        raise UnsupportedAggregator(mode)
    stacked = np.stack(messages)
    if mode == "sum":
        return stacked.sum(axis=0), (mode, len(messages), None)
    if mode == "mean":
        return stacked.mean(axis=0), (mode, len(messages), None)
    winner = stacked.argmax(axis=0)
    out = np.take_along_axis(stacked, winner[None], axis=0)[0]
    return out, (mode, len(messages), winner)


def aggregate_backward(dout: np.ndarray, cache: tuple) -> list[np.ndarray]:
    mode, k, winner = cache
    if mode == "sum":
        return [dout.copy() for _ in range(k)]
    if mode == "mean":
        return [dout / k for _ in range(k)]
    grads = []
    for p in range(k):
        g = np.where(winner == p, dout, 0.0)
        grads.append(g)
    return grads


def gru_update(h_prev: np.ndarray, a: np.ndarray, w: GruWeights) -> tuple[np.ndarray, tuple]:
    """Standard GRU cell applied row-wise: update/reset gates and candidate."""
    u = _sigmoid(a @ w.wu.T + h_prev @ w.uu.T + w.bu)
    r = _sigmoid(a @ w.wr.T + h_prev @ w.ur.T + w.br)
    rh = r * h_prev
    c = np.tanh(a @ w.wh.T + rh @ w.uh.T + w.bh)
    h = (1.0 - u) * h_prev + u * c
    return h, (h_prev, a, u, r, rh, c)


def gru_backward(
    dh: np.ndarray, cache: tuple, w: GruWeights
) -> tuple[np.ndarray, np.ndarray, GruWeights]:
    h_prev, a, u, r, rh, c = cache
    du = dh * (c - h_prev)
    dc = dh * u
    dh_prev = dh * (1.0 - u)

    dc_pre = dc * (1.0 - c * c)
    da = dc_pre @ w.wh
    dwh = dc_pre.T @ a
    dbh = dc_pre.sum(axis=0)
    drh = dc_pre @ w.uh
    duh = dc_pre.T @ rh
    dr = drh * h_prev
    dh_prev = dh_prev + drh * r

    dr_pre = dr * r * (1.0 - r)
    da = da + dr_pre @ w.wr
    dwr = dr_pre.T @ a
    dbr = dr_pre.sum(axis=0)
    dh_prev = dh_prev + dr_pre @ w.ur
    dur = dr_pre.T @ h_prev

    du_pre = du * u * (1.0 - u)
    da = da + du_pre @ w.wu
    dwu = du_pre.T @ a
    dbu = du_pre.sum(axis=0)
    dh_prev = dh_prev + du_pre @ w.uu
    duu = du_pre.T @ h_prev

    grads = GruWeights(dwu, duu, dbu, dwr, dur, dbr, dwh, duh, dbh)
    return dh_prev, da, grads


def gru_weights_from(params: dict[str, np.ndarray]) -> GruWeights:
    return GruWeights(*(params[f"gru.{k}"] for k in GruWeights._fields))


def ggnn_forward(
    adj: AdjacencyTensor,
    h0: np.ndarray,
    params: dict[str, np.ndarray],
    rel_keys: tuple[str, ...],
    steps: int,
    aggregator: str = "sum",
) -> tuple[np.ndarray, tuple]:
    """Run `steps` propagation rounds; returns the final states and all
    intermediates needed for backprop through time."""
    gru_w = gru_weights_from(params)
    h = h0
    round_caches = []
    for _t in range(steps):
        messages = []
        mp_caches = []
        for key in rel_keys:
            src, dst = adj.pairs[key]
            msg, c = message_pass(h, src, dst, params[f"msg.{key}.W"], params["msg.b"])
            messages.append(msg)
            mp_caches.append(c)
        agg, agg_cache = aggregate(messages, aggregator)
        h, gru_cache = gru_update(h, agg, gru_w)
        round_caches.append((mp_caches, agg_cache, gru_cache))
    return h, (rel_keys, round_caches)


def ggnn_backward(
    dh: np.ndarray,
    cache: tuple,
    params: dict[str, np.ndarray],
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Gradients of all message/GRU parameters plus the initial states."""
    rel_keys, round_caches = cache
    gru_w = gru_weights_from(params)
    grads: dict[str, np.ndarray] = {
        f"msg.{key}.W": np.zeros_like(params[f"msg.{key}.W"]) for key in rel_keys
    }
    grads["msg.b"] = np.zeros_like(params["msg.b"])
    for name in GruWeights._fields:
        grads[f"gru.{name}"] = np.zeros_like(params[f"gru.{name}"])

    for mp_caches, agg_cache, gru_cache in reversed(round_caches):
        dh_prev, da, gru_grads = gru_backward(dh, gru_cache, gru_w)
        for name, g in zip(GruWeights._fields, gru_grads):
            grads[f"gru.{name}"] += g
        dmessages = aggregate_backward(da, agg_cache)
        for key, mp_cache, dmsg in zip(rel_keys, mp_caches, dmessages):
            dh_c, dw, db = message_pass_backward(dmsg, mp_cache, params[f"msg.{key}.W"])
            dh_prev += dh_c
            grads[f"msg.{key}.W"] += dw
            grads["msg.b"] += db
        dh = dh_prev
    return grads, dh
