"""Training loop: Adam on mini-batches, early stopping, binary checkpoints.

Determinism contract: (dataset order, config, seed) fully determine the
trained checkpoint, byte for byte. All randomness flows through one seeded
generator; per-graph gradients are reduced in dataset index order, so worker
threads never change results. Validation loss is monitored for early stopping
(data term only); the checkpoint returned is the one with the best validation
F1, earliest epoch winning ties.
"""

from __future__ import annotations

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .datasets import binary_metrics
from .embedding import (
    EmbeddingTable,
    Vocab,
    compose_code_features,
    encode_nodes,
    node_token_rows,
    scatter_code_gradient,
)
from .errors import CheckpointError, SingleClassDataset
from .frontend import CodeGraph, build_code_graph
from .ggnn import AdjacencyTensor
from .model import GraphSample, NetConfig, backward, forward, init_params

_MAGIC = b"VGCK"
_VERSION = 1


def net_config_of(config: RunConfig) -> NetConfig:
    return NetConfig(
        d=config.d,
        z=config.z,
        steps=config.steps,
        rel_names=config.relations,
        reverse_edges=config.reverse_edges,
        aggregator=config.aggregator,
        readout=config.readout,
        conv_channels=config.conv_channels,
        conv_mlp_hidden=config.conv_mlp_hidden,
        flat_mlp_hidden=config.flat_mlp_hidden,
        m_max=config.m_max,
        mask_padding=config.mask_padding,
    )


def encode_graph(graph: CodeGraph, table: EmbeddingTable, config: RunConfig) -> GraphSample:
    adj = AdjacencyTensor.from_code_graph(graph, config.relation_enums, config.reverse_edges)
    return GraphSample(
        adj=adj,
        x=encode_nodes(graph, table),
        label=graph.label,
        token_rows=node_token_rows(graph, table.vocab),
    )


# -- Adam ----------------------------------------------------------------


@dataclass
class AdamState:
    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @staticmethod
    def init(params: dict[str, np.ndarray]) -> "AdamState":
        return AdamState(
            step=0,
            m={k: np.zeros_like(v) for k, v in params.items()},
            v={k: np.zeros_like(v) for k, v in params.items()},
        )

    def copy(self) -> "AdamState":
        return AdamState(
            step=self.step,
            m={k: v.copy() for k, v in self.m.items()},
            v={k: v.copy() for k, v in self.v.items()},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> dict[str, np.ndarray]:
    """In-place bias-corrected Adam update."""
    state.step += 1
    c1 = 1.0 - beta1**state.step
    c2 = 1.0 - beta2**state.step
    for name, p in params.items():
        g = grads[name]
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        m_hat = state.m[name] / c1
        v_hat = state.v[name] / c2
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params


# -- checkpoint ----------------------------------------------------------


@dataclass
class Checkpoint:
    config: RunConfig
    vocab: Vocab
    table: np.ndarray  # token embedding matrix
    params: dict[str, np.ndarray]
    adam: AdamState
    epoch: int
    best_val_f1: float
    best_val_loss: float
    rng_state: dict

    def net_config(self) -> NetConfig:
        return net_config_of(self.config)

    def embedding_table(self) -> EmbeddingTable:
        return EmbeddingTable(vocab=self.vocab, matrix=self.table)

    def predict_graph(self, graph: CodeGraph) -> float:
        sample = encode_graph(graph, self.embedding_table(), self.config)
        return forward(self.params, self.net_config(), sample)[0]

    def predict_source(self, source: str) -> float:
        graph = build_code_graph(source, cap=self.config.m_max)
        return self.predict_graph(graph)

    # binary container: magic, version, JSON header, named float64 tensors

    def save(self, path: str | Path) -> None:
        header = {
            "config": self.config.to_json_dict(),
            "vocab": self.vocab.to_json_dict(),
            "epoch": self.epoch,
            "adam_step": self.adam.step,
            "best_val_f1": self.best_val_f1,
            "best_val_loss": self.best_val_loss,
            "rng_state": self.rng_state,
        }
        blob = json.dumps(header, sort_keys=True).encode("utf-8")
        tensors: list[tuple[str, np.ndarray]] = [("embed.table", self.table)]
        tensors += list(self.params.items())
        tensors += [(f"adam.m.{k}", v) for k, v in self.adam.m.items()]
        tensors += [(f"adam.v.{k}", v) for k, v in self.adam.v.items()]
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", _VERSION))
            fh.write(struct.pack("<Q", len(blob)))
            fh.write(blob)
            fh.write(struct.pack("<Q", len(tensors)))
            for name, arr in tensors:
                encoded = name.encode("utf-8")
                fh.write(struct.pack("<H", len(encoded)))
                fh.write(encoded)
                fh.write(struct.pack("<B", arr.ndim))
                fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    @staticmethod
    def load(path: str | Path) -> "Checkpoint":
        raw = Path(path).read_bytes()
        if raw[:4] != _MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack_from("<I", raw, 4)
        if version != _VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        (blob_len,) = struct.unpack_from("<Q", raw, 8)
        header = json.loads(raw[16:16 + blob_len].decode("utf-8"))
        offset = 16 + blob_len
        (count,) = struct.unpack_from("<Q", raw, offset)
        offset += 8
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", raw, offset)
            offset += 2
            name = raw[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", raw, offset)
            offset += 1
            shape = struct.unpack_from(f"<{ndim}Q", raw, offset)
            offset += 8 * ndim
            size = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(raw, dtype="<f8", count=size, offset=offset).reshape(shape)
            offset += 8 * size
            tensors[name] = arr.copy()
        table = tensors.pop("embed.table")
        params = {k: v for k, v in tensors.items() if not k.startswith("adam.")}
        adam = AdamState(
            step=header["adam_step"],
            m={k[len("adam.m."):]: v for k, v in tensors.items() if k.startswith("adam.m.")},
            v={k[len("adam.v."):]: v for k, v in tensors.items() if k.startswith("adam.v.")},
        )
        return Checkpoint(
            config=RunConfig.from_json_dict(header["config"]),
            vocab=Vocab.from_json_dict(header["vocab"]),
            table=table,
            params=params,
            adam=adam,
            epoch=header["epoch"],
            best_val_f1=header["best_val_f1"],
            best_val_loss=header["best_val_loss"],
            rng_state=header["rng_state"],
        )


# -- training loop -------------------------------------------------------


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float
    val_f1: float

    def csv_row(self) -> str:
        return (
            f"{self.epoch},{self.train_loss:.6f},{self.val_loss:.6f},"
            f"{self.val_acc:.6f},{self.val_f1:.6f}"
        )


def write_metrics_csv(history: list[EpochMetrics], path: str | Path) -> None:
    lines = ["epoch,train_loss,val_loss,val_acc,val_f1"]
    lines += [row.csv_row() for row in history]
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list[EpochMetrics] = field(default_factory=list)
    train_indices: list[int] = field(default_factory=list)
    val_indices: list[int] = field(default_factory=list)


def split_dataset(n: int, rng: np.random.Generator, train_fraction: float = 0.75):
    perm = rng.permutation(n)
    cut = int(n * train_fraction)
    return perm[:cut], perm[cut:]


def _batch_grads(
    samples: list[GraphSample],
    params: dict[str, np.ndarray],
    net_cfg: NetConfig,
    lam: float,
    pool: ThreadPoolExecutor | None,
    table_grad: np.ndarray | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    def one(sample: GraphSample):
        return backward(params, net_cfg, sample, sample.label, lam)

    if pool is None:
        results = [one(s) for s in samples]
    else:
        results = list(pool.map(one, samples))
    total = {k: np.zeros_like(v) for k, v in params.items()}
    loss_sum = 0.0
    scale = 1.0 / len(samples)
    for sample, (value, grads, dx) in zip(samples, results):  # fixed reduction order
        loss_sum += value
        for k in total:
            total[k] += grads[k]
        if table_grad is not None:
            d_code = table_grad.shape[1]
            scatter_code_gradient(sample.token_rows, dx[:, :d_code] * scale, table_grad)
    return loss_sum * scale, {k: v * scale for k, v in total.items()}


def train(
    samples: list[GraphSample],
    config: RunConfig,
    table: EmbeddingTable,
    threads: int = 1,
) -> TrainResult:
    """Seeded 75/25 split, mini-batch Adam, early stopping on validation loss."""
    labels = {s.label for s in samples}
    if labels != {0, 1}:
        raise SingleClassDataset(f"need both classes, got labels {sorted(labels)}")

    net_cfg = net_config_of(config)
    rng = np.random.default_rng(config.seed)
    # split first so it depends only on (seed, dataset size), letting ablation
    # rows with different relation sets share one validation set
    train_idx, val_idx = split_dataset(len(samples), rng)
    params = init_params(net_cfg, rng)
    table_matrix = table.matrix.copy()
    finetune = config.finetune_embeddings
    opt_params = dict(params)
    if finetune:
        opt_params["embed.table"] = table_matrix
    adam = AdamState.init(opt_params)
    train_set = [samples[i] for i in train_idx]
    val_set = [samples[i] for i in val_idx]

    d_code = table_matrix.shape[1]

    def refresh(sample: GraphSample) -> GraphSample:
        # re-derive the code block of X from the current table
        x = sample.x.copy()
        x[:, :d_code] = compose_code_features(sample.token_rows, table_matrix)
        return GraphSample(adj=sample.adj, x=x, label=sample.label, token_rows=sample.token_rows)

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    history: list[EpochMetrics] = []
    best: tuple[float, dict, AdamState, int, float, np.ndarray] | None = None
    best_val_loss = np.inf
    wait = 0
    try:
        for epoch in range(1, config.max_epochs + 1):
            order = rng.permutation(len(train_set))
            loss_sum = 0.0
            for start in range(0, len(order), config.batch_size):
                batch = [train_set[i] for i in order[start:start + config.batch_size]]
                if finetune:
                    batch = [refresh(s) for s in batch]
                    table_grad = np.zeros_like(table_matrix)
                else:
                    table_grad = None
                batch_loss, grads = _batch_grads(
                    batch, params, net_cfg, config.lam, pool, table_grad
                )
                loss_sum += batch_loss * len(batch)
                if finetune:
                    grads["embed.table"] = table_grad
                adam_step(opt_params, grads, adam, config.lr)

            val_eval = [refresh(s) for s in val_set] if finetune else val_set
            probs = [forward(params, net_cfg, s)[0] for s in val_eval]
            y_true = [s.label for s in val_set]
            val_loss = -float(
                np.mean(
                    [
                        y * np.log(max(p, 1e-12)) + (1 - y) * np.log(max(1 - p, 1e-12))
                        for p, y in zip(probs, y_true)
                    ]
                )
            )
            preds = [1 if p >= 0.5 else 0 for p in probs]
            metrics = binary_metrics(y_true, preds)
            row = EpochMetrics(
                epoch=epoch,
                train_loss=loss_sum / len(train_set),
                val_loss=val_loss,
                val_acc=metrics["accuracy"],
                val_f1=metrics["f1"],
            )
            history.append(row)

            if best is None or metrics["f1"] > best[0]:
                best = (
                    metrics["f1"],
                    {k: v.copy() for k, v in params.items()},
                    adam.copy(),
                    epoch,
                    val_loss,
                    table_matrix.copy(),
                )
            if val_loss < best_val_loss:
                best_val_loss = val_loss
                wait = 0
            else:
                wait += 1
                if wait >= config.patience:
                    break
    finally:
        if pool is not None:
            pool.shutdown()

    best_f1, best_params, best_adam, best_epoch, best_loss, best_table = best
    checkpoint = Checkpoint(
        config=config,
        vocab=table.vocab,
        table=best_table,
        params=best_params,
        adam=best_adam,
        epoch=best_epoch,
        best_val_f1=best_f1,
        best_val_loss=best_loss,
        rng_state=_jsonable_rng_state(rng),
    )
    return TrainResult(
        checkpoint=checkpoint,
        history=history,
        train_indices=[int(i) for i in train_idx],
        val_indices=[int(i) for i in val_idx],
    )


def _jsonable_rng_state(rng: np.random.Generator) -> dict:
    state = rng.bit_generator.state
    return json.loads(json.dumps(state))


def train_from_graphs(
    graphs: list[CodeGraph],
    streams: list[list[str]],
    config: RunConfig,
    threads: int = 1,
) -> TrainResult:
    """Full pipeline on labeled graphs: vocabulary, token embedding, encoding,
    then the training loop. `streams` is the token corpus for the embedding."""
    from .embedding import build_vocab, train_skipgram

    vocab = build_vocab(streams)
    table = train_skipgram(
        streams,
        vocab,
        d_code=config.d_code,
        window=config.window,
        negatives=config.negatives,
        epochs=config.embed_epochs,
        seed=config.seed,
    )
    samples = [encode_graph(g, table, config) for g in graphs]
    return train(samples, config, table, threads=threads)
