"""Initial node features: corpus-trained token embeddings plus a type one-hot.

The token embedding is a skip-gram model with negative sampling, trained
in-process so runs are bit-reproducible from a seed (library trainers hash
tokens at process level, which breaks that). Updates are applied in fixed-size
chunks; within a chunk, repeated rows accumulate.

Each node's code text is embedded as the mean of its token vectors and
concatenated with a one-hot encoding of the node type; the node state vector
is that feature row left-padded into a wider hidden vector with zeros.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyCorpus, HiddenTooSmall
from .frontend import CodeGraph, NODE_TYPE_INDEX, NUM_NODE_TYPES

OOV_TOKEN = "<oov>"
OOV_INDEX = 0

_MAGIC = b"VGEM"
_LR_START = 0.025
_LR_MIN = 1e-4


@dataclass(frozen=True)
class Vocab:
    token_to_index: dict[str, int]
    index_to_token: tuple[str, ...]
    counts: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.index_to_token)

    def lookup(self, token: str) -> int:
        return self.token_to_index.get(token, OOV_INDEX)

    def to_json_dict(self) -> dict:
        return {"tokens": list(self.index_to_token), "counts": list(self.counts)}

    @staticmethod
    def from_json_dict(data: dict) -> "Vocab":
        tokens = tuple(data["tokens"])
        return Vocab(
            token_to_index={t: i for i, t in enumerate(tokens)},
            index_to_token=tokens,
            counts=tuple(data["counts"]),
        )


def build_vocab(corpus) -> Vocab:
    """Deterministic vocabulary over token streams: index 0 is reserved for
    out-of-vocabulary tokens, the rest are ordered by (-frequency, token)."""
    freq: dict[str, int] = {}
    for stream in corpus:
        for token in stream:
            freq[token] = freq.get(token, 0) + 1
    if not freq:
        raise EmptyCorpus("no tokens in corpus")
    ordered = sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))
    tokens = (OOV_TOKEN,) + tuple(t for t, _ in ordered)
    counts = (0,) + tuple(c for _, c in ordered)
    return Vocab(
        token_to_index={t: i for i, t in enumerate(tokens)},
        index_to_token=tokens,
        counts=counts,
    )


@dataclass
class EmbeddingTable:
    vocab: Vocab
    matrix: np.ndarray  # (|V|, d_code) float64

    @property
    def d_code(self) -> int:
        return self.matrix.shape[1]

    def vector(self, token: str) -> np.ndarray:
        return self.matrix[self.vocab.lookup(token)]

    def save(self, path: str | Path, vocab_path: str | Path | None = None) -> None:
        """Binary table: magic, |V|, d_code, then row-major float32 rows."""
        data = self.matrix.astype("<f4")
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<II", data.shape[0], data.shape[1]))
            fh.write(data.tobytes(order="C"))
        if vocab_path is not None:
            Path(vocab_path).write_text(json.dumps(self.vocab.to_json_dict()))

    @staticmethod
    def load(path: str | Path, vocab_path: str | Path) -> "EmbeddingTable":
        raw = Path(path).read_bytes()
        if raw[:4] != _MAGIC:
            raise ValueError("not an embedding table file")
        rows, cols = struct.unpack("<II", raw[4:12])
        matrix = np.frombuffer(raw[12:], dtype="<f4").reshape(rows, cols).astype(np.float64)
        vocab = Vocab.from_json_dict(json.loads(Path(vocab_path).read_text()))
        return EmbeddingTable(vocab=vocab, matrix=matrix)


def _init_matrix(vocab_size: int, d_code: int, rng: np.random.Generator) -> np.ndarray:
    mat = (rng.random((vocab_size, d_code)) - 0.5) / d_code
    return mat


def _finalize_oov(matrix: np.ndarray) -> None:
    if matrix.shape[0] > 1:
        matrix[OOV_INDEX] = matrix[1:].mean(axis=0)
    else:
        matrix[OOV_INDEX] = 0.0


def skipgram_pair_loss(w_in: np.ndarray, w_out: np.ndarray, centers, contexts, negatives) -> float:
    """Mean negative-sampling objective over the given pairs (lower is better)."""
    vc = w_in[centers]
    pos = 1.0 / (1.0 + np.exp(-np.einsum("bd,bd->b", vc, w_out[contexts])))
    neg = 1.0 / (1.0 + np.exp(np.einsum("bd,bkd->bk", vc, w_out[negatives])))
    eps = 1e-12
    return float(-(np.log(pos + eps).sum() + np.log(neg + eps).sum()) / len(centers))


def train_skipgram(
    corpus,
    vocab: Vocab,
    d_code: int = 100,
    window: int = 5,
    negatives: int = 5,
    epochs: int = 5,
    seed: int = 0,
    chunk: int = 512,
) -> EmbeddingTable:
    """Skip-gram with negative sampling over token streams."""
    rng = np.random.default_rng(seed)
    vsize = len(vocab)
    w_in = _init_matrix(vsize, d_code, rng)
    w_out = np.zeros((vsize, d_code))

    centers_list: list[int] = []
    contexts_list: list[int] = []
    for stream in corpus:
        idx = [vocab.lookup(t) for t in stream]
        for i, c in enumerate(idx):
            lo = max(0, i - window)
            hi = min(len(idx), i + window + 1)
            for j in range(lo, hi):
                if j != i:
                    centers_list.append(c)
                    contexts_list.append(idx[j])
    if not centers_list:
        _finalize_oov(w_in)
        return EmbeddingTable(vocab=vocab, matrix=w_in)

    centers = np.asarray(centers_list, dtype=np.int64)
    contexts = np.asarray(contexts_list, dtype=np.int64)
    counts = np.asarray(vocab.counts, dtype=np.float64)
    noise = counts**0.75
    noise /= noise.sum()

    total_chunks = epochs * ((len(centers) + chunk - 1) // chunk)
    step = 0
    for _epoch in range(epochs):
        order = rng.permutation(len(centers))
        for start in range(0, len(order), chunk):
            sel = order[start:start + chunk]
            c = centers[sel]
            o = contexts[sel]
            neg = rng.choice(vsize, size=(len(sel), negatives), p=noise)
            lr = max(_LR_MIN, _LR_START * (1.0 - step / total_chunks))
            step += 1

            vc = w_in[c]
            u_pos = w_out[o]
            u_neg = w_out[neg]
            g_pos = 1.0 / (1.0 + np.exp(-np.einsum("bd,bd->b", vc, u_pos))) - 1.0
            g_neg = 1.0 / (1.0 + np.exp(-np.einsum("bd,bkd->bk", vc, u_neg)))

            grad_vc = g_pos[:, None] * u_pos + np.einsum("bk,bkd->bd", g_neg, u_neg)
            np.add.at(w_in, c, -lr * grad_vc)
            np.add.at(w_out, o, -lr * g_pos[:, None] * vc)
            np.add.at(
                w_out,
                neg.ravel(),
                (-lr * g_neg[..., None] * vc[:, None, :]).reshape(-1, d_code),
            )

    _finalize_oov(w_in)
    return EmbeddingTable(vocab=vocab, matrix=w_in)


def encode_nodes(graph: CodeGraph, table: EmbeddingTable) -> np.ndarray:
    """Initial node feature matrix X, shape (m, d_code + #node-types).

    The code block is the mean embedding of the node's code tokens (the
    out-of-vocabulary row for unseen tokens, zeros when a node carries no
    code); the type block is a one-hot over node types.
    """
    m = graph.num_nodes
    d_code = table.d_code
    x = np.zeros((m, d_code + NUM_NODE_TYPES))
    for node in graph.nodes:
        tokens = node.code.split()
        if tokens:
            rows = [table.vocab.lookup(t) for t in tokens]
            x[node.id, :d_code] = table.matrix[rows].mean(axis=0)
        x[node.id, d_code + NODE_TYPE_INDEX[node.node_type]] = 1.0
    return x


def node_token_rows(graph: CodeGraph, vocab: Vocab) -> tuple[np.ndarray, ...]:
    """Vocabulary row indices of each node's code tokens (empty for nodes
    without code). Lets training propagate gradients back into the table."""
    return tuple(
        np.asarray([vocab.lookup(t) for t in node.code.split()], dtype=np.int64)
        for node in graph.nodes
    )


def compose_code_features(
    token_rows: tuple[np.ndarray, ...], matrix: np.ndarray
) -> np.ndarray:
    """Mean token embedding per node from the current table."""
    out = np.zeros((len(token_rows), matrix.shape[1]))
    for j, rows in enumerate(token_rows):
        if len(rows):
            out[j] = matrix[rows].mean(axis=0)
    return out


def scatter_code_gradient(
    token_rows: tuple[np.ndarray, ...], dx_code: np.ndarray, out: np.ndarray
) -> None:
    """Accumulate the per-node code-feature gradient into table rows."""
    for j, rows in enumerate(token_rows):
        if len(rows):
            np.add.at(out, rows, dx_code[j] / len(rows))


def init_hidden(x: np.ndarray, z: int) -> np.ndarray:
    """Node states: the feature row in the leading columns, zeros after."""
    m, d = x.shape
    if z < d:
        raise HiddenTooSmall(z, d)
    h = np.zeros((m, z))
    h[:, :d] = x
    return h
