"""Scikit-learn style wrappers around the graph pipeline.

CodeGraphTransformer turns source strings into composite code graphs;
GraphVulnClassifier is the end-to-end classifier (token embedding, gated
graph layers, readout) with fit / predict / predict_proba and get_params, so
it drops into sklearn pipelines and model-selection tooling. Constructor
defaults are the desk-scale configuration; pass the published configuration's
values explicitly for full-size runs.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .config import ALL_RELATION_NAMES, RunConfig
from .datasets import binary_metrics
from .errors import VulnGraphError
from .frontend import CodeGraph, build_code_graph, tokenize
from .training import encode_graph, train, train_from_graphs


def _as_graph(item: str | CodeGraph, cap: int, label: int | None = None) -> CodeGraph:
    if isinstance(item, CodeGraph):
        return item
    return build_code_graph(item, label=label, cap=cap)


def _token_stream(item: str | CodeGraph) -> list[str]:
    if isinstance(item, CodeGraph):
        return [node.code for node in item.nodes if node.is_leaf]
    return [tok.text for tok in tokenize(item)]


class CodeGraphTransformer(BaseEstimator, TransformerMixin):
    """Stateless source-to-graph transformer.

    Parameters
    ----------
    cap : reject functions with more AST nodes than this.
    on_error : "raise" propagates frontend errors, "skip" drops bad inputs.
    """

    def __init__(self, cap: int = 500, on_error: str = "raise"):
        self.cap = cap
        self.on_error = on_error

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> list[CodeGraph]:
        graphs = []
        for item in X:
            try:
                graphs.append(_as_graph(item, self.cap))
            except VulnGraphError:
                if self.on_error != "skip":
                    raise
        return graphs


class GraphVulnClassifier(BaseEstimator, ClassifierMixin):
    """Vulnerable/benign classifier over C-subset functions.

    fit accepts source strings or prebuilt CodeGraphs plus 0/1 labels; predict
    scores at threshold 0.5. Training performs its own seeded 75/25
    train/validation split with early stopping, mirroring the command-line
    trainer, and stores the winning checkpoint in ``checkpoint_``.
    """

    def __init__(
        self,
        d_code: int = 16,
        z: int = 40,
        steps: int = 4,
        relations: tuple[str, ...] = ALL_RELATION_NAMES,
        reverse_edges: bool = False,
        aggregator: str = "sum",
        readout: str = "conv",
        conv_channels: int = 8,
        conv_mlp_hidden: tuple[int, ...] = (),
        flat_mlp_hidden: tuple[int, ...] = (16,),
        m_max: int = 96,
        mask_padding: bool = True,
        window: int = 5,
        negatives: int = 5,
        embed_epochs: int = 3,
        finetune_embeddings: bool = False,
        lam: float = 1e-4,
        lr: float = 2e-3,
        batch_size: int = 16,
        patience: int = 100,
        max_epochs: int = 100,
        seed: int = 0,
        threads: int = 1,
    ):
        self.d_code = d_code
        self.z = z
        self.steps = steps
        self.relations = relations
        self.reverse_edges = reverse_edges
        self.aggregator = aggregator
        self.readout = readout
        self.conv_channels = conv_channels
        self.conv_mlp_hidden = conv_mlp_hidden
        self.flat_mlp_hidden = flat_mlp_hidden
        self.m_max = m_max
        self.mask_padding = mask_padding
        self.window = window
        self.negatives = negatives
        self.embed_epochs = embed_epochs
        self.finetune_embeddings = finetune_embeddings
        self.lam = lam
        self.lr = lr
        self.batch_size = batch_size
        self.patience = patience
        self.max_epochs = max_epochs
        self.seed = seed
        self.threads = threads

    def run_config(self) -> RunConfig:
        return RunConfig(
            d_code=self.d_code,
            z=self.z,
            steps=self.steps,
            relations=tuple(self.relations),
            reverse_edges=self.reverse_edges,
            aggregator=self.aggregator,
            readout=self.readout,
            conv_channels=self.conv_channels,
            conv_mlp_hidden=tuple(self.conv_mlp_hidden),
            flat_mlp_hidden=tuple(self.flat_mlp_hidden),
            m_max=self.m_max,
            mask_padding=self.mask_padding,
            window=self.window,
            negatives=self.negatives,
            embed_epochs=self.embed_epochs,
            finetune_embeddings=self.finetune_embeddings,
            lam=self.lam,
            lr=self.lr,
            batch_size=self.batch_size,
            patience=self.patience,
            max_epochs=self.max_epochs,
            seed=self.seed,
        )

    def fit(self, X, y):
        config = self.run_config()
        labels = np.asarray(y, dtype=int)
        if len(labels) != len(X):
            raise ValueError(f"{len(X)} inputs but {len(labels)} labels")
        graphs = []
        streams = []
        for item, label in zip(X, labels):
            graph = _as_graph(item, config.m_max, label=int(label))
            if graph.label != int(label):
                graph = CodeGraph(
                    nodes=graph.nodes,
                    edge_sets=graph.edge_sets,
                    label=int(label),
                    source_hash=graph.source_hash,
                )
            graphs.append(graph)
            streams.append(_token_stream(item))
        result = train_from_graphs(graphs, streams, config, threads=self.threads)
        self.classes_ = np.array([0, 1])
        self.checkpoint_ = result.checkpoint
        self.history_ = result.history
        self.val_indices_ = result.val_indices
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "checkpoint_")
        cap = self.checkpoint_.config.m_max
        probs = []
        for item in X:
            graph = _as_graph(item, cap)
            probs.append(self.checkpoint_.predict_graph(graph))
        p1 = np.asarray(probs)
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)

    def score(self, X, y) -> float:
        return binary_metrics(np.asarray(y, dtype=int), self.predict(X))["accuracy"]
