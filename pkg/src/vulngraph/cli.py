"""Command-line interface.

Subcommands: graph (extract one function's composite graph), train, eval,
ablate (single-relation vs composite comparison), predict, synth (generate a
labeled synthetic dataset). A base configuration JSON can be supplied with
--config or the VULNGRAPH_CONFIG environment variable; individual flags
override it. Exit codes: 0 success, 1 domain error (lexing/parsing/graph/
model), 2 I/O or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import ALL_RELATION_NAMES, RunConfig
from .datasets import (
    EvalReport,
    build_graphs,
    evaluate,
    format_report_table,
    imbalanced_sample,
    load_jsonl,
    save_jsonl,
    synth_corpus,
)
from .errors import ConfigError, VulnGraphError
from .frontend import Relation, build_code_graph, graph_to_dot, graph_to_json
from .training import Checkpoint, train_from_graphs, write_metrics_csv

CONFIG_ENV = "VULNGRAPH_CONFIG"

_CONFIG_FLAGS = (
    ("d_code", int),
    ("z", int),
    ("steps", int),
    ("reverse_edges", bool),
    ("aggregator", str),
    ("readout", str),
    ("conv_channels", int),
    ("m_max", int),
    ("mask_padding", bool),
    ("window", int),
    ("negatives", int),
    ("embed_epochs", int),
    ("finetune_embeddings", bool),
    ("lam", float),
    ("lr", float),
    ("batch_size", int),
    ("patience", int),
    ("max_epochs", int),
    ("seed", int),
)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="base RunConfig JSON file")
    parser.add_argument("--relations", help="comma-separated relation subset")
    for name, typ in _CONFIG_FLAGS:
        flag = "--" + name.replace("_", "-")
        if typ is bool:
            group = parser.add_mutually_exclusive_group()
            group.add_argument(flag, dest=name, action="store_true", default=None)
            group.add_argument(
                "--no-" + name.replace("_", "-"), dest=name, action="store_false", default=None
            )
        else:
            parser.add_argument(flag, dest=name, type=typ, default=None)


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    base = RunConfig()
    path = args.config or os.environ.get(CONFIG_ENV)
    if path:
        base = RunConfig.from_json(Path(path).read_text())
    overrides = {}
    for name, _typ in _CONFIG_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "relations", None):
        names = []
        for part in args.relations.split(","):
            part = part.strip().upper()
            if part not in ALL_RELATION_NAMES:
                raise ConfigError(f"unknown relation {part!r}")
            names.append(part)
        overrides["relations"] = tuple(names)
    return base.with_overrides(**overrides)


def _relation_subset(args: argparse.Namespace) -> tuple[Relation, ...]:
    if not getattr(args, "relations", None):
        return tuple(Relation)
    return tuple(Relation(p.strip().upper()) for p in args.relations.split(","))


def cmd_graph(args: argparse.Namespace) -> int:
    source = Path(args.input).read_text()
    graph = build_code_graph(source, label=args.label, cap=args.cap)
    relations = _relation_subset(args)
    payload = graph_to_json(graph, relations)
    if args.out:
        Path(args.out).write_text(payload + "\n")
    else:
        print(payload)
    if args.dot:
        Path(args.dot).write_text(graph_to_dot(graph, relations) + "\n")
    return 0


def _load_training_data(path: str, config: RunConfig):
    records, report = load_jsonl(path)
    if report.rejected or report.warnings:
        print(report.summary(), file=sys.stderr)
    pairs, graph_report = build_graphs(records, cap=config.m_max)
    if graph_report.rejected:
        print(graph_report.summary(), file=sys.stderr)
    from .frontend import tokenize

    graphs = [g for _, g in pairs]
    streams = [[t.text for t in tokenize(r.code)] for r, _ in pairs]
    kept = [r for r, _ in pairs]
    return kept, graphs, streams


def cmd_train(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    _records, graphs, streams = _load_training_data(args.dataset, config)
    result = train_from_graphs(graphs, streams, config, threads=args.threads)
    result.checkpoint.save(args.out)
    if args.metrics:
        write_metrics_csv(result.history, args.metrics)
    last = result.history[-1]
    print(
        f"trained {len(result.history)} epochs; best epoch {result.checkpoint.epoch} "
        f"val_f1 {result.checkpoint.best_val_f1:.4f}; final val_acc {last.val_acc:.4f}"
    )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    checkpoint = Checkpoint.load(args.checkpoint)
    records, report = load_jsonl(args.dataset)
    if report.rejected:
        print(report.summary(), file=sys.stderr)
    if args.positive_rate is not None:
        records = imbalanced_sample(records, args.positive_rate, args.sample_seed)
    result = evaluate(checkpoint, records, tag=args.tag)
    if args.out:
        Path(args.out).write_text(json.dumps(result.to_json_dict(), indent=2) + "\n")
    print(format_report_table([result]))
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    records, graphs, streams = _load_training_data(args.dataset, config)
    rows: list[EvalReport] = []
    subsets = [(name, (name,)) for name in ALL_RELATION_NAMES]
    subsets.append(("Composite", ALL_RELATION_NAMES))
    for tag, relations in subsets:
        row_config = config.with_overrides(relations=relations)
        result = train_from_graphs(graphs, streams, row_config, threads=args.threads)
        val_records = [records[i] for i in result.val_indices]
        rows.append(evaluate(result.checkpoint, val_records, tag=tag))
        print(f"{tag}: val_f1 {rows[-1].f1:.4f} acc {rows[-1].accuracy:.4f}", file=sys.stderr)
    table = format_report_table(rows)
    if args.out:
        Path(args.out).write_text(table + "\n")
    if args.json:
        payload = [r.to_json_dict() for r in rows]
        Path(args.json).write_text(json.dumps(payload, indent=2) + "\n")
    print(table)
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    checkpoint = Checkpoint.load(args.checkpoint)
    results = []
    for path in args.files:
        source = Path(path).read_text()
        prob = checkpoint.predict_source(source)
        verdict = "vulnerable" if prob >= 0.5 else "benign"
        results.append({"file": path, "probability": prob, "verdict": verdict})
        print(f"{path}\t{prob:.6f}\t{verdict}")
    if args.json:
        Path(args.json).write_text(json.dumps(results, indent=2) + "\n")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    patterns = tuple(args.patterns.split(",")) if args.patterns else ("overflow",)
    records = synth_corpus(args.n, args.vuln_fraction, args.seed, pattern_set=patterns)
    save_jsonl(records, args.out)
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vulngraph",
        description="Composite code-graph vulnerability detection for a C subset",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("graph", help="extract the composite graph of one function")
    p.add_argument("--input", required=True, help="path to a .c file with one function")
    p.add_argument("--out", help="write graph JSON here (default: stdout)")
    p.add_argument("--dot", help="also write a Graphviz DOT rendering")
    p.add_argument("--relations", help="comma-separated relation subset")
    p.add_argument("--label", type=int, choices=(0, 1), default=None)
    p.add_argument("--cap", type=int, default=500, help="node-count cap")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("train", help="train a model on a JSONL dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--metrics", help="per-epoch metrics CSV path")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a JSONL dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", help="write the report JSON here")
    p.add_argument("--tag", default="eval")
    p.add_argument("--positive-rate", dest="positive_rate", type=float, default=None,
                   help="subsample to this positive rate before scoring")
    p.add_argument("--sample-seed", dest="sample_seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train each single relation plus the composite")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", help="write the comparison table here")
    p.add_argument("--json", help="write the reports as JSON here")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    _add_config_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("predict", help="score function files with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--json", help="write results as JSON here")
    p.add_argument("files", nargs="+")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--vuln-fraction", dest="vuln_fraction", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--patterns", help="comma-separated pattern names (overflow, loop)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except VulnGraphError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
