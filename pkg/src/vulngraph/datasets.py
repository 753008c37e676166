"""Corpora: JSONL ingestion, synthetic labeled functions, sampling, metrics.

The synthetic generator substitutes for unavailable labeled corpora. Each
function pair shares an identical token multiset; the label depends only on
*where* an addition over parameter-derived bounded (short) values sits
relative to a guarding comparison on its control-flow path. Vulnerable
functions leave that addition unguarded and guard a harmless int addition
instead; benign twins swap the two. A bag-of-tokens classifier therefore
stays near chance, which `token_frequency_accuracy` measures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyDataset, InsufficientPositives, VulnGraphError
from .frontend import CodeGraph, build_code_graph, source_digest


@dataclass(frozen=True)
class CorpusRecord:
    id: str
    project: str
    label: int
    code: str


@dataclass
class RejectionReport:
    rejected: list[tuple[str, str]] = field(default_factory=list)  # (record id / line, reason)
    warnings: list[str] = field(default_factory=list)

    def reject(self, key: str, reason: str) -> None:
        self.rejected.append((key, reason))

    def summary(self) -> str:
        lines = [f"rejected {len(self.rejected)}, warnings {len(self.warnings)}"]
        lines += [f"  {key}: {reason}" for key, reason in self.rejected]
        lines += [f"  warning: {w}" for w in self.warnings]
        return "\n".join(lines)


def load_jsonl(path: str | Path) -> tuple[list[CorpusRecord], RejectionReport]:
    """One record per line: {"id", "project", "label", "code"}.

    Malformed lines land in the rejection report instead of being dropped
    silently; duplicate code (same digest) is kept with a warning.
    """
    report = RejectionReport()
    records: list[CorpusRecord] = []
    seen_digests: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")  # propagates OSError
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        key = f"line {lineno}"
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            report.reject(key, f"invalid JSON: {exc.msg}")
            continue
        if not isinstance(data, dict):
            report.reject(key, "not a JSON object")
            continue
        missing = [k for k in ("id", "project", "label", "code") if k not in data]
        if missing:
            report.reject(key, f"missing fields: {', '.join(missing)}")
            continue
        if data["label"] not in (0, 1):
            report.reject(key, "label out of range")
            continue
        if not isinstance(data["code"], str) or not data["code"].strip():
            report.reject(key, "empty code")
            continue
        record = CorpusRecord(
            id=str(data["id"]), project=str(data["project"]), label=int(data["label"]),
            code=data["code"],
        )
        digest = source_digest(record.code)
        if digest in seen_digests:
            report.warnings.append(
                f"{record.id}: duplicate source_hash of {seen_digests[digest]} (both kept)"
            )
        else:
            seen_digests[digest] = record.id
        records.append(record)
    if not records:
        raise EmptyDataset(f"{path}: no valid records")
    return records, report


def save_jsonl(records: list[CorpusRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps({"id": r.id, "project": r.project, "label": r.label, "code": r.code}))
            fh.write("\n")


def build_graphs(
    records: list[CorpusRecord], cap: int = 500
) -> tuple[list[tuple[CorpusRecord, CodeGraph]], RejectionReport]:
    """Parse every record into a code graph; failures go to the report."""
    report = RejectionReport()
    out = []
    for record in records:
        try:
            graph = build_code_graph(record.code, label=record.label, cap=cap)
        except VulnGraphError as exc:
            report.reject(record.id, f"{type(exc).__name__}: {exc}")
            continue
        out.append((record, graph))
    return out, report


# -- synthetic corpus ------------------------------------------------------

_NAME_POOL = ("va", "vb", "vc", "vd", "ve", "vf", "vg", "vh", "vk", "vm", "vn", "vp")
_FN_POOL = ("calc", "proc", "track", "mix", "step", "fold", "scan", "tally")


def _lit(rng: np.random.Generator) -> str:
    return str(int(rng.integers(1, 9999)))


def _gen_overflow(rng: np.random.Generator, vulnerable: bool) -> str:
    """Addition over short values derived from parameters, either missing a
    range-limiting guard on its control-flow path or guarded in the wrong
    direction. Two balanced shapes:

      placement  vulnerable: the short addition runs unconditionally while a
                 harmless int addition sits inside the guard; benign swaps them.
      direction  the short addition is guarded in both, but the vulnerable
                 guard is a lower bound (operand > L), which cannot prevent
                 overflow, while the benign one is an upper bound (operand < L);
                 a decoy guard around the int addition balances the comparators.
    """
    names = list(rng.permutation(_NAME_POOL))
    p0, p1, s0, s1, d0, d1 = names[:6]
    fn = _FN_POOL[int(rng.integers(len(_FN_POOL)))]

    decls = [
        f"short {s0} = {p0};",
        f"short {s1} = {p1};",
        f"int {d0} = {_lit(rng)};",
        f"int {d1} = {_lit(rng)};",
    ]
    extra = int(rng.integers(0, 3))
    extra_names = names[6:6 + extra]
    for name in extra_names:
        decls.append(f"int {name} = {_lit(rng)};")
    order = rng.permutation(len(decls))
    decls = [decls[i] for i in order]

    filler = [f"{name} = {name} * {int(rng.integers(2, 9))};" for name in extra_names]

    shorts = (s0, s1, p0, p1)
    target = s0 if rng.random() < 0.5 else s1
    other = shorts[int(rng.integers(2, 4))] if rng.random() < 0.4 else (s1 if target == s0 else s0)
    operands = (target, other) if rng.random() < 0.5 else (other, target)
    guard_var = operands[int(rng.integers(2))]
    if guard_var in (p0, p1):
        guard_var = target  # guards read a declared short operand
    safe_target = d0 if rng.random() < 0.5 else d1
    risky = f"{target} = {operands[0]} + {operands[1]};"
    safe = f"{safe_target} = {d0} + {d1};"
    lim1, lim2 = _lit(rng), _lit(rng)

    if rng.random() < 0.5:  # placement shape: upper-bound guard, swap contents
        if vulnerable:
            tail = [f"if ({guard_var} < {lim1}) {{ {safe} }}", risky]
        else:
            tail = [f"if ({guard_var} < {lim1}) {{ {risky} }}", safe]
    else:  # direction shape: guarded either way, comparators balanced by decoy
        main_op, decoy_op = (">", "<") if vulnerable else ("<", ">")
        main = f"if ({guard_var} {main_op} {lim1}) {{ {risky} }}"
        decoy = f"if ({safe_target} {decoy_op} {lim2}) {{ {safe} }}"
        tail = [main, decoy] if rng.random() < 0.5 else [decoy, main]
    ret = f"return {target};"

    body = "\n    ".join(decls + filler + tail + [ret])
    return f"short {fn}(short {p0}, short {p1}) {{\n    {body}\n}}"


def _gen_loop(rng: np.random.Generator, vulnerable: bool) -> str:
    """Accumulating addition of a parameter inside a loop, guarded or not."""
    names = list(rng.permutation(_NAME_POOL))
    p0, p1, acc, cnt, d0 = names[:5]
    fn = _FN_POOL[int(rng.integers(len(_FN_POOL)))]
    bound = int(rng.integers(2, 9))
    lim = _lit(rng)

    risky = f"{acc} = {acc} + {p0};"
    safe = f"{d0} = {d0} + 1;"
    if vulnerable:
        loop_body = [risky, f"if ({d0} > {lim}) {{ {safe} }}"]
    else:
        loop_body = [safe, f"if ({acc} > {lim}) {{ {risky} }}"]
    loop_body.append(f"{cnt} = {cnt} + 1;")
    inner = " ".join(loop_body)

    lines = [
        f"short {acc} = {p1};",
        f"int {cnt} = 0;",
        f"int {d0} = {_lit(rng)};",
        f"while ({cnt} < {bound}) {{ {inner} }}",
        f"return {acc};",
    ]
    body = "\n    ".join(lines)
    return f"short {fn}(short {p0}, short {p1}) {{\n    {body}\n}}"


_PATTERNS = {"overflow": _gen_overflow, "loop": _gen_loop}
DEFAULT_PATTERNS = ("overflow",)


def synth_corpus(
    n: int,
    vuln_fraction: float,
    seed: int,
    pattern_set: tuple[str, ...] = DEFAULT_PATTERNS,
) -> list[CorpusRecord]:
    """Deterministic labeled corpus with exactly round(n * vuln_fraction)
    vulnerable functions, shuffled."""
    if n < 2 or not 0.0 < vuln_fraction < 1.0:
        raise ValueError("need n >= 2 and 0 < vuln_fraction < 1")
    rng = np.random.default_rng(seed)
    n_vuln = round(n * vuln_fraction)
    labels = [1] * n_vuln + [0] * (n - n_vuln)
    # one child generator per record: a record's tokens are then identical
    # whichever label is requested, so classes cannot differ lexically
    child_seeds = rng.integers(0, 2**63 - 1, size=n)
    records = []
    for i, label in enumerate(labels):
        child = np.random.default_rng(child_seeds[i])
        pattern = pattern_set[int(child.integers(len(pattern_set)))]
        code = _PATTERNS[pattern](child, vulnerable=bool(label))
        records.append(
            CorpusRecord(id=f"synth-{seed}-{i:05d}", project=f"synth/{pattern}", label=label, code=code)
        )
    order = rng.permutation(n)
    return [records[i] for i in order]


def token_frequency_accuracy(records: list[CorpusRecord], seed: int = 0) -> float:
    """Accuracy of a token-frequency-only classifier (per-token log odds,
    summed over the function's tokens). Used to verify the synthetic corpus
    does not leak labels lexically."""
    from .frontend import tokenize

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(records))
    cut = len(records) // 2
    train = [records[i] for i in order[:cut]]
    test = [records[i] for i in order[cut:]]

    counts: dict[str, list[int]] = {}
    totals = [1.0, 1.0]
    for rec in train:
        for tok in tokenize(rec.code):
            counts.setdefault(tok.text, [1, 1])[rec.label] += 1
            totals[rec.label] += 1
    correct = 0
    for rec in test:
        score = 0.0
        for tok in tokenize(rec.code):
            c0, c1 = counts.get(tok.text, (1, 1))
            score += np.log((c1 / totals[1]) / (c0 / totals[0]))
        if (score > 0) == bool(rec.label):
            correct += 1
    return correct / len(test)


def imbalanced_sample(
    records: list[CorpusRecord],
    positive_rate: float,
    seed: int,
    size: int | None = None,
) -> list[CorpusRecord]:
    """Seeded subsample with the requested positive rate (to the nearest
    record). Without an explicit size, the largest feasible sample is used."""
    if not 0.0 < positive_rate < 1.0:
        raise ValueError(f"positive_rate must be in (0, 1), got {positive_rate}")
    pos = [r for r in records if r.label == 1]
    neg = [r for r in records if r.label == 0]
    if size is None:
        size = min(int(len(pos) / positive_rate), int(len(neg) / (1.0 - positive_rate)))
    n_pos = round(size * positive_rate)
    n_neg = size - n_pos
    if n_pos < 1 or n_pos > len(pos):
        raise InsufficientPositives(f"need {n_pos} positives, have {len(pos)}")
    if n_neg > len(neg):
        raise InsufficientPositives(f"need {n_neg} negatives, have {len(neg)}")
    rng = np.random.default_rng(seed)
    chosen = [pos[i] for i in rng.choice(len(pos), n_pos, replace=False)]
    chosen += [neg[i] for i in rng.choice(len(neg), n_neg, replace=False)]
    order = rng.permutation(len(chosen))
    return [chosen[i] for i in order]


# -- metrics ---------------------------------------------------------------


def binary_metrics(y_true, y_pred) -> dict[str, float]:
    """Accuracy, precision/recall/F1 on the positive class, confusion counts."""
    tp = fp = tn = fn = 0
    for t, p in zip(y_true, y_pred):
        if p == 1 and t == 1:
            tp += 1
        elif p == 1 and t == 0:
            fp += 1
        elif p == 0 and t == 0:
            tn += 1
        else:
            fn += 1
    n = tp + fp + tn + fn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {
        "accuracy": (tp + tn) / n if n else 0.0,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "tp": tp,
        "fp": fp,
        "tn": tn,
        "fn": fn,
        "n": n,
    }


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    f1: float
    precision: float
    recall: float
    tp: int
    fp: int
    tn: int
    fn: int
    n: int
    tag: str = ""
    config_digest: str = ""

    @staticmethod
    def from_metrics(metrics: dict, tag: str = "", config_digest: str = "") -> "EvalReport":
        return EvalReport(
            accuracy=metrics["accuracy"],
            f1=metrics["f1"],
            precision=metrics["precision"],
            recall=metrics["recall"],
            tp=metrics["tp"],
            fp=metrics["fp"],
            tn=metrics["tn"],
            fn=metrics["fn"],
            n=metrics["n"],
            tag=tag,
            config_digest=config_digest,
        )

    def to_json_dict(self) -> dict:
        return {
            "tag": self.tag,
            "config_digest": self.config_digest,
            "accuracy": self.accuracy,
            "f1": self.f1,
            "precision": self.precision,
            "recall": self.recall,
            "confusion": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "n": self.n,
        }


def format_report_table(reports: list[EvalReport]) -> str:
    header = f"{'tag':<18} {'acc':>7} {'f1':>7} {'prec':>7} {'rec':>7} {'n':>5}  config"
    lines = [header, "-" * len(header)]
    for r in reports:
        lines.append(
            f"{r.tag:<18} {r.accuracy:7.4f} {r.f1:7.4f} {r.precision:7.4f} "
            f"{r.recall:7.4f} {r.n:5d}  {r.config_digest}"
        )
    return "\n".join(lines)


def evaluate(model, records: list[CorpusRecord], tag: str = "") -> EvalReport:
    """Score records with a trained model at threshold 0.5."""
    y_true = [r.label for r in records]
    y_pred = [1 if model.predict_source(r.code) >= 0.5 else 0 for r in records]
    digest = model.config.digest() if hasattr(model, "config") else ""
    return EvalReport.from_metrics(binary_metrics(y_true, y_pred), tag=tag, config_digest=digest)


# -- random functions for structural testing --------------------------------


def random_function(
    rng: np.random.Generator, allow_loops: bool = True, max_statements: int = 12
) -> str:
    """A random well-formed subset function: every variable declared before
    use, loop bodies non-empty, no statement after a return."""
    declared: list[str] = []
    names = list(rng.permutation(_NAME_POOL))

    def fresh() -> str | None:
        return names.pop() if names else None

    def expr(depth: int = 0) -> str:
        roll = rng.random()
        if depth >= 2 or not declared or roll < 0.35:
            return _lit(rng)
        if roll < 0.75:
            return declared[int(rng.integers(len(declared)))]
        op = ("+", "-", "*")[int(rng.integers(3))]
        return f"{expr(depth + 1)} {op} {expr(depth + 1)}"

    def condition() -> str:
        op = ("<", ">", "==", "!=", "<=", ">=")[int(rng.integers(6))]
        lhs = declared[int(rng.integers(len(declared)))] if declared else _lit(rng)
        return f"{lhs} {op} {expr(1)}"

    budget = int(rng.integers(2, max_statements + 1))

    def statements(depth: int) -> list[str]:
        nonlocal budget
        out = []
        count = int(rng.integers(1, 4))
        for _ in range(count):
            if budget <= 0:
                break
            roll = rng.random()
            if roll < 0.4 or not declared:
                name = fresh()
                if name is None:
                    continue
                ty = "int" if rng.random() < 0.5 else "short"
                out.append(f"{ty} {name} = {expr()};")
                declared.append(name)
                budget -= 1
            elif roll < 0.7:
                target = declared[int(rng.integers(len(declared)))]
                out.append(f"{target} = {expr()};")
                budget -= 1
            elif roll < 0.85 and depth < 2 and budget >= 2:
                budget -= 1
                inner = statements(depth + 1)
                if inner:
                    block = " ".join(inner)
                    if rng.random() < 0.3:
                        alt = statements(depth + 1)
                        alt_block = " ".join(alt) if alt else ""
                        out.append(f"if ({condition()}) {{ {block} }} else {{ {alt_block} }}")
                    else:
                        out.append(f"if ({condition()}) {{ {block} }}")
            elif allow_loops and depth < 2 and budget >= 2 and declared:
                budget -= 2
                target = declared[int(rng.integers(len(declared)))]
                kind = rng.random()
                body = f"{target} = {target} + {_lit(rng)};"
                if kind < 0.5:
                    counter = fresh()
                    if counter is None:
                        out.append(f"{target} = {expr()};")
                        continue
                    declared.append(counter)
                    out.append(
                        f"for (int {counter} = 0; {counter} < {int(rng.integers(2, 6))}; "
                        f"{counter} = {counter} + 1) {{ {body} }}"
                    )
                else:
                    guard = declared[int(rng.integers(len(declared)))]
                    out.append(f"while ({guard} > {_lit(rng)}) {{ {guard} = {guard} - {_lit(rng)}; }}")
        return out

    n_params = int(rng.integers(0, 3))
    params = []
    for _ in range(n_params):
        name = fresh()
        if name is None:
            break
        ty = "short" if rng.random() < 0.5 else "int"
        params.append(f"{ty} {name}")
        declared.append(name)
    body = statements(0)
    ret_val = declared[int(rng.integers(len(declared)))] if declared and rng.random() < 0.8 else _lit(rng)
    body.append(f"return {ret_val};")
    fn = _FN_POOL[int(rng.integers(len(_FN_POOL)))]
    joined = "\n    ".join(body)
    return f"int {fn}({', '.join(params)}) {{\n    {joined}\n}}"
